use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{gauss_quadrature, PolyFamily};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::prepruning::BinaryMask;

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 64;

/// `f^m(x) = sum_i coeffs[i][m] phi_i(x)` for `m < outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytronRecord", into = "PolytronRecord")]
pub struct PolytronLayer {
    family: PolyFamily,
    coeffs: Matrix,
    mask: Option<BinaryMask>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolytronRecord {
    family: PolyFamily,
    degree: usize,
    outputs: usize,
    /// Column-major: all coefficients of output 0, then output 1, ...
    coeffs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<BinaryMask>,
}

impl TryFrom<PolytronRecord> for PolytronLayer {
    type Error = Error;

    fn try_from(r: PolytronRecord) -> Result<Self> {
        let rows = r.degree + 1;
        if r.coeffs.len() != rows * r.outputs {
            return Err(Error::Format(format!(
                "polytron of degree {} with {} outputs needs {} coefficients, found {}",
                r.degree,
                r.outputs,
                rows * r.outputs,
                r.coeffs.len()
            )));
        }
        let mut m = Matrix::zeros(rows, r.outputs);
        for j in 0..r.outputs {
            for i in 0..rows {
                m[(i, j)] = r.coeffs[j * rows + i];
            }
        }
        PolytronLayer::new(r.family, m, r.mask)
    }
}

impl From<PolytronLayer> for PolytronRecord {
    fn from(p: PolytronLayer) -> Self {
        let (rows, cols) = p.coeffs.shape();
        let mut coeffs = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            coeffs.extend(p.coeffs.column(j));
        }
        PolytronRecord {
            family: p.family,
            degree: rows - 1,
            outputs: cols,
            coeffs,
            mask: p.mask,
        }
    }
}

impl PolytronLayer {
    /// Validates shape, finiteness and the mask; masked coefficients must
    /// already be zero.
    pub fn new(family: PolyFamily, coeffs: Matrix, mask: Option<BinaryMask>) -> Result<Self> {
        let (rows, cols) = coeffs.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("polytron needs degree >= 0 and >= 1 output".into()));
        }
        if rows - 1 > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!("degree {} exceeds {MAX_DEGREE}", rows - 1)));
        }
        if !coeffs.is_finite() {
            return Err(Error::NonFinite("polytron coefficients".into()));
        }
        if let Some(m) = &mask {
            if m.shape() != (rows, cols) {
                return Err(Error::ShapeMismatch {
                    expected_rows: rows,
                    expected_cols: cols,
                    rows: m.rows(),
                    cols: m.cols(),
                });
            }
            if coeffs.as_slice().iter().zip(m.bits()).any(|(&c, &b)| b == 0 && c != 0.0) {
                return Err(Error::InvalidArgument("masked coefficients must be zero".into()));
            }
        }
        Ok(Self { family, coeffs, mask })
    }

    pub fn zeros(family: PolyFamily, degree: usize, outputs: usize) -> Result<Self> {
        Self::new(family, Matrix::zeros(degree + 1, outputs), None)
    }

    pub fn family(&self) -> PolyFamily {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.coeffs.rows() - 1
    }

    pub fn outputs(&self) -> usize {
        self.coeffs.cols()
    }

    pub fn coeffs(&self) -> &Matrix {
        &self.coeffs
    }

    pub fn mask(&self) -> Option<&BinaryMask> {
        self.mask.as_ref()
    }

    /// Coefficient column of output `m`.
    pub fn output_coeffs(&self, m: usize) -> Vec<f64> {
        self.coeffs.column(m).collect()
    }

    /// One recurrence sweep, then one dot product per output.
    pub fn forward(&self, x: f64) -> Vec<f64> {
        let mut basis = vec![0.0; self.degree() + 1];
        self.family.eval_all(x, &mut basis);
        let mut out = vec![0.0; self.outputs()];
        self.coeffs.left_mul(&basis, &mut out);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// How sample residuals are weighted in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Multiply each squared residual by the family weight `Psi(x)`.
    #[default]
    Psi,
    Unweighted,
}

impl Weighting {
    fn factor(self, family: PolyFamily, x: f64) -> f64 {
        match self {
            Weighting::Psi => family.weight(x),
            Weighting::Unweighted => 1.0,
        }
    }
}

fn check_batch(layer_outputs: usize, xs: &[f64], ys: &Matrix) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if ys.rows() != xs.len() || ys.cols() != layer_outputs {
        return Err(Error::DimensionMismatch(format!(
            "{} abscissae and {}x{} targets for {} outputs",
            xs.len(),
            ys.rows(),
            ys.cols(),
            layer_outputs
        )));
    }
    if xs.iter().chain(ys.as_slice()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("batch values".into()));
    }
    Ok(())
}

/// `J = 1/2 sum_x Psi(x) sum_m (y_m - f^m(x))^2`.
pub fn polytron_objective(layer: &PolytronLayer, xs: &[f64], ys: &Matrix, weighting: Weighting) -> Result<f64> {
    check_batch(layer.outputs(), xs, ys)?;
    let mut acc = 0.0;
    for (s, &x) in xs.iter().enumerate() {
        let psi = weighting.factor(layer.family, x);
        let f = layer.forward(x);
        acc += psi * f.iter().zip(ys.row(s)).map(|(a, b)| (b - a) * (b - a)).sum::<f64>();
    }
    Ok(0.5 * acc)
}

/// Gradient of [`polytron_objective`]:
/// `dJ/dw_km = -sum_x Psi(x) (y_m - f^m(x)) phi_k(x)`. Masked entries are
/// reported as zero.
pub fn polytron_gradient(layer: &PolytronLayer, xs: &[f64], ys: &Matrix, weighting: Weighting) -> Result<Matrix> {
    check_batch(layer.outputs(), xs, ys)?;
    let rows = layer.degree() + 1;
    let mut grad = Matrix::zeros(rows, layer.outputs());
    let mut basis = vec![0.0; rows];
    let mut f = vec![0.0; layer.outputs()];
    for (s, &x) in xs.iter().enumerate() {
        let psi = weighting.factor(layer.family, x);
        layer.family.eval_all(x, &mut basis);
        layer.coeffs.left_mul(&basis, &mut f);
        for m in 0..layer.outputs() {
            let r = psi * (ys[(s, m)] - f[m]);
            for k in 0..rows {
                grad[(k, m)] -= r * basis[k];
            }
        }
    }
    if let Some(mask) = &layer.mask {
        for (g, &b) in grad.as_mut_slice().iter_mut().zip(mask.bits()) {
            if b == 0 {
                *g = 0.0;
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitMode {
    /// Weighted least squares solved directly.
    NormalEquations,
    /// Full-batch gradient descent from zero on the sample-mean objective.
    Gradient { lr: f64, steps: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub layer: PolytronLayer,
    /// Weighted mean squared residual after each solve or step.
    pub residual_trace: Vec<f64>,
}

fn weighted_mse(coeffs: &Matrix, design: &[Vec<f64>], psi: &[f64], ys: &Matrix) -> f64 {
    let mut f = vec![0.0; coeffs.cols()];
    let mut acc = 0.0;
    for (s, basis) in design.iter().enumerate() {
        coeffs.left_mul(basis, &mut f);
        acc += psi[s] * f.iter().zip(ys.row(s)).map(|(a, b)| (b - a) * (b - a)).sum::<f64>();
    }
    acc / (design.len() * coeffs.cols()) as f64
}

/// Fits one polytron to samples `(xs[s], ys.row(s))`.
pub fn fit_polytron(
    xs: &[f64],
    ys: &Matrix,
    family: PolyFamily,
    degree: usize,
    mode: FitMode,
    weighting: Weighting,
    mask: Option<BinaryMask>,
) -> Result<FitResult> {
    let mut layer = PolytronLayer::zeros(family, degree, ys.cols())?;
    if let Some(m) = &mask {
        if m.shape() != layer.coeffs.shape() {
            return Err(Error::ShapeMismatch {
                expected_rows: degree + 1,
                expected_cols: ys.cols(),
                rows: m.rows(),
                cols: m.cols(),
            });
        }
    }
    layer.mask = mask;
    check_batch(ys.cols(), xs, ys)?;
    let rows = degree + 1;
    let design: Vec<Vec<f64>> = xs
        .iter()
        .map(|&x| {
            let mut b = vec![0.0; rows];
            family.eval_all(x, &mut b);
            b
        })
        .collect();
    let psi: Vec<f64> = xs.iter().map(|&x| weighting.factor(family, x)).collect();
    let active = |k: usize, m: usize| layer.mask.as_ref().is_none_or(|mask| mask.get(k, m) == 1);

    match mode {
        FitMode::NormalEquations => {
            let mut distinct = xs.to_vec();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            if distinct.len() < rows {
                return Err(Error::RankDeficient(format!(
                    "{} distinct abscissae cannot determine {rows} coefficients",
                    distinct.len()
                )));
            }
            let mut coeffs = Matrix::zeros(rows, ys.cols());
            for m in 0..ys.cols() {
                let cols: Vec<usize> = (0..rows).filter(|&k| active(k, m)).collect();
                if cols.is_empty() {
                    continue;
                }
                let a = DMatrix::from_fn(xs.len(), cols.len(), |s, c| psi[s].sqrt() * design[s][cols[c]]);
                let b = DVector::from_fn(xs.len(), |s, _| psi[s].sqrt() * ys[(s, m)]);
                let svd = a.svd(true, true);
                let smax = svd.singular_values.max();
                let smin = svd.singular_values.min();
                if smin.is_nan() || smin <= 1e-12 * smax {
                    return Err(Error::RankDeficient(format!(
                        "weighted design matrix for output {m} has condition {}",
                        smax / smin
                    )));
                }
                let w = svd
                    .solve(&b, 0.0)
                    .map_err(|e| Error::RankDeficient(e.to_string()))?;
                for (c, &k) in cols.iter().enumerate() {
                    coeffs[(k, m)] = w[c];
                }
            }
            let res = weighted_mse(&coeffs, &design, &psi, ys);
            layer.coeffs = coeffs;
            Ok(FitResult {
                layer,
                residual_trace: vec![res],
            })
        }
        FitMode::Gradient { lr, steps } => {
            if !(lr.is_finite() && lr > 0.0) || steps == 0 {
                return Err(Error::InvalidArgument("gradient mode needs lr > 0 and steps >= 1".into()));
            }
            let n = xs.len() as f64;
            let mut trace = Vec::with_capacity(steps);
            let mut f = vec![0.0; ys.cols()];
            let mut grad = Matrix::zeros(rows, ys.cols());
            for _ in 0..steps {
                grad.as_mut_slice().iter_mut().for_each(|g| *g = 0.0);
                for (s, basis) in design.iter().enumerate() {
                    layer.coeffs.left_mul(basis, &mut f);
                    for m in 0..ys.cols() {
                        let r = psi[s] * (ys[(s, m)] - f[m]);
                        for k in 0..rows {
                            grad[(k, m)] -= r * basis[k];
                        }
                    }
                }
                for k in 0..rows {
                    for m in 0..ys.cols() {
                        if active(k, m) {
                            layer.coeffs[(k, m)] -= lr * grad[(k, m)] / n;
                        }
                    }
                }
                if !layer.coeffs.is_finite() {
                    return Err(Error::Diverged { epoch: trace.len() });
                }
                trace.push(weighted_mse(&layer.coeffs, &design, &psi, ys));
            }
            Ok(FitResult {
                layer,
                residual_trace: trace,
            })
        }
    }
}

/// Quadrature estimate of `||f - f^m||^2` under the family weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual: f64,
    pub norm_sq: f64,
    /// `residual / norm_sq`, the empirical truncation ratio.
    pub ratio: f64,
}

pub fn parseval_residual(
    layer: &PolytronLayer,
    output: usize,
    f_true: impl Fn(f64) -> f64,
    nodes: usize,
) -> Result<ResidualReport> {
    if output >= layer.outputs() {
        return Err(Error::InvalidArgument(format!("output {output} out of range")));
    }
    let q = gauss_quadrature(layer.family, nodes.max(2))?;
    let residual = q.integrate(|x| {
        let d = f_true(x) - layer.forward(x)[output];
        d * d
    })?;
    let norm_sq = q.integrate(|x| f_true(x).powi(2))?;
    Ok(ResidualReport {
        residual,
        norm_sq,
        ratio: if norm_sq > 0.0 { residual / norm_sq } else { f64::NAN },
    })
}

/// Orthogonal projection `w_i = <f, phi_i> / <phi_i, phi_i>` of a scalar
/// function onto degrees `0..=degree`.
pub fn project(family: PolyFamily, degree: usize, f: impl Fn(f64) -> f64, nodes: usize) -> Result<PolytronLayer> {
    let q = gauss_quadrature(family, nodes.max(2))?;
    let mut coeffs = Matrix::zeros(degree + 1, 1);
    let mut basis = vec![0.0; degree + 1];
    for (&x, &w) in q.nodes.iter().zip(&q.weights) {
        if w == 0.0 {
            continue;
        }
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("target is {v} at x = {x}")));
        }
        family.eval_all(x, &mut basis);
        for (i, b) in basis.iter().enumerate() {
            coeffs[(i, 0)] += w * v * b;
        }
    }
    for i in 0..=degree {
        coeffs[(i, 0)] /= family.norm_sq(i);
    }
    PolytronLayer::new(family, coeffs, None)
}
