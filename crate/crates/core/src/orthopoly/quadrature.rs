use nalgebra::{DMatrix, SymmetricEigen};

use super::PolyFamily;
use crate::error::{Error, Result};

/// Gaussian quadrature rule matched to a family weight: exact for
/// `integral p(x) Psi(x) dx` whenever `deg p <= 2 * len - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_k w_k f(x_k)`; errors on a non-finite sample at a node that
    /// carries weight.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("integrand is {v} at x = {x}")));
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

/// Jacobi matrix of the monic three-term recurrence, eigen-decomposed.
fn golub_welsch(family: PolyFamily, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let fi = i as f64;
        j[(i, i)] = match family {
            PolyFamily::Laguerre => 2.0 * fi + 1.0,
            _ => 0.0,
        };
        if i + 1 < n {
            let k = (i + 1) as f64;
            let off = match family {
                PolyFamily::Laguerre => k,
                _ => k / (4.0 * k * k - 1.0).sqrt(),
            };
            j[(i, i + 1)] = off;
            j[(i + 1, i)] = off;
        }
    }
    let eig = SymmetricEigen::new(j);
    let mu0 = match family {
        PolyFamily::Laguerre => 1.0,
        PolyFamily::Legendre => 2.0,
        PolyFamily::Chebyshev => std::f64::consts::PI,
    };
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Newton steps on `phi_n`; a step that turns non-finite is discarded.
fn polish(family: PolyFamily, n: usize, x0: f64) -> f64 {
    let mut x = x0;
    for _ in 0..3 {
        let step = family.eval(n, x) / family.derivative(n, x);
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// `n`-point Gauss rule for the family weight. Laguerre and Legendre nodes
/// come from the Golub-Welsch eigenproblem refined by Newton steps, with
/// weights from the first eigenvector components (these stay accurate where
/// the closed-form weight expressions lose digits to the long recurrence).
/// Chebyshev nodes and weights are closed-form.
pub fn gauss_quadrature(family: PolyFamily, n: usize) -> Result<Quadrature> {
    if n == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
    }
    if family == PolyFamily::Chebyshev {
        let nodes = (1..=n)
            .rev()
            .map(|k| ((2 * k - 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos())
            .collect();
        return Ok(Quadrature {
            nodes,
            weights: vec![std::f64::consts::PI / n as f64; n],
        });
    }
    let (raw, weights) = golub_welsch(family, n);
    let nodes = raw
        .into_iter()
        .map(|x0| {
            let x = polish(family, n, x0);
            if (x - x0).abs() <= 1e-6 * x0.abs().max(1.0) {
                x
            } else {
                x0
            }
        })
        .collect();
    Ok(Quadrature { nodes, weights })
}

/// `<f, g> = integral f g Psi` by `nodes`-point Gauss quadrature.
pub fn inner_product(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    family: PolyFamily,
    nodes: usize,
) -> Result<f64> {
    if nodes < 2 {
        return Err(Error::InvalidArgument(format!("inner product needs >= 2 nodes, got {nodes}")));
    }
    gauss_quadrature(family, nodes)?.integrate(|x| f(x) * g(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laguerre_rule_integrates_moments() {
        // integral x^k e^-x = k!
        let q = gauss_quadrature(PolyFamily::Laguerre, 8).unwrap();
        let mut fact = 1.0;
        for k in 0..16 {
            if k > 0 {
                fact *= f64::from(k);
            }
            let v = q.integrate(|x| x.powi(k)).unwrap();
            assert!((v - fact).abs() <= 1e-10 * fact, "k={k} {v} {fact}");
        }
    }

    #[test]
    fn legendre_and_chebyshev_moments() {
        let q = gauss_quadrature(PolyFamily::Legendre, 6).unwrap();
        for k in 0..12 {
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / f64::from(k + 1) };
            assert!((q.integrate(|x| x.powi(k)).unwrap() - exact).abs() < 1e-13);
        }
        // integral x^2 / sqrt(1 - x^2) = pi / 2
        let c = gauss_quadrature(PolyFamily::Chebyshev, 5).unwrap();
        assert!((c.integrate(|x| x * x).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
    }

    #[test]
    fn spec_inner_products() {
        let l = |i: usize| move |x: f64| PolyFamily::Laguerre.eval(i, x);
        assert!(inner_product(l(2), l(3), PolyFamily::Laguerre, 8).unwrap().abs() < 1e-10);
        assert!((inner_product(l(0), l(0), PolyFamily::Laguerre, 8).unwrap() - 1.0).abs() < 1e-12);
        let xl1 = inner_product(|x| x, l(1), PolyFamily::Laguerre, 8).unwrap();
        assert!((xl1 + 1.0).abs() < 1e-10);
    }

    #[test]
    fn orthogonality_all_families() {
        for fam in [PolyFamily::Laguerre, PolyFamily::Legendre, PolyFamily::Chebyshev] {
            for i in 0..=8 {
                for j in 0..=8 {
                    let nodes = ((i + j) / 2 + 1).max(2);
                    let v = inner_product(|x| fam.eval(i, x), |x| fam.eval(j, x), fam, nodes).unwrap();
                    let expect = if i == j { fam.norm_sq(i) } else { 0.0 };
                    assert!((v - expect).abs() <= 1e-8, "{fam} {i} {j} {v}");
                }
            }
        }
    }

    #[test]
    fn large_rules_stay_finite() {
        let q = gauss_quadrature(PolyFamily::Laguerre, 200).unwrap();
        assert!(q.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(q.weights.iter().all(|w| w.is_finite() && *w >= 0.0));
        let total: f64 = q.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        let m2 = q.integrate(|x| x * x).unwrap();
        assert!((m2 - 2.0).abs() < 1e-10);
    }

    #[test]
    fn argument_errors() {
        assert!(inner_product(|x| x, |x| x, PolyFamily::Laguerre, 1).is_err());
        assert!(gauss_quadrature(PolyFamily::Legendre, 0).is_err());
        assert!(matches!(
            inner_product(|_| f64::NAN, |x| x, PolyFamily::Legendre, 4),
            Err(Error::NonFinite(_))
        ));
    }
}
