//! Binary pre-pruning masks with pairwise-distinct columns.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::netcore::{Architecture, Dataset, NetworkParams, SgdConfig, SgdRun};
use crate::seed::rng_from_seed;

/// Redraw rounds before `generate_mask` gives up.
pub const MAX_REPAIR_ROUNDS: usize = 10_000;

/// A 0/1 matrix shaped like the weight matrix it masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaskRecord", into = "MaskRecord")]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    rho: f64,
    seed: Option<u64>,
    bits: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskRecord {
    rows: usize,
    cols: usize,
    rho: f64,
    bits: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl TryFrom<MaskRecord> for BinaryMask {
    type Error = Error;

    fn try_from(r: MaskRecord) -> Result<Self> {
        if r.bits.len() != r.rows * r.cols {
            return Err(Error::Format(format!(
                "mask declares {}x{} but carries {} bits",
                r.rows,
                r.cols,
                r.bits.len()
            )));
        }
        if r.bits.iter().any(|&b| b > 1) {
            return Err(Error::Format("mask bits must be 0 or 1".into()));
        }
        if !(0.0..1.0).contains(&r.rho) {
            return Err(Error::Format(format!("mask rho {} outside [0, 1)", r.rho)));
        }
        Ok(BinaryMask {
            rows: r.rows,
            cols: r.cols,
            rho: r.rho,
            seed: r.seed,
            bits: r.bits,
        })
    }
}

impl From<BinaryMask> for MaskRecord {
    fn from(m: BinaryMask) -> Self {
        MaskRecord {
            rows: m.rows,
            cols: m.cols,
            rho: m.rho,
            bits: m.bits,
            seed: m.seed,
        }
    }
}

impl BinaryMask {
    /// Mask of all ones.
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            rho: 0.0,
            seed: None,
            bits: vec![1; rows * cols],
        }
    }

    /// Wraps explicit row-major bits.
    pub fn from_bits(rows: usize, cols: usize, rho: f64, bits: Vec<u8>) -> Result<Self> {
        MaskRecord {
            rows,
            cols,
            rho,
            bits,
            seed: None,
        }
        .try_into()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.bits[i * self.cols + j]
    }

    pub fn zero_fraction(&self) -> f64 {
        self.bits.iter().filter(|&&b| b == 0).count() as f64 / self.bits.len() as f64
    }

    fn column(&self, j: usize) -> Vec<u8> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn has_distinct_columns(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        (0..self.cols).all(|j| seen.insert(self.column(j)))
    }

    /// The mask as a 0.0/1.0 matrix.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.bits.iter().map(|&b| f64::from(b)).collect())
            .expect("bits length checked at construction")
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn distinct_patterns_available(rows: usize, cols: usize) -> bool {
    rows >= usize::BITS as usize - 1 || (1usize << rows) >= cols
}

/// Draws a Bernoulli mask (zero with probability `rho`) and redraws
/// duplicated columns until all columns differ.
pub fn generate_mask(rows: usize, cols: usize, rho: f64, seed: u64) -> Result<BinaryMask> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
    }
    if !distinct_patterns_available(rows, cols) {
        return Err(Error::InfeasibleMask(format!(
            "{rows} rows admit at most 2^{rows} distinct columns, {cols} requested"
        )));
    }
    if rho == 0.0 && cols > 1 {
        return Err(Error::InfeasibleMask(
            "rho = 0 yields identical all-ones columns".into(),
        ));
    }

    let mut rng = rng_from_seed(seed);
    let draw = |rng: &mut crate::seed::Rng| -> u8 { u8::from(rng.random::<f64>() >= rho) };
    let mut bits: Vec<u8> = (0..rows * cols).map(|_| draw(&mut rng)).collect();

    for _ in 0..MAX_REPAIR_ROUNDS {
        let mut first_seen: HashMap<Vec<u8>, usize> = HashMap::with_capacity(cols);
        let mut duplicates = Vec::new();
        for j in 0..cols {
            let col: Vec<u8> = (0..rows).map(|i| bits[i * cols + j]).collect();
            match first_seen.entry(col) {
                Entry::Occupied(_) => duplicates.push(j),
                Entry::Vacant(slot) => {
                    slot.insert(j);
                }
            }
        }
        if duplicates.is_empty() {
            return Ok(BinaryMask {
                rows,
                cols,
                rho,
                seed: Some(seed),
                bits,
            });
        }
        for j in duplicates {
            for i in 0..rows {
                bits[i * cols + j] = draw(&mut rng);
            }
        }
    }
    Err(Error::RetryBudgetExhausted(MAX_REPAIR_ROUNDS))
}

/// Union bound `C(cols, 2) * (rho^2 + (1 - rho)^2)^rows`, clamped to `[0, 1]`.
///
/// This is also the expected number of identical column pairs in a raw
/// (unrepaired) draw.
pub fn collision_probability(rows: usize, cols: usize, rho: f64) -> f64 {
    let pairs = cols as f64 * (cols as f64 - 1.0) / 2.0;
    let p = rho * rho + (1.0 - rho) * (1.0 - rho);
    (pairs * p.powi(rows as i32)).clamp(0.0, 1.0)
}

/// Hadamard product `W ∘ B`.
pub fn apply_mask(w: &Matrix, mask: &BinaryMask) -> Result<Matrix> {
    if w.shape() != mask.shape() {
        return Err(Error::ShapeMismatch {
            expected_rows: w.rows(),
            expected_cols: w.cols(),
            rows: mask.rows(),
            cols: mask.cols(),
        });
    }
    let data = w
        .as_slice()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &b)| if b == 1 { v } else { 0.0 })
        .collect();
    Matrix::from_vec(w.rows(), w.cols(), data)
}

fn check_masks(params: &NetworkParams, masks: &[Option<BinaryMask>]) -> Result<()> {
    if masks.len() != params.weights().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} masks for {} layers",
            masks.len(),
            params.weights().len()
        )));
    }
    for (k, (m, w)) in masks.iter().zip(params.weights()).enumerate() {
        if let Some(m) = m {
            if m.shape() != w.shape() {
                return Err(Error::DimensionMismatch(format!(
                    "mask for layer {} is {}x{}, weights are {}x{}",
                    k + 1,
                    m.rows(),
                    m.cols(),
                    w.rows(),
                    w.cols()
                )));
            }
        }
    }
    Ok(())
}

/// Applies one optional mask per layer.
pub fn mask_network(params: &NetworkParams, masks: &[Option<BinaryMask>]) -> Result<NetworkParams> {
    check_masks(params, masks)?;
    let weights = params
        .weights()
        .iter()
        .zip(masks)
        .map(|(w, m)| match m {
            Some(m) => apply_mask(w, m),
            None => Ok(w.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkParams::new(params.architecture().clone(), weights, params.activation())
}

/// Widens every hidden layer to `ceil(n / (1 - rho))`.
pub fn inflate_width(arch: &Architecture, rho: f64) -> Result<Architecture> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {rho}")));
    }
    let w = arch.widths();
    let last = w.len() - 1;
    let widths = w
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            if k == 0 || k == last {
                return n;
            }
            let exact = n as f64 / (1.0 - rho);
            let nearest = exact.round();
            // absorb rounding noise such as 3 / (1 - 2/3) = 9.000000000000002
            if (exact - nearest).abs() <= 1e-9 * exact {
                nearest as usize
            } else {
                exact.ceil() as usize
            }
        })
        .collect();
    Architecture::new(widths)
}

/// SGD with masked entries held at zero: the masks are applied before the
/// first step and after every update.
pub fn train_masked(
    params: &NetworkParams,
    masks: &[Option<BinaryMask>],
    data: &Dataset,
    cfg: &SgdConfig,
) -> Result<(NetworkParams, Vec<f64>)> {
    check_masks(params, masks)?;
    if cfg.epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be >= 1".into()));
    }
    let projection = masks
        .iter()
        .zip(params.weights())
        .map(|(m, w)| match m {
            Some(m) => m.to_matrix(),
            None => {
                let mut ones = Matrix::zeros(w.rows(), w.cols());
                ones.as_mut_slice().iter_mut().for_each(|v| *v = 1.0);
                ones
            }
        })
        .collect();
    let mut run = SgdRun::new(params.clone(), data, cfg.lr, cfg.batch_size, cfg.seed)?.with_projection(projection)?;
    let trace = (0..cfg.epochs).map(|_| run.epoch(data)).collect::<Result<Vec<_>>>()?;
    Ok((run.into_params(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{build_network, train_sgd, Activation};
    use proptest::prelude::*;

    #[test]
    fn infeasible_shapes() {
        assert!(matches!(generate_mask(1, 3, 0.5, 0), Err(Error::InfeasibleMask(_))));
        assert!(matches!(generate_mask(8, 2, 0.0, 0), Err(Error::InfeasibleMask(_))));
        assert!(generate_mask(3, 3, 1.0, 0).is_err());
        let single = generate_mask(5, 1, 0.0, 0).unwrap();
        assert!(single.bits().iter().all(|&b| b == 1));
    }

    #[test]
    fn square_mask_is_distinct_with_target_rate() {
        let m = generate_mask(64, 64, 0.5, 3).unwrap();
        assert!(m.has_distinct_columns());
        assert!((m.zero_fraction() - 0.5).abs() <= 0.05, "{}", m.zero_fraction());
    }

    #[test]
    fn tight_shapes_get_repaired() {
        // 4 rows, 16 columns: every pattern must appear exactly once
        let m = generate_mask(4, 16, 0.5, 11).unwrap();
        assert!(m.has_distinct_columns());
        assert_eq!(m.zero_fraction(), 0.5);
    }

    #[test]
    fn pathological_rate_exhausts_retries() {
        assert!(matches!(
            generate_mask(2, 4, 0.999_999, 1),
            Err(Error::RetryBudgetExhausted(_))
        ));
    }

    #[test]
    fn collision_bound_values() {
        let p = collision_probability(20, 10, 0.5);
        assert!((p - 45.0 * 0.5f64.powi(20)).abs() < 1e-18);
        assert!((p - 4.29e-5).abs() < 1e-7);
        assert_eq!(collision_probability(20, 1, 0.5), 0.0);
        assert_eq!(collision_probability(7, 2, 0.0), 1.0);
        assert_eq!(collision_probability(1, 50, 0.5), 1.0);
    }

    #[test]
    fn hadamard_products() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let eye = BinaryMask::from_bits(2, 2, 0.5, vec![1, 0, 0, 1]).unwrap();
        assert_eq!(apply_mask(&w, &eye).unwrap().as_slice(), &[1.0, 0.0, 0.0, 4.0]);
        assert_eq!(apply_mask(&w, &BinaryMask::ones(2, 2)).unwrap(), w);
        let zeros = BinaryMask::from_bits(2, 1, 0.5, vec![0, 0]).unwrap();
        let col = Matrix::from_rows(&[vec![5.0], vec![6.0]]);
        assert!(apply_mask(&col, &zeros).unwrap().as_slice().iter().all(|&v| v == 0.0));
        assert!(apply_mask(&col, &eye).is_err());
    }

    #[test]
    fn inflation() {
        let a = Architecture::new(vec![3, 8, 8, 2]).unwrap();
        assert_eq!(inflate_width(&a, 0.0).unwrap(), a);
        assert_eq!(inflate_width(&a, 0.5).unwrap().widths(), &[3, 16, 16, 2]);
        let b = Architecture::new(vec![1, 10, 1]).unwrap();
        assert_eq!(inflate_width(&b, 0.2).unwrap().widths(), &[1, 13, 1]);
        let c = Architecture::new(vec![1, 3, 1]).unwrap();
        assert_eq!(inflate_width(&c, 2.0 / 3.0).unwrap().widths(), &[1, 9, 1]);
        assert!(inflate_width(&a, 1.0).is_err());
    }

    #[test]
    fn json_schema() {
        let m = generate_mask(3, 4, 0.5, 9).unwrap();
        let text = m.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["rows"], 3);
        assert_eq!(v["bits"].as_array().unwrap().len(), 12);
        assert_eq!(BinaryMask::from_json(&text).unwrap(), m);
        assert!(BinaryMask::from_json(r#"{"rows":1,"cols":2,"rho":0.5,"bits":[1]}"#).is_err());
        assert!(BinaryMask::from_json(r#"{"rows":1,"cols":2,"rho":0.5,"bits":[1,2]}"#).is_err());
    }

    fn xor_like_data() -> Dataset {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                let x1 = -1.0 + 2.0 * f64::from(i) / 7.0;
                let x2 = -1.0 + 2.0 * f64::from(j) / 7.0;
                inputs.push(vec![x1, x2]);
                targets.push(vec![x1 - x2]);
            }
        }
        Dataset::new(inputs, targets).unwrap()
    }

    #[test]
    fn all_ones_masks_match_plain_sgd() {
        let a = Architecture::new(vec![2, 5, 1]).unwrap();
        let p = build_network(&a, Activation::Tanh, 0.5, 4).unwrap();
        let data = xor_like_data();
        let cfg = SgdConfig {
            lr: 0.05,
            epochs: 20,
            batch_size: 8,
            seed: 12,
        };
        let masks = vec![Some(BinaryMask::ones(2, 5)), Some(BinaryMask::ones(5, 1))];
        let (q1, t1) = train_masked(&p, &masks, &data, &cfg).unwrap();
        let (q2, t2) = train_sgd(&p, &data, &cfg).unwrap();
        assert_eq!(q1, q2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn zero_lr_leaves_masked_params_unchanged() {
        let a = Architecture::new(vec![2, 4, 1]).unwrap();
        let p = build_network(&a, Activation::Tanh, 0.5, 4).unwrap();
        let masks = vec![Some(generate_mask(2, 4, 0.5, 1).unwrap()), None];
        let masked = mask_network(&p, &masks).unwrap();
        let cfg = SgdConfig {
            lr: 0.0,
            epochs: 3,
            batch_size: 4,
            seed: 0,
        };
        let (q, _) = train_masked(&masked, &masks, &xor_like_data(), &cfg).unwrap();
        assert_eq!(q, masked);
    }

    #[test]
    fn masked_entries_stay_zero_through_training() {
        let a = Architecture::new(vec![2, 8, 1]).unwrap();
        let p = build_network(&a, Activation::Tanh, 0.5, 5).unwrap();
        let masks = vec![
            Some(BinaryMask::from_bits(2, 8, 0.5, (0..16).map(|i| (i % 3 != 0) as u8).collect()).unwrap()),
            Some(generate_mask(8, 1, 0.5, 7).unwrap()),
        ];
        let cfg = SgdConfig {
            lr: 0.05,
            epochs: 500,
            batch_size: 16,
            seed: 8,
        };
        let (q, _) = train_masked(&p, &masks, &xor_like_data(), &cfg).unwrap();
        for (w, m) in q.weights().iter().zip(&masks) {
            let m = m.as_ref().unwrap();
            for (v, &b) in w.as_slice().iter().zip(m.bits()) {
                if b == 0 {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn mask_count_mismatch_is_rejected() {
        let a = Architecture::new(vec![2, 4, 1]).unwrap();
        let p = build_network(&a, Activation::Tanh, 0.5, 4).unwrap();
        assert!(mask_network(&p, &[None]).is_err());
        assert!(mask_network(&p, &[Some(BinaryMask::ones(4, 2)), None]).is_err());
    }

    proptest! {
        #[test]
        fn masks_are_deterministic(rows in 3usize..12, cols in 1usize..8, rho in 0.05f64..0.95, seed in any::<u64>()) {
            let a = generate_mask(rows, cols, rho, seed);
            let b = generate_mask(rows, cols, rho, seed);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    prop_assert!(a.has_distinct_columns());
                    prop_assert_eq!(a, b);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "determinism broken"),
            }
        }

        #[test]
        fn hadamard_is_idempotent(seed in any::<u64>()) {
            let m = generate_mask(6, 5, 0.5, seed).unwrap();
            let a = Architecture::new(vec![6, 5]).unwrap();
            let w = build_network(&a, Activation::Tanh, 1.0, seed).unwrap().layer(1).clone();
            let once = apply_mask(&w, &m).unwrap();
            prop_assert_eq!(apply_mask(&once, &m).unwrap(), once);
        }
    }
}
