//! Bias-free fully connected networks.
//!
//! A network with architecture `(n0, n1, ..., nd)` holds `d` weight matrices,
//! `W_k` of shape `n_{k-1} x n_k`. Node `j` of layer `k` owns column `j` of `W_k`
//! (its incoming weights) and row `j` of `W_{k+1}` (its outgoing weights).
//! Hidden layers apply one shared activation after the product; the output
//! layer is linear.

mod io;
mod train;

pub use io::{load_network, network_from_json, network_to_json, save_network, NETWORK_FORMAT_VERSION};
pub use train::{loss_and_gradient, mse, train_sgd, SgdConfig, SgdRun};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::rng_from_seed;

/// Layer widths `(n0, ..., nd)` with `d >= 1` and every width positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Architecture(Vec<usize>);

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least an input and an output width, got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "every width must be >= 1, got {widths:?}"
            )));
        }
        Ok(Self(widths))
    }

    pub fn widths(&self) -> &[usize] {
        &self.0
    }

    /// Number of weight matrices.
    pub fn depth(&self) -> usize {
        self.0.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.0[0]
    }

    pub fn output_width(&self) -> usize {
        self.0[self.0.len() - 1]
    }

    /// Widths of layers `1..d-1`.
    pub fn hidden_widths(&self) -> &[usize] {
        &self.0[1..self.0.len() - 1]
    }

    /// Shape of `W_k` for `k` in `1..=d`.
    pub fn layer_shape(&self, k: usize) -> (usize, usize) {
        (self.0[k - 1], self.0[k])
    }
}

impl TryFrom<Vec<usize>> for Architecture {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Architecture> for Vec<usize> {
    fn from(a: Architecture) -> Self {
        a.0
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    /// Parses a comma-separated width list such as `2,8,1`.
    fn from_str(s: &str) -> Result<Self> {
        let widths = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidArchitecture(format!("bad width {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(widths)
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `h`.
    #[inline]
    pub fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

/// Architecture, weights and activation of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    architecture: Architecture,
    weights: Vec<Matrix>,
    activation: Activation,
}

impl NetworkParams {
    /// Validates shapes and finiteness.
    pub fn new(architecture: Architecture, weights: Vec<Matrix>, activation: Activation) -> Result<Self> {
        if weights.len() != architecture.depth() {
            return Err(Error::DimensionMismatch(format!(
                "architecture {architecture} needs {} weight matrices, got {}",
                architecture.depth(),
                weights.len()
            )));
        }
        for (k, w) in weights.iter().enumerate() {
            let (r, c) = architecture.layer_shape(k + 1);
            if w.shape() != (r, c) {
                return Err(Error::ShapeMismatch {
                    expected_rows: r,
                    expected_cols: c,
                    rows: w.rows(),
                    cols: w.cols(),
                });
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("layer {} has non-finite weights", k + 1)));
            }
        }
        Ok(Self {
            architecture,
            weights,
            activation,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// `W_k` with the one-based layer index used throughout.
    pub fn layer(&self, k: usize) -> &Matrix {
        &self.weights[k - 1]
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub(crate) fn from_parts_unchecked(architecture: Architecture, weights: Vec<Matrix>, activation: Activation) -> Self {
        Self {
            architecture,
            weights,
            activation,
        }
    }

    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        self.architecture == other.architecture
    }

    /// Runs the network on one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.architecture.input_width() {
            return Err(Error::DimensionMismatch(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.architecture.input_width()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let d = self.weights.len();
        let mut h = x.to_vec();
        for (k, w) in self.weights.iter().enumerate() {
            let mut next = vec![0.0; w.cols()];
            w.left_mul(&h, &mut next);
            if k + 1 < d {
                next.iter_mut().for_each(|z| *z = self.activation.apply(*z));
            }
            h = next;
        }
        h
    }
}

/// Weights i.i.d. uniform on `[-init_scale, init_scale]`.
pub fn build_network(arch: &Architecture, activation: Activation, init_scale: f64, seed: u64) -> Result<NetworkParams> {
    if !(init_scale >= 0.0 && init_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "init_scale must be a finite non-negative number, got {init_scale}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let weights = (1..=arch.depth())
        .map(|k| {
            let (r, c) = arch.layer_shape(k);
            let data = (0..r * c)
                .map(|_| {
                    let u: f64 = rng.random();
                    init_scale * (2.0 * u - 1.0)
                })
                .collect();
            Matrix::from_vec(r, c, data).expect("shape computed from architecture")
        })
        .collect();
    Ok(NetworkParams::from_parts_unchecked(arch.clone(), weights, activation))
}

/// Inputs and targets, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidArgument("dataset is empty".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let (ni, nt) = (inputs[0].len(), targets[0].len());
        if inputs.iter().any(|x| x.len() != ni) || targets.iter().any(|y| y.len() != nt) {
            return Err(Error::DimensionMismatch("ragged dataset rows".into()));
        }
        if inputs.iter().chain(&targets).flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset value".into()));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    pub fn input_width(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn target_width(&self) -> usize {
        self.targets[0].len()
    }

    pub fn check_against(&self, arch: &Architecture) -> Result<()> {
        if self.input_width() != arch.input_width() || self.target_width() != arch.output_width() {
            return Err(Error::DimensionMismatch(format!(
                "dataset is {}->{}, architecture {arch} is {}->{}",
                self.input_width(),
                self.target_width(),
                arch.input_width(),
                arch.output_width()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(w: &[usize]) -> Architecture {
        Architecture::new(w.to_vec()).unwrap()
    }

    #[test]
    fn architecture_validation() {
        assert!(Architecture::new(vec![3]).is_err());
        assert!(Architecture::new(vec![3, 0, 1]).is_err());
        let a: Architecture = "4, 8,8,2".parse().unwrap();
        assert_eq!(a.depth(), 3);
        assert_eq!(a.hidden_widths(), &[8, 8]);
        assert!("2,x".parse::<Architecture>().is_err());
    }

    #[test]
    fn zero_scale_gives_zero_weights() {
        let p = build_network(&arch(&[2, 3, 1]), Activation::Tanh, 0.0, 7).unwrap();
        assert_eq!(p.layer(1).shape(), (2, 3));
        assert_eq!(p.layer(2).shape(), (3, 1));
        assert!(p.weights().iter().flat_map(|w| w.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_network(&arch(&[2, 3, 1]), Activation::Tanh, 0.5, 7).unwrap();
        let b = build_network(&arch(&[2, 3, 1]), Activation::Tanh, 0.5, 7).unwrap();
        let bits = |p: &NetworkParams| -> Vec<u64> {
            p.weights().iter().flat_map(|w| w.as_slice()).map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let c = build_network(&arch(&[2, 3, 1]), Activation::Tanh, 0.5, 8).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn build_respects_scale_and_shapes() {
        let p = build_network(&arch(&[4, 8, 8, 2]), Activation::Tanh, 0.5, 1).unwrap();
        let shapes: Vec<_> = p.weights().iter().map(Matrix::shape).collect();
        assert_eq!(shapes, vec![(4, 8), (8, 8), (8, 2)]);
        for w in p.weights() {
            for &v in w.as_slice() {
                assert!(v.abs() <= 0.5);
            }
        }
    }

    #[test]
    fn negative_scale_rejected() {
        assert!(build_network(&arch(&[1, 1]), Activation::Tanh, -1.0, 0).is_err());
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let p = build_network(&arch(&[3, 5, 2]), Activation::Tanh, 0.0, 0).unwrap();
        assert_eq!(p.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_network_passes_input_through() {
        let p = NetworkParams::new(
            arch(&[2, 2, 2]),
            vec![Matrix::identity(2), Matrix::identity(2)],
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(p.forward(&[0.3, -1.7]).unwrap(), vec![0.3, -1.7]);
    }

    #[test]
    fn odd_hidden_pair_cancels() {
        let p = NetworkParams::new(
            arch(&[1, 2, 1]),
            vec![
                Matrix::from_rows(&[vec![1.0, -1.0]]),
                Matrix::from_rows(&[vec![0.5], vec![0.5]]),
            ],
            Activation::Tanh,
        )
        .unwrap();
        let y = p.forward(&[1.0]).unwrap();
        let expected = 0.5 * 1f64.tanh() + 0.5 * (-1f64).tanh();
        assert_eq!(y[0], expected);
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let p = build_network(&arch(&[2, 3, 1]), Activation::Tanh, 0.5, 0).unwrap();
        assert!(matches!(p.forward(&[1.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn params_reject_bad_shapes() {
        let r = NetworkParams::new(
            arch(&[2, 3, 1]),
            vec![Matrix::zeros(3, 2), Matrix::zeros(3, 1)],
            Activation::Tanh,
        );
        assert!(matches!(r, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![vec![1.0]], vec![vec![1.0], vec![2.0]]).is_err());
        assert!(Dataset::new(vec![vec![f64::NAN]], vec![vec![1.0]]).is_err());
        let d = Dataset::new(vec![vec![1.0, 2.0]], vec![vec![3.0]]).unwrap();
        assert!(d.check_against(&arch(&[2, 4, 1])).is_ok());
        assert!(d.check_against(&arch(&[3, 4, 1])).is_err());
    }
}
