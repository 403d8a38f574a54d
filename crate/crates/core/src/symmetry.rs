//! Hidden-node permutations and functional equivalence.
//!
//! A permutation `p` of layer `k` maps new position `j` to old node `p[j]`:
//! column `j` of the new `W_k` is column `p[j]` of the old one, and row `j` of
//! the new `W_{k+1}` is row `p[j]` of the old one. Indices are zero-based in
//! memory and one-based in the JSON form.

use num_bigint::BigUint;
use num_traits::One;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{Architecture, NetworkParams};
use crate::seed::rng_from_seed;

/// One permutation per hidden layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerPermutationSet {
    perms: Vec<Vec<usize>>,
}

fn is_bijection(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&i| i < p.len() && !std::mem::replace(&mut seen[i], true))
}

impl LayerPermutationSet {
    pub fn new(perms: Vec<Vec<usize>>) -> Result<Self> {
        for (k, p) in perms.iter().enumerate() {
            if !is_bijection(p) {
                return Err(Error::InvalidArgument(format!(
                    "permutation for hidden layer {} is not a bijection: {p:?}",
                    k + 1
                )));
            }
        }
        Ok(Self { perms })
    }

    pub fn identity(arch: &Architecture) -> Self {
        Self {
            perms: arch.hidden_widths().iter().map(|&n| (0..n).collect()).collect(),
        }
    }

    pub fn perms(&self) -> &[Vec<usize>] {
        &self.perms
    }

    pub fn is_identity(&self) -> bool {
        self.perms.iter().all(|p| p.iter().enumerate().all(|(j, &i)| i == j))
    }

    pub fn inverse(&self) -> Self {
        let perms = self
            .perms
            .iter()
            .map(|p| {
                let mut inv = vec![0; p.len()];
                for (j, &i) in p.iter().enumerate() {
                    inv[i] = j;
                }
                inv
            })
            .collect();
        Self { perms }
    }

    /// The set equivalent to applying `self` first and then `then`.
    pub fn then(&self, then: &LayerPermutationSet) -> Result<Self> {
        if self.perms.len() != then.perms.len()
            || self.perms.iter().zip(&then.perms).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::DimensionMismatch("permutation sets of different shapes".into()));
        }
        let perms = self
            .perms
            .iter()
            .zip(&then.perms)
            .map(|(first, second)| second.iter().map(|&j| first[j]).collect())
            .collect();
        Ok(Self { perms })
    }

    fn check_against(&self, arch: &Architecture) -> Result<()> {
        let hidden = arch.hidden_widths();
        if self.perms.len() != hidden.len() || self.perms.iter().zip(hidden).any(|(p, &n)| p.len() != n) {
            let sizes: Vec<usize> = self.perms.iter().map(Vec::len).collect();
            return Err(Error::DimensionMismatch(format!(
                "permutation sizes {sizes:?} do not match hidden widths {hidden:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PermutationRecord {
    perms: Vec<Vec<usize>>,
}

impl LayerPermutationSet {
    /// `{"perms": [[one-based indices], ...]}`
    pub fn to_json(&self) -> Result<String> {
        let record = PermutationRecord {
            perms: self.perms.iter().map(|p| p.iter().map(|&i| i + 1).collect()).collect(),
        };
        crate::json::to_string(&record)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: PermutationRecord = serde_json::from_str(text)?;
        let perms = record
            .perms
            .into_iter()
            .map(|p| {
                p.into_iter()
                    .map(|i| {
                        i.checked_sub(1)
                            .ok_or_else(|| Error::Format("permutation indices are one-based".into()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(perms)
    }
}

/// Reorders hidden nodes while preserving their connections.
pub fn apply_permutation(params: &NetworkParams, pi: &LayerPermutationSet) -> Result<NetworkParams> {
    pi.check_against(params.architecture())?;
    let mut weights = params.weights().to_vec();
    for (k, p) in pi.perms().iter().enumerate() {
        weights[k] = weights[k].permute_columns(p);
        weights[k + 1] = weights[k + 1].permute_rows(p);
    }
    Ok(NetworkParams::from_parts_unchecked(
        params.architecture().clone(),
        weights,
        params.activation(),
    ))
}

/// Uniformly random permutation of every hidden layer (Fisher-Yates).
pub fn random_permutation(arch: &Architecture, seed: u64) -> LayerPermutationSet {
    let mut rng = rng_from_seed(seed);
    let perms = arch
        .hidden_widths()
        .iter()
        .map(|&n| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    LayerPermutationSet { perms }
}

/// Exact number of functionally equivalent node orderings: the product of
/// the factorials of the hidden widths.
pub fn count_equivalent_optima(arch: &Architecture) -> BigUint {
    arch.hidden_widths().iter().fold(BigUint::one(), |acc, &n| acc * factorial(n))
}

pub(crate) fn factorial(n: usize) -> BigUint {
    (2..=n as u64).fold(BigUint::one(), |acc, k| acc * k)
}

/// Outcome of a probe-based equivalence check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    pub equivalent: bool,
    /// Largest absolute output difference over all probes.
    pub max_deviation: f64,
    /// Largest absolute output of either network over all probes.
    pub max_output: f64,
}

/// Compares two networks on `probes` seeded standard-normal inputs.
///
/// They are declared equivalent when the largest output deviation is at most
/// `tol * (1 + largest output magnitude)`.
pub fn functional_equivalence(
    p1: &NetworkParams,
    p2: &NetworkParams,
    probes: usize,
    tol: f64,
    seed: u64,
) -> Result<EquivalenceReport> {
    if p1.architecture() != p2.architecture() {
        return Err(Error::DimensionMismatch(format!(
            "architectures differ: {} vs {}",
            p1.architecture(),
            p2.architecture()
        )));
    }
    if p1.activation() != p2.activation() {
        return Err(Error::InvalidArgument("activations differ".into()));
    }
    if probes == 0 || tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument("probes and tol must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let n_in = p1.architecture().input_width();
    let mut max_dev = 0.0_f64;
    let mut max_out = 0.0_f64;
    for _ in 0..probes {
        let x: Vec<f64> = (0..n_in).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = p1.forward_unchecked(&x);
        let b = p2.forward_unchecked(&x);
        for (u, v) in a.iter().zip(&b) {
            max_dev = max_dev.max((u - v).abs());
            max_out = max_out.max(u.abs()).max(v.abs());
        }
    }
    Ok(EquivalenceReport {
        equivalent: max_dev <= tol * (1.0 + max_out),
        max_deviation: max_dev,
        max_output: max_out,
    })
}
