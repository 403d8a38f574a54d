//! Normalized Frobenius similarity and canonical node reordering.
//!
//! Both reorderings make one first-to-last pass over the hidden layers. For
//! layer `k` the columns of the current `W_k` are sorted, and the same
//! permutation is applied to the rows of `W_{k+1}` before layer `k+1` is
//! examined. Ties keep their original relative order.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::netcore::NetworkParams;
use crate::symmetry::{apply_permutation, LayerPermutationSet};

/// `sum (W - W')^2 / sum (W + W')^2`.
///
/// Two all-zero matrices give 0. A zero denominator with a non-zero
/// numerator (`W' = -W`) gives `f64::INFINITY`, reported as "disjoint".
pub fn frobenius_similarity(w: &Matrix, w2: &Matrix) -> Result<f64> {
    if w.shape() != w2.shape() {
        return Err(Error::ShapeMismatch {
            expected_rows: w.rows(),
            expected_cols: w.cols(),
            rows: w2.rows(),
            cols: w2.cols(),
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in w.as_slice().iter().zip(w2.as_slice()) {
        num += (a - b) * (a - b);
        den += (a + b) * (a + b);
    }
    Ok(if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReorderMethod {
    Raw,
    Lexicographic,
    Maximin,
}

impl ReorderMethod {
    pub fn name(self) -> &'static str {
        match self {
            ReorderMethod::Raw => "raw",
            ReorderMethod::Lexicographic => "lexicographic",
            ReorderMethod::Maximin => "maximin",
        }
    }
}

impl std::str::FromStr for ReorderMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(ReorderMethod::Raw),
            "lexicographic" | "lex" => Ok(ReorderMethod::Lexicographic),
            "maximin" => Ok(ReorderMethod::Maximin),
            other => Err(Error::InvalidArgument(format!("unknown reorder method {other:?}"))),
        }
    }
}

pub(crate) fn serialize_phis<S: Serializer>(phis: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(phis.len()))?;
    for &v in phis {
        if v.is_finite() {
            seq.serialize_element(&v)?;
        } else {
            seq.serialize_element("disjoint")?;
        }
    }
    seq.end()
}

/// Per-layer Φ between two networks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityReport {
    #[serde(serialize_with = "serialize_phis")]
    pub per_layer_phi: Vec<f64>,
    pub method: ReorderMethod,
}

impl SimilarityReport {
    pub fn max_phi(&self) -> f64 {
        self.per_layer_phi.iter().copied().fold(0.0, f64::max)
    }
}

/// Stable index sort with a comparison counter.
fn counted_sort(n: usize, mut cmp: impl FnMut(usize, usize) -> Ordering, count: &mut u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        *count += 1;
        cmp(a, b)
    });
    idx
}

fn lexicographic_order(w: &Matrix, count: &mut u64) -> Vec<usize> {
    counted_sort(
        w.cols(),
        |a, b| {
            for i in 0..w.rows() {
                match w[(i, a)].total_cmp(&w[(i, b)]) {
                    Ordering::Equal => continue,
                    other => return other,
                }
            }
            Ordering::Equal
        },
        count,
    )
}

/// Row with the largest `max - min`; the first such row on ties.
pub fn maximin_driver(w: &Matrix) -> usize {
    let mut best = 0;
    let mut best_spread = f64::NEG_INFINITY;
    for i in 0..w.rows() {
        let row = w.row(i);
        let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = hi - lo;
        if spread > best_spread {
            best_spread = spread;
            best = i;
        }
    }
    best
}

fn maximin_order(w: &Matrix, count: &mut u64) -> Vec<usize> {
    let driver = maximin_driver(w);
    let row = w.row(driver);
    counted_sort(w.cols(), |a, b| row[a].total_cmp(&row[b]), count)
}

fn reorder_counted(params: &NetworkParams, method: ReorderMethod, count: &mut u64) -> (NetworkParams, LayerPermutationSet) {
    let d = params.weights().len();
    let mut weights = params.weights().to_vec();
    let mut perms = Vec::with_capacity(d.saturating_sub(1));
    for k in 0..d - 1 {
        let order = match method {
            ReorderMethod::Raw => (0..weights[k].cols()).collect(),
            ReorderMethod::Lexicographic => lexicographic_order(&weights[k], count),
            ReorderMethod::Maximin => maximin_order(&weights[k], count),
        };
        weights[k] = weights[k].permute_columns(&order);
        weights[k + 1] = weights[k + 1].permute_rows(&order);
        perms.push(order);
    }
    let pi = LayerPermutationSet::new(perms).expect("sort output is a bijection");
    let out = NetworkParams::from_parts_unchecked(params.architecture().clone(), weights, params.activation());
    debug_assert_eq!(apply_permutation(params, &pi).ok().as_ref(), Some(&out));
    (out, pi)
}

/// Reorders nodes with the given method and returns the canonical network
/// together with the permutation that produces it from the input.
pub fn canonicalize(params: &NetworkParams, method: ReorderMethod) -> (NetworkParams, LayerPermutationSet) {
    let mut count = 0;
    reorder_counted(params, method, &mut count)
}

/// Sorts each hidden layer's columns lexicographically (first input row
/// first).
pub fn reorder_lexicographic(params: &NetworkParams) -> (NetworkParams, LayerPermutationSet) {
    canonicalize(params, ReorderMethod::Lexicographic)
}

/// Sorts each hidden layer's columns ascending along its maximal-spread row.
pub fn reorder_maximin(params: &NetworkParams) -> (NetworkParams, LayerPermutationSet) {
    canonicalize(params, ReorderMethod::Maximin)
}

/// Number of comparator calls made while reordering.
pub fn reorder_cost_counter(params: &NetworkParams, method: ReorderMethod) -> u64 {
    let mut count = 0;
    reorder_counted(params, method, &mut count);
    count
}

/// Φ per layer, after optionally canonicalizing both networks.
pub fn network_distance(p1: &NetworkParams, p2: &NetworkParams, method: ReorderMethod) -> Result<SimilarityReport> {
    if p1.architecture() != p2.architecture() {
        return Err(Error::DimensionMismatch(format!(
            "architectures differ: {} vs {}",
            p1.architecture(),
            p2.architecture()
        )));
    }
    let (a, b) = match method {
        ReorderMethod::Raw => (p1.clone(), p2.clone()),
        m => (canonicalize(p1, m).0, canonicalize(p2, m).0),
    };
    let per_layer_phi = a
        .weights()
        .iter()
        .zip(b.weights())
        .map(|(x, y)| frobenius_similarity(x, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityReport { per_layer_phi, method })
}
