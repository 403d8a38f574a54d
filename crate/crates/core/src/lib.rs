//! Neural network weight-space symmetry tools: permutation groups, canonical
//! reordering, symmetry-breaking masks, orthogonal-polynomial regressors and
//! stationary statistics of noisy gradient descent.

pub mod canonical;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod json;
pub mod matrix;
pub mod netcore;
pub mod orthopoly;
pub mod prepruning;
pub mod seed;
pub mod symmetry;

pub use error::{Error, Result};
pub use matrix::Matrix;
