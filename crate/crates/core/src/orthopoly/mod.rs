//! Classical orthogonal polynomial families, Gaussian quadrature and
//! one-layer polynomial regressors ("polytrons").

mod polytron;
mod quadrature;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use polytron::{
    fit_polytron, parseval_residual, polytron_gradient, polytron_objective, project, FitMode, FitResult,
    PolytronLayer, ResidualReport, Weighting, MAX_DEGREE,
};
pub use quadrature::{gauss_quadrature, inner_product, Quadrature};

/// Below this distance from a removable singularity the derivative switches
/// to its analytic limit.
pub const DERIVATIVE_LIMIT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolyFamily {
    /// Orthonormal on (0, inf) with weight exp(-x).
    Laguerre,
    /// Orthogonal on (-1, 1) with unit weight, `<P_i, P_i> = 2 / (2i + 1)`.
    Legendre,
    /// First kind, orthogonal on (-1, 1) with weight `1 / sqrt(1 - x^2)`.
    Chebyshev,
}

impl PolyFamily {
    pub fn name(self) -> &'static str {
        match self {
            PolyFamily::Laguerre => "laguerre",
            PolyFamily::Legendre => "legendre",
            PolyFamily::Chebyshev => "chebyshev",
        }
    }

    pub fn domain(self) -> (f64, f64) {
        match self {
            PolyFamily::Laguerre => (0.0, f64::INFINITY),
            PolyFamily::Legendre | PolyFamily::Chebyshev => (-1.0, 1.0),
        }
    }

    /// The weight function of the inner product.
    pub fn weight(self, x: f64) -> f64 {
        match self {
            PolyFamily::Laguerre => (-x).exp(),
            PolyFamily::Legendre => 1.0,
            PolyFamily::Chebyshev => 1.0 / (1.0 - x * x).sqrt(),
        }
    }

    /// `<phi_i, phi_i>` under the family weight.
    pub fn norm_sq(self, i: usize) -> f64 {
        match self {
            PolyFamily::Laguerre => 1.0,
            PolyFamily::Legendre => 2.0 / (2 * i + 1) as f64,
            PolyFamily::Chebyshev => {
                if i == 0 {
                    std::f64::consts::PI
                } else {
                    std::f64::consts::FRAC_PI_2
                }
            }
        }
    }

    /// Fills `out[0..=n]` with the degrees `0..=n` at `x` in one upward sweep.
    pub fn eval_all(self, x: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        if out.len() == 1 {
            return;
        }
        out[1] = match self {
            PolyFamily::Laguerre => 1.0 - x,
            PolyFamily::Legendre | PolyFamily::Chebyshev => x,
        };
        for i in 1..out.len() - 1 {
            let fi = i as f64;
            out[i + 1] = match self {
                PolyFamily::Laguerre => ((2.0 * fi + 1.0 - x) * out[i] - fi * out[i - 1]) / (fi + 1.0),
                PolyFamily::Legendre => ((2.0 * fi + 1.0) * x * out[i] - fi * out[i - 1]) / (fi + 1.0),
                PolyFamily::Chebyshev => 2.0 * x * out[i] - out[i - 1],
            };
        }
    }

    /// Degree `i` at `x`.
    pub fn eval(self, i: usize, x: f64) -> f64 {
        let mut buf = vec![0.0; i + 1];
        self.eval_all(x, &mut buf);
        buf[i]
    }

    /// `d/dx phi_i(x)` from the two-term derivative identity of each family,
    /// with the analytic limit near the points where that identity divides
    /// by zero.
    pub fn derivative(self, i: usize, x: f64) -> f64 {
        if i == 0 {
            return 0.0;
        }
        let mut buf = vec![0.0; i + 1];
        self.eval_all(x, &mut buf);
        let (p, q) = (buf[i], buf[i - 1]);
        let fi = i as f64;
        match self {
            PolyFamily::Laguerre => {
                if x.abs() <= DERIVATIVE_LIMIT_EPS {
                    -fi
                } else {
                    fi * (p - q) / x
                }
            }
            PolyFamily::Legendre => {
                if 1.0 - x.abs() <= DERIVATIVE_LIMIT_EPS {
                    x.signum().powi(i as i32 - 1) * fi * (fi + 1.0) / 2.0
                } else {
                    fi * (q - x * p) / (1.0 - x * x)
                }
            }
            PolyFamily::Chebyshev => {
                if 1.0 - x.abs() <= DERIVATIVE_LIMIT_EPS {
                    x.signum().powi(i as i32 + 1) * fi * fi
                } else {
                    fi * (q - x * p) / (1.0 - x * x)
                }
            }
        }
    }
}

impl fmt::Display for PolyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "laguerre" => Ok(PolyFamily::Laguerre),
            "legendre" => Ok(PolyFamily::Legendre),
            "chebyshev" => Ok(PolyFamily::Chebyshev),
            other => Err(Error::InvalidArgument(format!("unknown polynomial family '{other}'"))),
        }
    }
}

/// `phi_i(x)` for the given family.
pub fn poly_eval(family: PolyFamily, i: usize, x: f64) -> f64 {
    family.eval(i, x)
}

/// `phi_i'(x)` for the given family.
pub fn poly_grad(family: PolyFamily, i: usize, x: f64) -> f64 {
    family.derivative(i, x)
}
