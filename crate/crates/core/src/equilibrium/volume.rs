use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::QuadraticLandscape;
use crate::error::{Error, Result};
use crate::symmetry::factorial;

/// `sqrt(eta ||eps||^2 / lambda_1)`: the order of magnitude of the radius
/// of the ball the stationary iterates fill around the optimum.
pub fn equilibrium_radius(land: &QuadraticLandscape, eta: f64) -> f64 {
    (eta * land.noise_power() / land.eigenvalues()[0]).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub log_volume: f64,
    pub volume: f64,
}

/// `pi^{n/2} / Gamma(n/2 + 1) * (eta ||eps||^2)^{1/2} * prod_i lambda_i^{-1/2}`,
/// evaluated in log space.
///
/// The exponent on `eta ||eps||^2` is 1/2 for every `n`, exactly as the
/// formula is usually quoted; an `n`-ball of radius `R*` would carry the
/// power `n/2` instead.
pub fn equilibrium_volume(land: &QuadraticLandscape, eta: f64) -> VolumeEstimate {
    let n = land.dim() as f64;
    let log_volume = 0.5 * n * std::f64::consts::PI.ln() - ln_gamma(0.5 * n + 1.0) + 0.5 * (eta * land.noise_power()).ln()
        - 0.5 * land.eigenvalues().iter().map(|l| l.ln()).sum::<f64>();
    VolumeEstimate {
        log_volume,
        volume: log_volume.exp(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostVolume {
    pub parameters: usize,
    /// `n (log w - log(lambda_bar) / 2)` with `n = w d`.
    pub log_volume: f64,
    /// `log_volume + log(eta ||eps||^2) / 2`, keeping the per-optimum
    /// noise prefactor that the leading-order expression drops.
    pub log_volume_with_prefactor: f64,
    /// `(w!)^d`, the number of equivalent optima.
    #[serde(with = "crate::json::biguint_string")]
    pub count: BigUint,
    /// `d log(w!)`.
    pub log_count: f64,
}

/// Total volume around all permutation-equivalent optima of a network with
/// `d` hidden layers of width `w`, given `lambda_logmean = log(lambda_bar)`.
pub fn ghost_volume(w: usize, d: usize, lambda_logmean: f64, eta_eps2: f64) -> Result<GhostVolume> {
    if w == 0 || d == 0 {
        return Err(Error::InvalidArgument("ghost volume needs w >= 1 and d >= 1".into()));
    }
    if !(eta_eps2.is_finite() && eta_eps2 > 0.0) || !lambda_logmean.is_finite() {
        return Err(Error::InvalidArgument("eta_eps2 must be positive and lambda_logmean finite".into()));
    }
    let n = w * d;
    let log_volume = n as f64 * ((w as f64).ln() - 0.5 * lambda_logmean);
    Ok(GhostVolume {
        parameters: n,
        log_volume,
        log_volume_with_prefactor: log_volume + 0.5 * eta_eps2.ln(),
        count: factorial(w).pow(d as u32),
        log_count: d as f64 * ln_gamma(w as f64 + 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::super::NoiseDist;
    use super::*;
    use crate::netcore::Architecture;
    use crate::symmetry::count_equivalent_optima;

    fn land(lambdas: Vec<f64>, sigmas: Vec<f64>) -> QuadraticLandscape {
        QuadraticLandscape::centered(lambdas, sigmas, NoiseDist::Gaussian).unwrap()
    }

    #[test]
    fn radius_examples() {
        assert_eq!(equilibrium_radius(&land(vec![1.0], vec![0.0]), 0.1), 0.0);
        let r = equilibrium_radius(&land(vec![1.0], vec![1.0]), 0.1);
        assert!((r - 0.1f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn volume_examples() {
        let v = equilibrium_volume(&land(vec![1.0, 1.0], vec![1.0, 0.0]), 1.0);
        assert!((v.volume - std::f64::consts::PI).abs() < 1e-12);
        let a = equilibrium_volume(&land(vec![3.0, 2.0, 1.0, 0.5], vec![1.0; 4]), 0.1);
        let b = equilibrium_volume(&land(vec![6.0, 4.0, 2.0, 1.0], vec![1.0; 4]), 0.1);
        assert!((b.volume / a.volume - 0.25).abs() < 1e-12);
        // n = 1: pi^{1/2} / Gamma(3/2) = 2, so V = 2 sqrt(eta sigma^2 / lambda)
        let one = equilibrium_volume(&land(vec![2.0], vec![3.0]), 0.5);
        assert!((one.volume - 2.0 * (0.5f64 * 9.0 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ghost_examples() {
        let g = ghost_volume(1, 5, 0.3, 1.0).unwrap();
        assert_eq!(g.log_count, 0.0);
        assert_eq!(g.count, BigUint::from(1u32));
        assert_eq!(ghost_volume(3, 2, 0.0, 1.0).unwrap().count, BigUint::from(36u32));
        let g = ghost_volume(10, 4, 0.0, 1.0).unwrap();
        assert!((g.log_volume - 40.0 * 10f64.ln()).abs() < 1e-12);
        assert!((g.log_volume - 92.1).abs() < 0.01);
        assert_eq!(ghost_volume(10, 4, 0.0, 0.01).unwrap().log_volume_with_prefactor, g.log_volume + 0.5 * 0.01f64.ln());
        assert!(ghost_volume(0, 1, 0.0, 1.0).is_err());
        assert!(ghost_volume(2, 1, 0.0, 0.0).is_err());
    }

    #[test]
    fn ghost_count_matches_architecture_count() {
        for (w, d) in [(1, 1), (2, 3), (5, 2), (7, 4)] {
            let mut widths = vec![3];
            widths.extend(std::iter::repeat_n(w, d));
            widths.push(2);
            let arch = Architecture::new(widths).unwrap();
            assert_eq!(ghost_volume(w, d, 0.0, 1.0).unwrap().count, count_equivalent_optima(&arch));
        }
    }
}
