//! Noisy gradient descent on a quadratic bowl, written per Hessian
//! eigendirection as independent AR(1) processes, plus the estimators and
//! volume formulas used to study its stationary state.

mod estimators;
mod volume;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub use estimators::{
    anisotropy_study, autocorrelation_time, autocorrelation_time_of, boltzmann_fit, decay_fit, decay_fit_window,
    increment_variance, stationary_variance, AnisotropyRow, BoltzmannFit, BOLTZMANN_BINS, MIN_BIN_COUNT,
};
pub use volume::{equilibrium_radius, equilibrium_volume, ghost_volume, GhostVolume, VolumeEstimate};

/// Distribution of the per-step gradient noise, rescaled so that its
/// standard deviation equals the direction's `sigma` whenever that is finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseDist {
    Gaussian,
    /// Uniform on `[-sqrt(3) sigma, sqrt(3) sigma]`.
    Uniform,
    /// Student t with `df` degrees of freedom. For `df <= 2` the variance is
    /// infinite and `sigma` is used as a plain scale.
    StudentT { df: f64 },
}

impl NoiseDist {
    pub fn name(&self) -> String {
        match self {
            NoiseDist::Gaussian => "gaussian".into(),
            NoiseDist::Uniform => "uniform".into(),
            NoiseDist::StudentT { df } => format!("student_t:{df}"),
        }
    }

    /// Parses `gaussian`, `uniform` or `student_t:<df>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gaussian" | "normal" => Ok(NoiseDist::Gaussian),
            "uniform" => Ok(NoiseDist::Uniform),
            _ => {
                let df = s
                    .strip_prefix("student_t:")
                    .or_else(|| s.strip_prefix("t:"))
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "unknown noise distribution '{s}' (gaussian, uniform, student_t:<df>)"
                        ))
                    })?;
                if !(df.is_finite() && df > 0.0) {
                    return Err(Error::InvalidArgument(format!("student_t needs df > 0, got {df}")));
                }
                Ok(NoiseDist::StudentT { df })
            }
        }
    }
}

enum Sampler {
    Gaussian,
    Uniform,
    StudentT(StudentT<f64>, f64),
}

impl Sampler {
    fn new(dist: NoiseDist) -> Result<Self> {
        Ok(match dist {
            NoiseDist::Gaussian => Sampler::Gaussian,
            NoiseDist::Uniform => Sampler::Uniform,
            NoiseDist::StudentT { df } => {
                let t = StudentT::new(df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                let scale = if df > 2.0 { ((df - 2.0) / df).sqrt() } else { 1.0 };
                Sampler::StudentT(t, scale)
            }
        })
    }

    /// A unit-variance draw.
    fn draw(&self, rng: &mut crate::seed::Rng) -> f64 {
        match self {
            Sampler::Gaussian => StandardNormal.sample(rng),
            Sampler::Uniform => 3f64.sqrt() * rng.random_range(-1.0..1.0),
            Sampler::StudentT(t, scale) => scale * t.sample(rng),
        }
    }
}

/// `J(theta) = sum_i lambda_i (theta_i - theta*_i)^2` plus additive gradient
/// noise, in the Hessian eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticLandscape {
    theta_star: Vec<f64>,
    eigenvalues: Vec<f64>,
    noise_sigma: Vec<f64>,
    noise_dist: NoiseDist,
}

impl QuadraticLandscape {
    /// Eigenvalues must be positive and sorted in descending order.
    pub fn new(theta_star: Vec<f64>, eigenvalues: Vec<f64>, noise_sigma: Vec<f64>, noise_dist: NoiseDist) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(Error::InvalidArgument("landscape needs at least one direction".into()));
        }
        if theta_star.len() != n || noise_sigma.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} eigenvalues, {} optimum coordinates, {} sigmas",
                n,
                theta_star.len(),
                noise_sigma.len()
            )));
        }
        if eigenvalues.iter().any(|&l| !(l.is_finite() && l > 0.0)) {
            return Err(Error::InvalidArgument("eigenvalues must be positive and finite".into()));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("eigenvalues must be sorted in descending order".into()));
        }
        if noise_sigma.iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
            return Err(Error::InvalidArgument("noise sigmas must be finite and >= 0".into()));
        }
        if theta_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("optimum coordinates".into()));
        }
        Sampler::new(noise_dist)?;
        Ok(Self {
            theta_star,
            eigenvalues,
            noise_sigma,
            noise_dist,
        })
    }

    /// Optimum at the origin.
    pub fn centered(eigenvalues: Vec<f64>, noise_sigma: Vec<f64>, noise_dist: NoiseDist) -> Result<Self> {
        Self::new(vec![0.0; eigenvalues.len()], eigenvalues, noise_sigma, noise_dist)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn noise_sigma(&self) -> &[f64] {
        &self.noise_sigma
    }

    pub fn noise_dist(&self) -> NoiseDist {
        self.noise_dist
    }

    /// `||eps||^2 = sum_i sigma_i^2`.
    pub fn noise_power(&self) -> f64 {
        self.noise_sigma.iter().map(|s| s * s).sum()
    }

    pub fn objective(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.theta_star)
            .zip(&self.eigenvalues)
            .map(|((t, s), l)| l * (t - s) * (t - s))
            .sum()
    }

    /// `-1 / log(1 - eta lambda_i)`, infinite when `eta lambda_i >= 1`.
    pub fn autocorrelation_times(&self, eta: f64) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|&l| {
                let r = 1.0 - eta * l;
                if r > 0.0 && r < 1.0 {
                    -1.0 / r.ln()
                } else {
                    f64::INFINITY
                }
            })
            .collect()
    }
}

/// Iterates of one simulation, stored as deviations `x_t = theta_t - theta*`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    dim: usize,
    eta: f64,
    seed: u64,
    burn_in: usize,
    stable: bool,
    diverged_at: Option<usize>,
    theta_star: Vec<f64>,
    deviations: Vec<f64>,
}

impl IterateTrace {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    /// Replaces the burn-in, clamped to the trace length.
    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in.min(self.len() - 1);
        self
    }

    /// Whether `eta * lambda_1 < 1` held.
    pub fn stable(&self) -> bool {
        self.stable
    }

    /// First step whose state was non-finite; the trace ends just before it.
    pub fn diverged_at(&self) -> Option<usize> {
        self.diverged_at
    }

    /// Number of stored states, including the initial one.
    pub fn len(&self) -> usize {
        self.deviations.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.deviations.is_empty()
    }

    pub fn deviation(&self, t: usize) -> &[f64] {
        &self.deviations[t * self.dim..(t + 1) * self.dim]
    }

    pub fn theta(&self, t: usize) -> Vec<f64> {
        self.deviation(t).iter().zip(&self.theta_star).map(|(x, s)| s + x).collect()
    }

    /// The whole deviation series along direction `i`.
    pub fn direction(&self, i: usize) -> Vec<f64> {
        self.deviations.iter().skip(i).step_by(self.dim).copied().collect()
    }

    /// Deviation series along direction `i` after the burn-in.
    pub fn stationary(&self, i: usize) -> Vec<f64> {
        self.deviations[self.burn_in * self.dim..]
            .iter()
            .skip(i)
            .step_by(self.dim)
            .copied()
            .collect()
    }
}

/// `x_{t+1} = (1 - eta lambda_i) x_t + eta eps_{i,t}` for `steps` steps.
///
/// The default burn-in is ten times the longest autocorrelation time. A
/// step with `eta lambda_1 >= 1` is still simulated and flagged unstable;
/// a non-finite state truncates the trace and records the step.
pub fn iterate(land: &QuadraticLandscape, theta0: &[f64], eta: f64, steps: usize, seed: u64) -> Result<IterateTrace> {
    let n = land.dim();
    if theta0.len() != n {
        return Err(Error::DimensionMismatch(format!("theta0 has {} entries, landscape {n}", theta0.len())));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be >= 1".into()));
    }
    let sampler = Sampler::new(land.noise_dist)?;
    let decay: Vec<f64> = land.eigenvalues.iter().map(|l| 1.0 - eta * l).collect();
    let scale: Vec<f64> = land.noise_sigma.iter().map(|s| eta * s).collect();
    let mut rng = rng_from_seed(seed);

    let mut deviations = Vec::with_capacity((steps + 1) * n);
    deviations.extend(theta0.iter().zip(&land.theta_star).map(|(t, s)| t - s));
    let mut diverged_at = None;
    let mut next = vec![0.0; n];
    'outer: for t in 1..=steps {
        let prev = &deviations[(t - 1) * n..t * n];
        for i in 0..n {
            let eps = sampler.draw(&mut rng);
            next[i] = decay[i] * prev[i] + scale[i] * eps;
            if !next[i].is_finite() {
                diverged_at = Some(t);
                break 'outer;
            }
        }
        deviations.extend_from_slice(&next);
    }

    let tau_max = land.autocorrelation_times(eta).into_iter().fold(0.0, f64::max);
    let len = deviations.len() / n;
    let burn_in = if tau_max.is_finite() {
        ((10.0 * tau_max).ceil() as usize).min(len - 1)
    } else {
        0
    };
    Ok(IterateTrace {
        dim: n,
        eta,
        seed,
        burn_in,
        stable: eta * land.eigenvalues[0] < 1.0,
        diverged_at,
        theta_star: land.theta_star.clone(),
        deviations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn one_dim(lambda: f64, sigma: f64) -> QuadraticLandscape {
        QuadraticLandscape::centered(vec![lambda], vec![sigma], NoiseDist::Gaussian).unwrap()
    }

    #[test]
    fn validation() {
        assert!(QuadraticLandscape::centered(vec![1.0, 2.0], vec![0.0, 0.0], NoiseDist::Gaussian).is_err());
        assert!(QuadraticLandscape::centered(vec![0.0], vec![0.0], NoiseDist::Gaussian).is_err());
        assert!(QuadraticLandscape::centered(vec![1.0], vec![-1.0], NoiseDist::Gaussian).is_err());
        assert!(QuadraticLandscape::centered(vec![1.0], vec![1.0, 1.0], NoiseDist::Gaussian).is_err());
        assert!(QuadraticLandscape::centered(vec![1.0], vec![1.0], NoiseDist::StudentT { df: 0.0 }).is_err());
        let l = one_dim(1.0, 1.0);
        assert!(iterate(&l, &[0.0, 0.0], 0.1, 10, 0).is_err());
        assert!(iterate(&l, &[0.0], 0.0, 10, 0).is_err());
        assert!(iterate(&l, &[0.0], 0.1, 0, 0).is_err());
    }

    #[test]
    fn noise_names_parse() {
        assert_eq!(NoiseDist::parse("gaussian").unwrap(), NoiseDist::Gaussian);
        assert_eq!(NoiseDist::parse("Uniform").unwrap(), NoiseDist::Uniform);
        assert_eq!(NoiseDist::parse("student_t:3").unwrap(), NoiseDist::StudentT { df: 3.0 });
        assert!(NoiseDist::parse("cauchy").is_err());
        assert!(NoiseDist::parse("student_t:-1").is_err());
    }

    #[test]
    fn fixed_point_without_noise() {
        let l = QuadraticLandscape::new(vec![1.5, -2.0], vec![2.0, 1.0], vec![0.0, 0.0], NoiseDist::Gaussian).unwrap();
        let tr = iterate(&l, &[1.5, -2.0], 0.1, 100, 3).unwrap();
        for t in 0..tr.len() {
            assert_eq!(tr.theta(t), vec![1.5, -2.0]);
        }
    }

    #[test]
    fn geometric_decay_without_noise() {
        let tr = iterate(&one_dim(1.0, 0.0), &[1.0], 0.1, 200, 0).unwrap();
        for (t, x) in tr.direction(0).iter().enumerate() {
            let exact = 0.9f64.powi(t as i32);
            assert!((x - exact).abs() <= 1e-13 * exact, "{t}");
        }
        let l = QuadraticLandscape::centered(vec![2.0, 0.5], vec![0.0, 0.0], NoiseDist::Gaussian).unwrap();
        let tr = iterate(&l, &[3.0, -4.0], 0.2, 50, 0).unwrap();
        for t in 0..tr.len() {
            let d = tr.deviation(t);
            let bound = 0.9f64.powi(t as i32) * 5.0;
            assert!((d[0] * d[0] + d[1] * d[1]).sqrt() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn seed_determinism() {
        let l = QuadraticLandscape::centered(vec![1.0, 0.3], vec![1.0, 0.5], NoiseDist::Uniform).unwrap();
        let a = iterate(&l, &[0.0, 0.0], 0.1, 1000, 9).unwrap();
        let b = iterate(&l, &[0.0, 0.0], 0.1, 1000, 9).unwrap();
        let c = iterate(&l, &[0.0, 0.0], 0.1, 1000, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn default_burn_in_and_stability_flag() {
        let tr = iterate(&one_dim(1.0, 1.0), &[0.0], 0.1, 10_000, 1).unwrap();
        assert_eq!(tr.burn_in(), 95);
        assert!(tr.stable());
        let hot = iterate(&one_dim(1.0, 1.0), &[0.0], 1.5, 100, 1).unwrap();
        assert!(!hot.stable());
        assert_eq!(tr.with_burn_in(usize::MAX).burn_in(), 10_000);
    }

    #[test]
    fn heavy_tails_truncate_on_divergence() {
        let l = QuadraticLandscape::centered(vec![1.0], vec![1e300], NoiseDist::StudentT { df: 1.0 }).unwrap();
        let tr = iterate(&l, &[0.0], 3.0, 10_000, 2).unwrap();
        let t = tr.diverged_at().expect("unstable heavy-tailed run must blow up");
        assert_eq!(tr.len(), t);
        assert!(tr.direction(0).iter().all(|x| x.is_finite()));
    }

    #[test]
    fn eigenbasis_matches_dense_hessian() {
        // Q diag(lambda) Q^T with Q from a QR factorization
        let a = DMatrix::from_row_slice(3, 3, &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4, 0.5, 0.9, 1.1]);
        let q = a.qr().q();
        let lambdas = [2.0, 1.0, 0.25];
        let h = &q * DMatrix::from_diagonal(&DVector::from_row_slice(&lambdas)) * q.transpose();
        let land = QuadraticLandscape::centered(lambdas.to_vec(), vec![0.0; 3], NoiseDist::Gaussian).unwrap();
        let x0 = [1.0, -0.5, 2.0];
        let eta = 0.1;
        let tr = iterate(&land, &x0, eta, 40, 0).unwrap();
        let mut theta = &q * DVector::from_row_slice(&x0);
        for t in 1..=40 {
            theta = &theta - eta * (&h * &theta);
            let rotated = q.transpose() * &theta;
            for i in 0..3 {
                assert!((rotated[i] - tr.deviation(t)[i]).abs() < 1e-12);
            }
        }
    }
}
