use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{iterate, IterateTrace, QuadraticLandscape};
use crate::error::{Error, Result};

/// Histogram bins used by [`boltzmann_fit`].
pub const BOLTZMANN_BINS: usize = 30;
/// Minimum count per histogram bin.
pub const MIN_BIN_COUNT: usize = 50;

fn check_direction(trace: &IterateTrace, i: usize) -> Result<()> {
    if i >= trace.dim() {
        return Err(Error::InvalidArgument(format!("direction {i} out of range for dimension {}", trace.dim())));
    }
    Ok(())
}

fn sample_variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples(format!("{} samples after burn-in", xs.len())));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Ok(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
}

/// Log-linear fit of `|x_t|` over `t = 0..=window`; returns the per-step
/// decay factor.
pub fn decay_fit_window(trace: &IterateTrace, i: usize, window: usize) -> Result<f64> {
    check_direction(trace, i)?;
    let window = window.min(trace.len() - 1);
    if window == 0 {
        return Err(Error::InsufficientSamples("decay fit needs at least two states".into()));
    }
    let xs = trace.direction(i);
    let pts = &xs[..=window];
    if pts.contains(&0.0) {
        return Err(Error::Degenerate("deviation reaches zero inside the fit window".into()));
    }
    let n = pts.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let ys: Vec<f64> = pts.iter().map(|x| x.abs().ln()).collect();
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in ys.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (y - y_mean);
        sxx += dt * dt;
    }
    Ok((sxy / sxx).exp())
}

/// [`decay_fit_window`] over the pre-burn-in segment.
pub fn decay_fit(trace: &IterateTrace, i: usize) -> Result<f64> {
    decay_fit_window(trace, i, trace.burn_in().max(1))
}

/// Normalized autocorrelation `rho_k` for all lags, via zero-padded FFT.
fn autocorrelation(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = xs.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    buf[..n].iter().map(|c| c.re / c0).collect()
}

/// Integrated autocorrelation time `tau = 1/2 + sum_{k>=1} rho_k` of a
/// series, summed up to the first lag `M >= 10 tau(M)`.
///
/// For an AR(1) series with coefficient `r` this tends to
/// `1/2 + r / (1 - r)`. That is within 5% of `-1 / log r` for `r >= 0.5`
/// but drifts away as `r` falls (0.61 against 0.43 at `r = 0.1`). Fails when
/// the series is constant or shorter than `100 tau`.
pub fn autocorrelation_time_of(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples(format!("{} samples", xs.len())));
    }
    if sample_variance(xs)? == 0.0 {
        return Err(Error::Degenerate("constant series has no autocorrelation time".into()));
    }
    let rho = autocorrelation(xs);
    let mut tau = 0.5;
    for (k, r) in rho.iter().enumerate().skip(1) {
        tau += r;
        if k as f64 >= 10.0 * tau {
            break;
        }
    }
    if (xs.len() as f64) < 100.0 * tau {
        return Err(Error::InsufficientSamples(format!(
            "{} samples for an autocorrelation time of {tau:.1}; need at least {:.0}",
            xs.len(),
            100.0 * tau
        )));
    }
    Ok(tau)
}

/// Autocorrelation time of direction `i` after the burn-in.
pub fn autocorrelation_time(trace: &IterateTrace, i: usize) -> Result<f64> {
    check_direction(trace, i)?;
    autocorrelation_time_of(&trace.stationary(i))
}

/// Sample variance of `x_t` along direction `i` after the burn-in.
pub fn stationary_variance(trace: &IterateTrace, i: usize) -> Result<f64> {
    check_direction(trace, i)?;
    sample_variance(&trace.stationary(i))
}

/// Sample variance of `x_{t+1} - x_t` along direction `i` after the burn-in.
pub fn increment_variance(trace: &IterateTrace, i: usize) -> Result<f64> {
    check_direction(trace, i)?;
    let xs = trace.stationary(i);
    let diffs: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    sample_variance(&diffs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoltzmannFit {
    /// Fitted inverse temperature: minus the slope of log(density / density
    /// of states) against `J`.
    pub beta_hat: f64,
    pub beta_inv: f64,
    /// Count-weighted coefficient of determination of the linear fit.
    pub r2: f64,
    pub bins: usize,
    /// Upper histogram edge (99th percentile of `J`).
    pub j_max: f64,
    /// Per-direction AR(1) temperature `2 eta sigma_i^2 / (2 - eta lambda_i)`.
    pub beta_inv_oracle: Vec<f64>,
}

/// Fits `P(J) ~ g(J) exp(-beta J)` to the post-burn-in values of
/// `J = sum_i lambda_i x_i^2`, where `g(J) ~ J^{n/2 - 1}` is the density of
/// states of an `n`-dimensional quadratic. The histogram spans `[0, q99]`
/// in [`BOLTZMANN_BINS`] bins; each count is divided by the exact integral
/// of `g` over its bin and plotted against the `g`-weighted mean `J` of the
/// bin.
pub fn boltzmann_fit(trace: &IterateTrace, land: &QuadraticLandscape, eta: f64) -> Result<BoltzmannFit> {
    if trace.dim() != land.dim() {
        return Err(Error::DimensionMismatch(format!(
            "trace has {} directions, landscape {}",
            trace.dim(),
            land.dim()
        )));
    }
    let lambdas = land.eigenvalues();
    let js: Vec<f64> = (trace.burn_in()..trace.len())
        .map(|t| trace.deviation(t).iter().zip(lambdas).map(|(x, l)| l * x * x).sum())
        .collect();
    let mut sorted = js.clone();
    sorted.sort_by(f64::total_cmp);
    let q99 = sorted[((sorted.len() as f64 * 0.99) as usize).min(sorted.len() - 1)];
    if q99.is_nan() || q99 <= 0.0 {
        return Err(Error::Degenerate("all stationary mass sits at J = 0".into()));
    }
    let width = q99 / BOLTZMANN_BINS as f64;
    let mut counts = vec![0usize; BOLTZMANN_BINS];
    for &j in &js {
        if j < q99 {
            counts[((j / width) as usize).min(BOLTZMANN_BINS - 1)] += 1;
        }
    }
    if let Some((b, c)) = counts.iter().enumerate().find(|(_, &c)| c < MIN_BIN_COUNT) {
        return Err(Error::InsufficientSamples(format!(
            "histogram bin {b} holds {c} samples, at least {MIN_BIN_COUNT} required"
        )));
    }

    let h = land.dim() as f64 / 2.0;
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    let mut pts = Vec::with_capacity(BOLTZMANN_BINS);
    for (b, &c) in counts.iter().enumerate() {
        let (lo, hi) = (b as f64 * width, (b + 1) as f64 * width);
        let states = (hi.powf(h) - lo.powf(h)) / h;
        let centre = h / (h + 1.0) * (hi.powf(h + 1.0) - lo.powf(h + 1.0)) / (hi.powf(h) - lo.powf(h));
        let y = (c as f64 / states).ln();
        let w = c as f64;
        sw += w;
        sx += w * centre;
        sy += w * y;
        pts.push((centre, y, w));
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y, w) in &pts {
        sxy += w * (x - mx) * (y - my);
        sxx += w * (x - mx) * (x - mx);
        syy += w * (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(BoltzmannFit {
        beta_hat: -slope,
        beta_inv: -1.0 / slope,
        r2,
        bins: BOLTZMANN_BINS,
        j_max: q99,
        beta_inv_oracle: lambdas
            .iter()
            .zip(land.noise_sigma())
            .map(|(l, s)| 2.0 * eta * s * s / (2.0 - eta * l))
            .collect(),
    })
}

/// One row of [`anisotropy_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyRow {
    pub lambda: f64,
    pub sigma: f64,
    pub measured_variance: f64,
    /// `eta sigma^2 / (lambda (2 - eta lambda))`.
    pub exact_variance: f64,
    /// `eta sigma^2 / 2`: the direction-independent width obtained from
    /// `P ~ exp(-beta_i lambda_i x^2)` with `beta_i^{-1} = eta lambda_i sigma_i^2`.
    pub cancellation_prediction: f64,
    /// `2 lambda var`, the temperature implied by the measured variance.
    pub beta_inv_estimate: f64,
}

/// Per-direction stationary statistics of one run started at the optimum.
pub fn anisotropy_study(land: &QuadraticLandscape, eta: f64, steps: usize, seed: u64) -> Result<Vec<AnisotropyRow>> {
    let trace = iterate(land, land.theta_star(), eta, steps, seed)?;
    (0..land.dim())
        .map(|i| {
            let lambda = land.eigenvalues()[i];
            let sigma = land.noise_sigma()[i];
            let var = stationary_variance(&trace, i)?;
            Ok(AnisotropyRow {
                lambda,
                sigma,
                measured_variance: var,
                exact_variance: eta * sigma * sigma / (lambda * (2.0 - eta * lambda)),
                cancellation_prediction: eta * sigma * sigma / 2.0,
                beta_inv_estimate: 2.0 * lambda * var,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::NoiseDist;
    use super::*;
    use crate::seed::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn one_dim(lambda: f64, sigma: f64) -> QuadraticLandscape {
        QuadraticLandscape::centered(vec![lambda], vec![sigma], NoiseDist::Gaussian).unwrap()
    }

    #[test]
    fn decay_rates() {
        for (eta, rate) in [(0.1, 0.9), (0.5, 0.5)] {
            let tr = iterate(&one_dim(1.0, 0.0), &[1.0], eta, 100, 0).unwrap();
            assert!((decay_fit(&tr, 0).unwrap() - rate).abs() < 1e-9);
        }
        let tr = iterate(&one_dim(1.0, 0.01), &[100.0], 0.1, 100, 0).unwrap();
        assert!((decay_fit_window(&tr, 0, 50).unwrap() - 0.9).abs() < 0.01);
        let still = iterate(&one_dim(1.0, 0.0), &[0.0], 0.1, 100, 0).unwrap();
        assert!(matches!(decay_fit(&still, 0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn stationary_variance_matches_ar1() {
        let tr = iterate(&one_dim(1.0, 1.0), &[0.0], 0.1, 1_000_000, 5).unwrap().with_burn_in(10_000);
        let v = stationary_variance(&tr, 0).unwrap();
        assert!((v / (0.01 / 0.19) - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn autocorrelation_of_white_noise_and_ar1() {
        let mut rng = rng_from_seed(1);
        let white: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(autocorrelation_time_of(&white).unwrap() <= 1.1);

        let tr = iterate(&one_dim(1.0, 1.0), &[0.0], 0.5, 1_000_000, 2).unwrap();
        let tau = autocorrelation_time(&tr, 0).unwrap();
        let exact = -1.0 / 0.5f64.ln();
        assert!((tau / exact - 1.0).abs() < 0.1, "{tau}");
    }

    #[test]
    fn autocorrelation_errors() {
        let tr = iterate(&one_dim(1.0, 1.0), &[0.0], 0.01, 2_000, 2).unwrap().with_burn_in(0);
        assert!(matches!(autocorrelation_time(&tr, 0), Err(Error::InsufficientSamples(_))));
        assert!(matches!(autocorrelation_time_of(&[1.0; 50]), Err(Error::Degenerate(_))));
        assert!(autocorrelation_time(&tr, 3).is_err());
    }

    #[test]
    fn increment_variance_examples() {
        let quiet = iterate(&one_dim(1.0, 0.0), &[0.0], 0.1, 1000, 0).unwrap();
        assert_eq!(increment_variance(&quiet, 0).unwrap(), 0.0);
        let tr = iterate(&one_dim(0.1, 1.0), &[0.0], 0.1, 1_000_000, 4).unwrap();
        let ratio = increment_variance(&tr, 0).unwrap() / 0.01;
        assert!((ratio / (2.0 / 1.99) - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn boltzmann_linear_and_degenerate() {
        let land = one_dim(1.0, 1.0);
        let tr = iterate(&land, &[0.0], 0.1, 1_000_000, 8).unwrap();
        let fit = boltzmann_fit(&tr, &land, 0.1).unwrap();
        assert!(fit.r2 >= 0.99, "{fit:?}");
        assert!((fit.beta_inv / fit.beta_inv_oracle[0] - 1.0).abs() < 0.05, "{fit:?}");

        let quiet = iterate(&one_dim(1.0, 0.0), &[0.0], 0.1, 1000, 0).unwrap();
        assert!(matches!(boltzmann_fit(&quiet, &one_dim(1.0, 0.0), 0.1), Err(Error::Degenerate(_))));
        let short = iterate(&land, &[0.0], 0.1, 2000, 0).unwrap();
        assert!(matches!(boltzmann_fit(&short, &land, 0.1), Err(Error::InsufficientSamples(_))));
    }

    #[test]
    fn boltzmann_in_two_dimensions() {
        let land = QuadraticLandscape::centered(vec![1.0, 1.0], vec![1.0, 1.0], NoiseDist::Gaussian).unwrap();
        let tr = iterate(&land, &[0.0, 0.0], 0.02, 1_000_000, 3).unwrap();
        let fit = boltzmann_fit(&tr, &land, 0.02).unwrap();
        assert!(fit.r2 >= 0.99);
        assert!((fit.beta_inv / fit.beta_inv_oracle[0] - 1.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn anisotropy_table() {
        let land = QuadraticLandscape::centered(vec![1.0, 0.1], vec![1.0, 1.0], NoiseDist::Gaussian).unwrap();
        let rows = anisotropy_study(&land, 0.1, 1_000_000, 6).unwrap();
        let ratio = rows[1].measured_variance / rows[0].measured_variance;
        let exact = rows[1].exact_variance / rows[0].exact_variance;
        assert!((exact - 1.9 / 0.199).abs() < 1e-9);
        assert!((ratio / exact - 1.0).abs() < 0.1, "{ratio}");

        let quiet = QuadraticLandscape::centered(vec![1.0, 0.1], vec![0.0, 0.0], NoiseDist::Gaussian).unwrap();
        let rows = anisotropy_study(&quiet, 0.1, 5000, 6).unwrap();
        assert!(rows.iter().all(|r| r.measured_variance == 0.0));
    }
}
