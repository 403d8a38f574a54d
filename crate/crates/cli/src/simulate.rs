use std::path::PathBuf;

use clap::Args;
use ghostnet::equilibrium::{
    autocorrelation_time, boltzmann_fit, decay_fit, equilibrium_radius, equilibrium_volume, increment_variance,
    iterate, stationary_variance, BoltzmannFit, NoiseDist, QuadraticLandscape, VolumeEstimate,
};
use serde::Serialize;

use crate::util::{csv_text, emit, to_json, usage, write_text, CliResult};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Number of eigendirections.
    #[arg(long)]
    n: usize,
    /// Hessian eigenvalues, descending.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    lambdas: Vec<f64>,
    /// Noise standard deviation per direction.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    sigmas: Vec<f64>,
    /// gaussian, uniform or student_t:<df>.
    #[arg(long, default_value = "gaussian")]
    dist: String,
    #[arg(long)]
    eta: f64,
    #[arg(long)]
    steps: usize,
    /// Samples discarded before stationary statistics; defaults to ten
    /// autocorrelation times of the slowest direction.
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    seed: u64,
    /// Starting deviation from the optimum per direction (default 1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta0: Option<Vec<f64>>,
    /// Trace CSV with columns t, x_1..x_n.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report JSON; printed to standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    n: usize,
    lambdas: &'a [f64],
    sigmas: &'a [f64],
    dist: NoiseDist,
    eta: f64,
    steps: usize,
    burn_in: usize,
    seed: u64,
    theta0: &'a [f64],
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    command: &'static str,
    config: SimulateConfig<'a>,
    stable: bool,
    diverged_at: Option<usize>,
    stationary_samples: usize,
    stationary_variance: Vec<Option<f64>>,
    stationary_variance_oracle: Vec<f64>,
    increment_variance: Vec<Option<f64>>,
    increment_variance_oracle: Vec<f64>,
    autocorrelation_time: Vec<Option<f64>>,
    autocorrelation_time_oracle: Vec<f64>,
    /// Only for noiseless directions.
    decay_rate: Vec<Option<f64>>,
    decay_rate_oracle: Vec<f64>,
    boltzmann: Option<BoltzmannFit>,
    equilibrium_radius: f64,
    equilibrium_volume: VolumeEstimate,
    warnings: Vec<String>,
}

pub fn run(args: SimulateArgs) -> CliResult {
    let n = args.n;
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if args.lambdas.len() != n || args.sigmas.len() != n {
        return Err(usage(format!(
            "--lambdas and --sigmas need {n} values each, got {} and {}",
            args.lambdas.len(),
            args.sigmas.len()
        )));
    }
    let theta0 = args.theta0.clone().unwrap_or_else(|| vec![1.0; n]);
    if theta0.len() != n {
        return Err(usage(format!("--theta0 needs {n} values, got {}", theta0.len())));
    }
    let dist = NoiseDist::parse(&args.dist)?;
    let land = QuadraticLandscape::centered(args.lambdas.clone(), args.sigmas.clone(), dist)?;
    let mut trace = iterate(&land, &theta0, args.eta, args.steps, args.seed)?;
    if let Some(b) = args.burn_in {
        trace = trace.with_burn_in(b);
    }

    let mut warnings = Vec::new();
    let stationary = per_direction(n, "stationary_variance", &mut warnings, |i| stationary_variance(&trace, i).map(Some));
    let increments = per_direction(n, "increment_variance", &mut warnings, |i| increment_variance(&trace, i).map(Some));
    let tau = per_direction(n, "autocorrelation_time", &mut warnings, |i| autocorrelation_time(&trace, i).map(Some));
    let decay = per_direction(n, "decay_rate", &mut warnings, |i| {
        if args.sigmas[i] == 0.0 {
            decay_fit(&trace, i).map(Some)
        } else {
            Ok(None)
        }
    });
    let boltzmann = match boltzmann_fit(&trace, &land, args.eta) {
        Ok(fit) => Some(fit),
        Err(e) => {
            warnings.push(format!("boltzmann: {e}"));
            None
        }
    };

    let eta = args.eta;
    let oracle = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> {
        args.lambdas.iter().zip(&args.sigmas).map(|(&l, &s)| f(l, s)).collect()
    };
    let report = SimulateReport {
        command: "simulate",
        config: SimulateConfig {
            n,
            lambdas: &args.lambdas,
            sigmas: &args.sigmas,
            dist,
            eta,
            steps: args.steps,
            burn_in: trace.burn_in(),
            seed: args.seed,
            theta0: &theta0,
        },
        stable: trace.stable(),
        diverged_at: trace.diverged_at(),
        stationary_samples: trace.len().saturating_sub(trace.burn_in()),
        stationary_variance: stationary,
        stationary_variance_oracle: oracle(&|l, s| {
            let r = 1.0 - eta * l;
            eta * eta * s * s / (1.0 - r * r)
        }),
        increment_variance: increments,
        increment_variance_oracle: oracle(&|l, s| 2.0 * eta * eta * s * s / (2.0 - eta * l)),
        autocorrelation_time: tau,
        autocorrelation_time_oracle: land.autocorrelation_times(eta),
        decay_rate: decay,
        decay_rate_oracle: oracle(&|l, _| 1.0 - eta * l),
        boltzmann,
        equilibrium_radius: equilibrium_radius(&land, eta),
        equilibrium_volume: equilibrium_volume(&land, eta),
        warnings,
    };

    if let Some(path) = &args.out {
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        let rows = (0..trace.len()).map(|t| {
            let mut row = vec![t.to_string()];
            row.extend(trace.theta(t).iter().map(f64::to_string));
            row
        });
        write_text(path, &csv_text(&header, rows)?)?;
    }
    emit(args.report.as_deref(), &to_json(&report)?)
}

/// Runs a per-direction estimator, turning failures into `null` plus a
/// warning line.
fn per_direction(
    n: usize,
    name: &str,
    warnings: &mut Vec<String>,
    f: impl Fn(usize) -> ghostnet::Result<Option<f64>>,
) -> Vec<Option<f64>> {
    (0..n)
        .map(|i| {
            f(i).unwrap_or_else(|e| {
                warnings.push(format!("{name}[{}]: {e}", i + 1));
                None
            })
        })
        .collect()
}
