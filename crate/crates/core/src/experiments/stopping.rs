use serde::Serialize;

use super::{functional_distance, run_trials, train, ExperimentConfig, ExperimentKind, TrainingSpec};
use crate::canonical::{canonicalize, frobenius_similarity, serialize_phis, ReorderMethod};
use crate::error::{Error, Result};
use crate::netcore::{build_network, Dataset, NetworkParams, SgdRun};
use crate::seed::split_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingOutcome {
    pub stopped: bool,
    /// Zero-based index of the epoch after which every layer's Φ was at
    /// most `phi_stop`.
    pub stop_epoch: Option<usize>,
    pub epochs_run: usize,
    #[serde(serialize_with = "serialize_phis")]
    pub final_phi: Vec<f64>,
    /// Smallest max-over-layers Φ seen, and the epoch it was seen at.
    pub closest_max_phi: f64,
    pub closest_epoch: usize,
    /// Root-mean-square probe output difference to the benchmark at the end.
    pub functional_distance: f64,
}

/// Retrains from `init`, canonicalizing after every epoch, and stops as
/// soon as each layer's Φ to the canonicalized benchmark is `<= phi_stop`.
#[allow(clippy::too_many_arguments)]
pub fn run_stopping_criterion(
    init: &NetworkParams,
    data: &Dataset,
    benchmark: &NetworkParams,
    training: &TrainingSpec,
    sgd_seed: u64,
    phi_stop: f64,
    method: ReorderMethod,
    probes: &[Vec<f64>],
) -> Result<StoppingOutcome> {
    if init.architecture() != benchmark.architecture() {
        return Err(Error::DimensionMismatch(format!(
            "benchmark is {}, retrained network is {}",
            benchmark.architecture(),
            init.architecture()
        )));
    }
    let (target, _) = canonicalize(benchmark, method);
    let mut run = SgdRun::new(init.clone(), data, training.lr, training.batch_size, sgd_seed)?;
    let mut closest = (f64::INFINITY, 0);
    let mut phi = Vec::new();
    let mut stop_epoch = None;
    for epoch in 0..training.epochs {
        run.epoch(data)?;
        let (canon, _) = canonicalize(run.params(), method);
        phi = canon
            .weights()
            .iter()
            .zip(target.weights())
            .map(|(a, b)| frobenius_similarity(a, b))
            .collect::<Result<Vec<_>>>()?;
        let worst = phi.iter().copied().fold(0.0, f64::max);
        if worst < closest.0 {
            closest = (worst, epoch);
        }
        if worst <= phi_stop {
            stop_epoch = Some(epoch);
            break;
        }
    }
    Ok(StoppingOutcome {
        stopped: stop_epoch.is_some(),
        stop_epoch,
        epochs_run: run.epochs_done(),
        final_phi: phi,
        closest_max_phi: closest.0,
        closest_epoch: closest.1,
        functional_distance: functional_distance(run.params(), benchmark, probes)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingTrial {
    pub trial: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub outcome: StoppingOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingReport {
    pub experiment: &'static str,
    pub config: ExperimentConfig,
    pub benchmark: NetworkParams,
    pub trials: Vec<StoppingTrial>,
    /// Share of trials that stopped before the epoch budget ran out.
    pub stopped_rate: f64,
}

/// Trains a benchmark once, then retrains from a fresh initialization per
/// trial under the stopping rule.
pub fn run_stopping_study(cfg: &ExperimentConfig) -> Result<StoppingReport> {
    cfg.validate()?;
    let ExperimentKind::Stopping {
        phi_stop,
        method,
        benchmark_epochs,
    } = cfg.experiment
    else {
        return Err(Error::InvalidArgument("configuration is not a stopping study".into()));
    };
    let data = cfg.generate_dataset()?;
    let probes = cfg.probe_inputs();
    let bseed = cfg.benchmark_seed();
    let benchmark = train(
        build_network(&cfg.architecture, cfg.activation, cfg.init_scale, split_seed(bseed, 1))?,
        &data,
        &TrainingSpec {
            epochs: benchmark_epochs,
            ..cfg.training
        },
        split_seed(bseed, 2),
    )?;
    let trials = run_trials(cfg.trials, |i| {
        let seed = cfg.trial_seed(i);
        let init = build_network(&cfg.architecture, cfg.activation, cfg.init_scale, split_seed(seed, 1))?;
        let outcome = run_stopping_criterion(
            &init,
            &data,
            &benchmark,
            &cfg.training,
            split_seed(seed, 11),
            phi_stop,
            method,
            &probes,
        )?;
        Ok(StoppingTrial { trial: i, seed, outcome })
    })?;
    let stopped_rate = trials.iter().filter(|t| t.outcome.stopped).count() as f64 / trials.len() as f64;
    Ok(StoppingReport {
        experiment: "stopping",
        config: cfg.clone(),
        benchmark,
        trials,
        stopped_rate,
    })
}
