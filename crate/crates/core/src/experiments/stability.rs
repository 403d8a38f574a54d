use serde::Serialize;

use super::{functional_distance, resample_dataset, run_trials, train, ExperimentConfig, ExperimentKind};
use crate::canonical::{network_distance, serialize_phis, ReorderMethod};
use crate::error::{Error, Result};
use crate::netcore::build_network;
use crate::seed::split_seed;

/// One pair of independently trained networks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityTrial {
    pub trial: usize,
    pub seed: u64,
    /// Root-mean-square output difference on the probe set.
    pub functional_distance: f64,
    #[serde(serialize_with = "serialize_phis")]
    pub phi_raw: Vec<f64>,
    #[serde(serialize_with = "serialize_phis")]
    pub phi_lexicographic: Vec<f64>,
    #[serde(serialize_with = "serialize_phis")]
    pub phi_maximin: Vec<f64>,
    /// Maximin Φ is strictly below raw Φ in every layer.
    pub canonical_below_raw: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub experiment: &'static str,
    pub config: ExperimentConfig,
    /// Fraction of training points redrawn between the two datasets.
    pub data_perturbation: f64,
    pub trials: Vec<StabilityTrial>,
    /// Share of trials with `canonical_below_raw`.
    pub canonical_below_raw_rate: f64,
    pub mean_functional_distance: f64,
}

/// Trains one network on `D` and one on `D'` per trial and compares them on
/// the probe set and per layer, before and after canonicalization.
pub fn run_stability_study(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let ExperimentKind::Stability {
        resample_fraction,
        same_init,
    } = cfg.experiment
    else {
        return Err(Error::InvalidArgument("configuration is not a stability study".into()));
    };
    let teacher = cfg.teacher()?;
    let data = cfg.generate_dataset()?;
    let probes = cfg.probe_inputs();

    let trials = run_trials(cfg.trials, |i| {
        let seed = cfg.trial_seed(i);
        let other = resample_dataset(&data, &cfg.dataset, &teacher, resample_fraction, split_seed(seed, 3))?;
        let (init_a, sgd_a) = (split_seed(seed, 1), split_seed(seed, 11));
        let (init_b, sgd_b) = if same_init {
            (init_a, sgd_a)
        } else {
            (split_seed(seed, 2), split_seed(seed, 12))
        };
        let a = train(
            build_network(&cfg.architecture, cfg.activation, cfg.init_scale, init_a)?,
            &data,
            &cfg.training,
            sgd_a,
        )?;
        let b = train(
            build_network(&cfg.architecture, cfg.activation, cfg.init_scale, init_b)?,
            &other,
            &cfg.training,
            sgd_b,
        )?;
        let raw = network_distance(&a, &b, ReorderMethod::Raw)?.per_layer_phi;
        let lex = network_distance(&a, &b, ReorderMethod::Lexicographic)?.per_layer_phi;
        let maximin = network_distance(&a, &b, ReorderMethod::Maximin)?.per_layer_phi;
        Ok(StabilityTrial {
            trial: i,
            seed,
            functional_distance: functional_distance(&a, &b, &probes)?,
            canonical_below_raw: maximin.iter().zip(&raw).all(|(m, r)| m < r),
            phi_raw: raw,
            phi_lexicographic: lex,
            phi_maximin: maximin,
        })
    })?;

    let n = trials.len() as f64;
    Ok(StabilityReport {
        experiment: "stability",
        config: cfg.clone(),
        data_perturbation: resample_fraction,
        canonical_below_raw_rate: trials.iter().filter(|t| t.canonical_below_raw).count() as f64 / n,
        mean_functional_distance: trials.iter().map(|t| t.functional_distance).sum::<f64>() / n,
        trials,
    })
}
