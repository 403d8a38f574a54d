//! Composite experiments: retraining stability, a canonical-distance
//! stopping criterion and the two-node ghost-optima traversal demo.

mod ghost;
mod stability;
mod stopping;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical::ReorderMethod;
use crate::error::{Error, Result};
use crate::netcore::{build_network, Activation, Architecture, Dataset, NetworkParams, SgdRun};
use crate::seed::{rng_from_seed, split_seed};

pub use ghost::{run_ghost_optima_demo, GhostCheckpoint, GhostReport, GhostRun, InitMode, VICINITY_PHI};
pub use stability::{run_stability_study, StabilityReport, StabilityTrial};
pub use stopping::{run_stopping_criterion, run_stopping_study, StoppingOutcome, StoppingReport};

/// Version of the experiment configuration schema.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;
/// Probe inputs used for functional distances.
pub const DEFAULT_PROBES: usize = 256;

/// Sub-stream indices under the master seed.
const PROBE_STREAM: u64 = u64::MAX;
const BENCHMARK_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Targets from a teacher network of the experiment architecture, either
    /// given explicitly or drawn at random; standard-normal inputs.
    Teacher,
    /// `y = sin(x)` with `x` uniform on `[-pi, pi]`; needs one input and one
    /// output.
    Sine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub generator: Generator,
    pub size: usize,
    #[serde(default)]
    pub noise_std: f64,
    pub seed: u64,
    /// Weight scale of the teacher network.
    #[serde(default = "one")]
    pub teacher_scale: f64,
    /// Explicit teacher; drawn at `teacher_scale` from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher: Option<NetworkParams>,
}

fn one() -> f64 {
    1.0
}

fn default_probes() -> usize {
    DEFAULT_PROBES
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSpec {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentKind {
    /// Train twice (on `D` and on a copy with `resample_fraction` of the
    /// points redrawn) and compare the results.
    Stability {
        #[serde(default)]
        resample_fraction: f64,
        /// Use the same initialization and SGD seeds for both runs.
        #[serde(default)]
        same_init: bool,
    },
    /// Retrain from fresh initializations and stop once the canonical
    /// distance to a benchmark drops to `phi_stop` in every layer.
    Stopping {
        phi_stop: f64,
        #[serde(default = "default_method")]
        method: ReorderMethod,
        /// Epochs used to train the benchmark network.
        benchmark_epochs: usize,
    },
    /// Noisy training of a two-hidden-node network near its teacher.
    GhostOptima {
        #[serde(default)]
        init: InitMode,
        /// Epochs between checkpoints.
        #[serde(default = "one_usize")]
        checkpoint_every: usize,
    },
}

fn default_method() -> ReorderMethod {
    ReorderMethod::Maximin
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub master_seed: u64,
    pub trials: usize,
    pub architecture: Architecture,
    pub activation: Activation,
    pub init_scale: f64,
    pub dataset: DatasetSpec,
    pub training: TrainingSpec,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default)]
    pub outputs: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if self.probes == 0 {
            return Err(Error::InvalidArgument("probes must be >= 1".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::InvalidArgument("init_scale must be finite and >= 0".into()));
        }
        let t = &self.training;
        if !(t.lr.is_finite() && t.lr >= 0.0) || t.epochs == 0 || t.batch_size == 0 {
            return Err(Error::InvalidArgument("training needs lr >= 0, epochs >= 1, batch_size >= 1".into()));
        }
        let d = &self.dataset;
        if d.size == 0 || !(d.noise_std.is_finite() && d.noise_std >= 0.0) || !d.teacher_scale.is_finite() {
            return Err(Error::InvalidArgument("dataset needs size >= 1 and finite noise_std >= 0".into()));
        }
        if let Some(t) = &d.teacher {
            if t.architecture() != &self.architecture || t.activation() != self.activation {
                return Err(Error::InvalidArgument("teacher must match architecture and activation".into()));
            }
        }
        if d.generator == Generator::Sine
            && (self.architecture.input_width() != 1 || self.architecture.output_width() != 1)
        {
            return Err(Error::InvalidArgument("the sine generator needs one input and one output".into()));
        }
        match &self.experiment {
            ExperimentKind::Stability { resample_fraction, .. } => {
                if !(0.0..=1.0).contains(resample_fraction) {
                    return Err(Error::InvalidArgument("resample_fraction must lie in [0, 1]".into()));
                }
            }
            ExperimentKind::Stopping {
                phi_stop,
                benchmark_epochs,
                ..
            } => {
                if !(phi_stop.is_finite() && *phi_stop >= 0.0) || *benchmark_epochs == 0 {
                    return Err(Error::InvalidArgument("stopping needs phi_stop >= 0 and benchmark_epochs >= 1".into()));
                }
            }
            ExperimentKind::GhostOptima {
                checkpoint_every,
                init,
            } => {
                if self.architecture.hidden_widths() != [2] {
                    return Err(Error::InvalidArchitecture(format!(
                        "the ghost-optima demo needs exactly one hidden layer of width 2, got {}",
                        self.architecture
                    )));
                }
                if *checkpoint_every == 0 {
                    return Err(Error::InvalidArgument("checkpoint_every must be >= 1".into()));
                }
                if let InitMode::PerturbedTeacher { scale } = init {
                    if !(scale.is_finite() && *scale >= 0.0) {
                        return Err(Error::InvalidArgument("perturbation scale must be finite and >= 0".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Seed of trial `i`.
    pub fn trial_seed(&self, i: usize) -> u64 {
        split_seed(self.master_seed, i as u64)
    }

    /// The fixed probe inputs of this configuration.
    pub fn probe_inputs(&self) -> Vec<Vec<f64>> {
        probe_inputs(
            self.architecture.input_width(),
            self.probes,
            split_seed(self.master_seed, PROBE_STREAM),
        )
    }

    pub(crate) fn benchmark_seed(&self) -> u64 {
        split_seed(self.master_seed, BENCHMARK_STREAM)
    }

    pub fn teacher(&self) -> Result<NetworkParams> {
        teacher_network(&self.architecture, self.activation, &self.dataset)
    }

    pub fn generate_dataset(&self) -> Result<Dataset> {
        let teacher = self.teacher()?;
        generate_dataset(&self.dataset, &teacher)
    }
}

/// The teacher network implied by a dataset spec.
pub fn teacher_network(arch: &Architecture, activation: Activation, spec: &DatasetSpec) -> Result<NetworkParams> {
    if let Some(t) = &spec.teacher {
        if t.architecture() != arch || t.activation() != activation {
            return Err(Error::InvalidArgument("teacher must match architecture and activation".into()));
        }
        return Ok(t.clone());
    }
    build_network(arch, activation, spec.teacher_scale, split_seed(spec.seed, 0))
}

fn draw_input(generator: Generator, width: usize, rng: &mut crate::seed::Rng) -> Vec<f64> {
    match generator {
        Generator::Teacher => (0..width).map(|_| StandardNormal.sample(rng)).collect(),
        Generator::Sine => vec![rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)],
    }
}

fn draw_target(generator: Generator, teacher: &NetworkParams, x: &[f64], noise: &Normal<f64>, rng: &mut crate::seed::Rng) -> Vec<f64> {
    let clean = match generator {
        Generator::Teacher => teacher.forward_unchecked(x),
        Generator::Sine => vec![x[0].sin()],
    };
    clean.into_iter().map(|y| y + noise.sample(rng)).collect()
}

type Samples = Vec<Vec<f64>>;

fn sample_points(
    spec: &DatasetSpec,
    teacher: &NetworkParams,
    count: usize,
    seed: u64,
) -> Result<(Samples, Samples)> {
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let width = teacher.architecture().input_width();
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let x = draw_input(spec.generator, width, &mut rng);
        targets.push(draw_target(spec.generator, teacher, &x, &noise, &mut rng));
        inputs.push(x);
    }
    Ok((inputs, targets))
}

/// Draws `spec.size` samples from the generator.
pub fn generate_dataset(spec: &DatasetSpec, teacher: &NetworkParams) -> Result<Dataset> {
    let (inputs, targets) = sample_points(spec, teacher, spec.size, split_seed(spec.seed, 1))?;
    Dataset::new(inputs, targets)
}

/// Copy of `data` with `round(fraction * len)` seeded-random points redrawn
/// from the same generator.
pub fn resample_dataset(
    data: &Dataset,
    spec: &DatasetSpec,
    teacher: &NetworkParams,
    fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!("resample fraction {fraction} outside [0, 1]")));
    }
    let count = (fraction * data.len() as f64).round() as usize;
    let mut rng = rng_from_seed(split_seed(seed, 0));
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut rng);
    let (fresh_x, fresh_y) = sample_points(spec, teacher, count, split_seed(seed, 1))?;
    let mut inputs = data.inputs().to_vec();
    let mut targets = data.targets().to_vec();
    for ((&i, x), y) in idx[..count].iter().zip(fresh_x).zip(fresh_y) {
        inputs[i] = x;
        targets[i] = y;
    }
    Dataset::new(inputs, targets)
}

/// `count` standard-normal inputs of the given width.
pub fn probe_inputs(width: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..count)
        .map(|_| (0..width).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Root-mean-square output difference over the probe inputs.
pub fn functional_distance(a: &NetworkParams, b: &NetworkParams, probes: &[Vec<f64>]) -> Result<f64> {
    if a.architecture() != b.architecture() {
        return Err(Error::DimensionMismatch("networks have different architectures".into()));
    }
    if probes.is_empty() {
        return Err(Error::InvalidArgument("probe set is empty".into()));
    }
    let mut acc = 0.0;
    for x in probes {
        let (ya, yb) = (a.forward(x)?, b.forward(x)?);
        acc += ya.iter().zip(&yb).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    Ok((acc / (probes.len() * a.architecture().output_width()) as f64).sqrt())
}

/// Plain SGD for `spec.epochs` epochs.
pub(crate) fn train(init: NetworkParams, data: &Dataset, spec: &TrainingSpec, seed: u64) -> Result<NetworkParams> {
    let mut run = SgdRun::new(init, data, spec.lr, spec.batch_size, seed)?;
    for _ in 0..spec.epochs {
        run.epoch(data)?;
    }
    Ok(run.into_params())
}

/// Runs `f` for every trial index in parallel and returns results in order.
pub(crate) fn run_trials<T: Send>(trials: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..trials).into_par_iter().map(&f).collect()
}

/// Output of [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ExperimentReport {
    Stability(StabilityReport),
    Stopping(StoppingReport),
    GhostOptima(GhostReport),
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string(self)
    }
}

/// Dispatches on the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    Ok(match cfg.experiment {
        ExperimentKind::Stability { .. } => ExperimentReport::Stability(run_stability_study(cfg)?),
        ExperimentKind::Stopping { .. } => ExperimentReport::Stopping(run_stopping_study(cfg)?),
        ExperimentKind::GhostOptima { .. } => ExperimentReport::GhostOptima(run_ghost_optima_demo(cfg)?),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn stability_config() -> ExperimentConfig {
        ExperimentConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            experiment: ExperimentKind::Stability {
                resample_fraction: 0.0,
                same_init: false,
            },
            master_seed: 1,
            trials: 2,
            architecture: Architecture::new(vec![2, 4, 1]).unwrap(),
            activation: Activation::Tanh,
            init_scale: 0.5,
            dataset: DatasetSpec {
                generator: Generator::Teacher,
                size: 64,
                noise_std: 0.0,
                seed: 3,
                teacher_scale: 1.0,
                teacher: None,
            },
            training: TrainingSpec {
                lr: 0.05,
                epochs: 20,
                batch_size: 8,
            },
            probes: 32,
            outputs: OutputSpec::default(),
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg = stability_config();
        let text = cfg.to_json().unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let mut bad = cfg.clone();
        bad.trials = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.schema_version = 99;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.experiment = ExperimentKind::GhostOptima {
            init: InitMode::Random,
            checkpoint_every: 1,
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidArchitecture(_))));
        assert!(ExperimentConfig::from_json(&text.replace("\"trials\"", "\"trails\"")).is_err());
    }

    #[test]
    fn datasets_are_seeded() {
        let cfg = stability_config();
        let a = cfg.generate_dataset().unwrap();
        assert_eq!(a, cfg.generate_dataset().unwrap());
        assert_eq!(a.len(), 64);
        let teacher = cfg.teacher().unwrap();
        assert_eq!(resample_dataset(&a, &cfg.dataset, &teacher, 0.0, 5).unwrap(), a);
        let half = resample_dataset(&a, &cfg.dataset, &teacher, 0.5, 5).unwrap();
        let changed = a.inputs().iter().zip(half.inputs()).filter(|(x, y)| x != y).count();
        assert_eq!(changed, 32);
        for (x, y) in half.inputs().iter().zip(half.targets()) {
            assert_eq!(&teacher.forward(x).unwrap(), y);
        }
    }

    #[test]
    fn sine_generator() {
        let mut cfg = stability_config();
        cfg.architecture = Architecture::new(vec![1, 4, 1]).unwrap();
        cfg.dataset.generator = Generator::Sine;
        let d = cfg.generate_dataset().unwrap();
        for (x, y) in d.inputs().iter().zip(d.targets()) {
            assert!(x[0].abs() <= std::f64::consts::PI);
            assert_eq!(y[0], x[0].sin());
        }
        cfg.architecture = Architecture::new(vec![2, 4, 1]).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn functional_distance_basics() {
        let cfg = stability_config();
        let t = cfg.teacher().unwrap();
        let probes = cfg.probe_inputs();
        assert_eq!(probes.len(), 32);
        assert_eq!(functional_distance(&t, &t, &probes).unwrap(), 0.0);
        let other = build_network(&cfg.architecture, cfg.activation, 1.0, 99).unwrap();
        assert!(functional_distance(&t, &other, &probes).unwrap() > 0.0);
    }
}
