use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{generate_dataset, run_trials, ExperimentConfig, ExperimentKind};
use crate::canonical::{canonicalize, frobenius_similarity, ReorderMethod};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::netcore::{build_network, NetworkParams, SgdRun};
use crate::seed::{rng_from_seed, split_seed};
use crate::symmetry::{apply_permutation, functional_equivalence, LayerPermutationSet};

/// Max-over-layers Φ below which a network counts as inside an optimum's
/// vicinity.
pub const VICINITY_PHI: f64 = 0.1;

/// Starting point of each demo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitMode {
    /// Teacher weights plus Gaussian noise of the given standard deviation.
    PerturbedTeacher { scale: f64 },
    /// Fresh uniform initialization with the configured `init_scale`.
    Random,
}

impl Default for InitMode {
    fn default() -> Self {
        InitMode::PerturbedTeacher { scale: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GhostCheckpoint {
    /// Completed epochs.
    pub epoch: usize,
    /// Mean batch loss of the last epoch (absent for the initial state).
    pub loss: Option<f64>,
    /// Raw max-over-layers Φ to the teacher and to its node-swapped copy.
    pub phi_teacher: f64,
    pub phi_permuted: f64,
    /// Max-over-layers Φ between the maximin canonical forms of the network
    /// and of the teacher.
    pub phi_canonical: f64,
    /// 0 near the teacher, 1 near the swapped copy, absent elsewhere.
    pub vicinity: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GhostRun {
    pub trial: usize,
    pub seed: u64,
    pub checkpoints: Vec<GhostCheckpoint>,
    /// Checkpoints spent in each vicinity.
    pub visits: [usize; 2],
    /// Moves from one vicinity to the other.
    pub traversals: usize,
    pub min_phi: f64,
    /// `min_phi < VICINITY_PHI`.
    pub approached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GhostReport {
    pub experiment: &'static str,
    pub config: ExperimentConfig,
    pub teacher: NetworkParams,
    pub permuted_teacher: NetworkParams,
    /// Probe check that the two teacher parameterizations compute the same
    /// function.
    pub teachers_equivalent: bool,
    pub teacher_max_deviation: f64,
    /// The swap fixes the teacher, so both optima coincide.
    pub degenerate: bool,
    pub vicinity_phi: f64,
    pub runs: Vec<GhostRun>,
}

fn max_phi(a: &NetworkParams, b: &NetworkParams) -> Result<f64> {
    a.weights()
        .iter()
        .zip(b.weights())
        .map(|(x, y)| frobenius_similarity(x, y))
        .try_fold(0.0, |acc, v| Ok(f64::max(acc, v?)))
}

fn perturbed(teacher: &NetworkParams, scale: f64, seed: u64) -> Result<NetworkParams> {
    let mut rng = rng_from_seed(seed);
    let weights = teacher
        .weights()
        .iter()
        .map(|w| {
            let data = w
                .as_slice()
                .iter()
                .map(|&v| v + scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            Matrix::from_vec(w.rows(), w.cols(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkParams::new(teacher.architecture().clone(), weights, teacher.activation())
}

/// Trains a network with two hidden nodes on data from a teacher and tracks
/// its distance to both equivalent parameterizations of that teacher.
pub fn run_ghost_optima_demo(cfg: &ExperimentConfig) -> Result<GhostReport> {
    cfg.validate()?;
    let ExperimentKind::GhostOptima {
        init, checkpoint_every, ..
    } = cfg.experiment
    else {
        return Err(Error::InvalidArgument("configuration is not a ghost-optima demo".into()));
    };
    let teacher = cfg.teacher()?;
    let swap = LayerPermutationSet::new(vec![vec![1, 0]])?;
    let permuted = apply_permutation(&teacher, &swap)?;
    let degenerate = permuted == teacher;
    let eq = functional_equivalence(&teacher, &permuted, cfg.probes, 1e-12, split_seed(cfg.master_seed, 7))?;
    let data = generate_dataset(&cfg.dataset, &teacher)?;
    let (canon_teacher, _) = canonicalize(&teacher, ReorderMethod::Maximin);

    let runs = run_trials(cfg.trials, |i| {
        let seed = cfg.trial_seed(i);
        let start = match init {
            InitMode::PerturbedTeacher { scale } => perturbed(&teacher, scale, split_seed(seed, 1))?,
            InitMode::Random => build_network(&cfg.architecture, cfg.activation, cfg.init_scale, split_seed(seed, 1))?,
        };
        let mut run = SgdRun::new(start, &data, cfg.training.lr, cfg.training.batch_size, split_seed(seed, 11))?;
        let mut checkpoints = Vec::new();
        let mut record = |run: &SgdRun, loss: Option<f64>| -> Result<()> {
            let p = run.params();
            let phi_teacher = max_phi(p, &teacher)?;
            let phi_permuted = max_phi(p, &permuted)?;
            let phi_canonical = max_phi(&canonicalize(p, ReorderMethod::Maximin).0, &canon_teacher)?;
            let best = phi_teacher.min(phi_permuted);
            let vicinity = (best < VICINITY_PHI).then(|| usize::from(phi_permuted < phi_teacher));
            checkpoints.push(GhostCheckpoint {
                epoch: run.epochs_done(),
                loss,
                phi_teacher,
                phi_permuted,
                phi_canonical,
                vicinity,
            });
            Ok(())
        };
        record(&run, None)?;
        for e in 1..=cfg.training.epochs {
            let loss = run.epoch(&data)?;
            if e % checkpoint_every == 0 || e == cfg.training.epochs {
                record(&run, Some(loss))?;
            }
        }

        let mut visits = [0usize; 2];
        let mut traversals = 0;
        let mut last = None;
        for v in checkpoints.iter().filter_map(|c| c.vicinity) {
            visits[v] += 1;
            if last.is_some_and(|l| l != v) {
                traversals += 1;
            }
            last = Some(v);
        }
        let min_phi = checkpoints
            .iter()
            .map(|c| c.phi_teacher.min(c.phi_permuted))
            .fold(f64::INFINITY, f64::min);
        Ok(GhostRun {
            trial: i,
            seed,
            checkpoints,
            visits,
            traversals,
            min_phi,
            approached: min_phi < VICINITY_PHI,
        })
    })?;

    Ok(GhostReport {
        experiment: "ghost_optima",
        config: cfg.clone(),
        teacher,
        permuted_teacher: permuted,
        teachers_equivalent: eq.equivalent,
        teacher_max_deviation: eq.max_deviation,
        degenerate,
        vicinity_phi: VICINITY_PHI,
        runs,
    })
}
