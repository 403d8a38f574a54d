use std::path::PathBuf;

use clap::Args;
use ghostnet::experiments::{generate_dataset, teacher_network, DatasetSpec, Generator};
use ghostnet::netcore::{build_network, save_network, train_sgd, Activation, Architecture, Dataset, SgdConfig};
use ghostnet::prepruning::{generate_mask, inflate_width, train_masked, BinaryMask};
use ghostnet::seed::split_seed;
use serde::Serialize;

use crate::util::{emit, read_numeric_csv, runtime, to_json, usage, CliResult};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Layer widths, input first.
    #[arg(long, value_delimiter = ',', required = true)]
    arch: Vec<usize>,
    #[arg(long, default_value = "tanh")]
    activation: Activation,
    /// Initial weights are uniform on [-s, s].
    #[arg(long, default_value_t = 0.5)]
    init_scale: f64,
    /// Training data CSV with a header row: input columns, then target columns.
    #[arg(long, conflicts_with = "generator")]
    data: Option<PathBuf>,
    /// Synthesize data instead: teacher or sine.
    #[arg(long, value_parser = parse_generator)]
    generator: Option<Generator>,
    /// Number of synthetic samples.
    #[arg(long, default_value_t = 200)]
    size: usize,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 1.0)]
    teacher_scale: f64,
    #[arg(long)]
    lr: f64,
    #[arg(long)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Pre-prune every hidden layer's incoming weights with masks of this
    /// zero fraction.
    #[arg(long)]
    mask_rho: Option<f64>,
    /// Widen hidden layers by 1/(1 - rho) before masking.
    #[arg(long, requires = "mask_rho")]
    inflate: bool,
    #[arg(long)]
    seed: u64,
    /// Trained network JSON.
    #[arg(long)]
    out: PathBuf,
    /// Report JSON; printed to standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_generator(s: &str) -> Result<Generator, String> {
    match s {
        "teacher" => Ok(Generator::Teacher),
        "sine" => Ok(Generator::Sine),
        other => Err(format!("unknown generator {other:?} (expected teacher or sine)")),
    }
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case", tag = "source")]
enum DataSource {
    File { rows: usize },
    Generated(DatasetSpec),
}

#[derive(Serialize)]
struct TrainConfig {
    architecture: Architecture,
    activation: Activation,
    init_scale: f64,
    data: DataSource,
    lr: f64,
    epochs: usize,
    batch_size: usize,
    mask_rho: Option<f64>,
    inflate: bool,
    seed: u64,
}

#[derive(Serialize)]
struct TrainReport {
    command: &'static str,
    config: TrainConfig,
    final_loss: f64,
    loss_trace: Vec<f64>,
    masks: Vec<Option<BinaryMask>>,
}

pub fn run(args: TrainArgs) -> CliResult {
    let base = Architecture::new(args.arch.clone())?;
    let arch = match (args.mask_rho, args.inflate) {
        (Some(rho), true) => inflate_width(&base, rho)?,
        _ => base.clone(),
    };

    let (data, source) = match (&args.data, args.generator) {
        (Some(path), _) => {
            let data = load_dataset(path, &arch)?;
            let rows = data.len();
            (data, DataSource::File { rows })
        }
        (None, Some(generator)) => {
            let spec = DatasetSpec {
                generator,
                size: args.size,
                noise_std: args.noise_std,
                seed: split_seed(args.seed, 1),
                teacher_scale: args.teacher_scale,
                teacher: None,
            };
            let teacher = teacher_network(&base, args.activation, &spec)?;
            (generate_dataset(&spec, &teacher)?, DataSource::Generated(spec))
        }
        (None, None) => return Err(usage("either --data or --generator is required")),
    };

    let init = build_network(&arch, args.activation, args.init_scale, split_seed(args.seed, 2))?;
    let sgd = SgdConfig {
        lr: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: split_seed(args.seed, 3),
    };
    let (masks, (trained, trace)) = match args.mask_rho {
        Some(rho) => {
            let depth = arch.depth();
            let masks = (1..=depth)
                .map(|k| {
                    if k == depth {
                        return Ok(None);
                    }
                    let (rows, cols) = arch.layer_shape(k);
                    generate_mask(rows, cols, rho, split_seed(args.seed, 100 + k as u64)).map(Some)
                })
                .collect::<ghostnet::Result<Vec<_>>>()?;
            let result = train_masked(&init, &masks, &data, &sgd)?;
            (masks, result)
        }
        None => (vec![None; arch.depth()], train_sgd(&init, &data, &sgd)?),
    };
    save_network(&trained, &args.out).map_err(|e| runtime(format!("cannot write {}: {e}", args.out.display())))?;

    let report = TrainReport {
        command: "train",
        config: TrainConfig {
            architecture: arch,
            activation: args.activation,
            init_scale: args.init_scale,
            data: source,
            lr: args.lr,
            epochs: args.epochs,
            batch_size: args.batch_size,
            mask_rho: args.mask_rho,
            inflate: args.inflate,
            seed: args.seed,
        },
        final_loss: *trace.last().expect("at least one epoch"),
        loss_trace: trace,
        masks,
    };
    emit(args.report.as_deref(), &to_json(&report)?)
}

fn load_dataset(path: &std::path::Path, arch: &Architecture) -> CliResult<Dataset> {
    let (header, rows) = read_numeric_csv(path)?;
    let (n_in, n_out) = (arch.input_width(), arch.output_width());
    if header.len() != n_in + n_out {
        return Err(runtime(format!(
            "{} has {} columns; architecture {arch} needs {n_in} inputs and {n_out} targets",
            path.display(),
            header.len()
        )));
    }
    let (inputs, targets) = rows.into_iter().map(|r| (r[..n_in].to_vec(), r[n_in..].to_vec())).unzip();
    Ok(Dataset::new(inputs, targets)?)
}
