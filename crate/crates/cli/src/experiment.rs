use std::path::PathBuf;

use clap::Args;
use ghostnet::experiments::{run_experiment, ExperimentConfig, ExperimentReport};

use crate::util::{csv_text, emit, fmt_phi, read_text, runtime, write_text, CliResult};

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; replaces the configuration's master_seed.
    #[arg(long)]
    seed: u64,
    /// Report JSON; defaults to the configuration's outputs.report, then
    /// standard output.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-trial CSV; defaults to the configuration's outputs.trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

pub fn run(args: ExperimentArgs) -> CliResult {
    let mut cfg = ExperimentConfig::from_json(&read_text(&args.config)?)
        .map_err(|e| runtime(format!("{}: {e}", args.config.display())))?;
    cfg.master_seed = args.seed;
    let report_path = args.report.clone().or_else(|| cfg.outputs.report.as_ref().map(PathBuf::from));
    let trace_path = args.trace.clone().or_else(|| cfg.outputs.trace.as_ref().map(PathBuf::from));

    let report = run_experiment(&cfg)?;
    if let Some(path) = trace_path {
        write_text(&path, &trace_csv(&report)?)?;
    }
    emit(report_path.as_deref(), &report.to_json()?)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn trace_csv(report: &ExperimentReport) -> CliResult<String> {
    let header = |cols: &[&str]| cols.iter().map(|c| c.to_string()).collect::<Vec<_>>();
    match report {
        ExperimentReport::Stability(r) => csv_text(
            &header(&["trial", "seed", "functional_distance", "layer_index", "phi_raw", "phi_lex", "phi_maximin"]),
            r.trials.iter().flat_map(|t| {
                (0..t.phi_raw.len()).map(move |k| {
                    vec![
                        t.trial.to_string(),
                        t.seed.to_string(),
                        t.functional_distance.to_string(),
                        (k + 1).to_string(),
                        fmt_phi(t.phi_raw[k]),
                        fmt_phi(t.phi_lexicographic[k]),
                        fmt_phi(t.phi_maximin[k]),
                    ]
                })
            }),
        ),
        ExperimentReport::Stopping(r) => csv_text(
            &header(&[
                "trial",
                "seed",
                "stopped",
                "stop_epoch",
                "epochs_run",
                "closest_max_phi",
                "closest_epoch",
                "functional_distance",
            ]),
            r.trials.iter().map(|t| {
                let o = &t.outcome;
                vec![
                    t.trial.to_string(),
                    t.seed.to_string(),
                    o.stopped.to_string(),
                    opt(o.stop_epoch),
                    o.epochs_run.to_string(),
                    fmt_phi(o.closest_max_phi),
                    o.closest_epoch.to_string(),
                    o.functional_distance.to_string(),
                ]
            }),
        ),
        ExperimentReport::GhostOptima(r) => csv_text(
            &header(&["trial", "epoch", "loss", "phi_teacher", "phi_permuted", "phi_canonical", "vicinity"]),
            r.runs.iter().flat_map(|run| {
                run.checkpoints.iter().map(move |c| {
                    vec![
                        run.trial.to_string(),
                        c.epoch.to_string(),
                        opt(c.loss),
                        fmt_phi(c.phi_teacher),
                        fmt_phi(c.phi_permuted),
                        fmt_phi(c.phi_canonical),
                        opt(c.vicinity),
                    ]
                })
            }),
        ),
    }
}
