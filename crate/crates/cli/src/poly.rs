use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use ghostnet::orthopoly::{
    fit_polytron, gauss_quadrature, parseval_residual, polytron_objective, FitMode, PolyFamily, PolytronLayer,
    ResidualReport, Weighting,
};
use ghostnet::prepruning::BinaryMask;
use ghostnet::Matrix;
use serde::Serialize;

use crate::util::{csv_text, emit, read_numeric_csv, read_text, runtime, to_json, usage, write_text, CliResult};

#[derive(Subcommand, Debug)]
pub enum PolyCommand {
    /// Fit a polytron layer to samples or to a named target function.
    Fit(FitArgs),
    /// Evaluate a fitted layer at given points.
    Eval(EvalArgs),
    /// Quadrature estimate of the squared approximation error.
    Residual(ResidualArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Normal,
    Gradient,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// laguerre, legendre or chebyshev.
    #[arg(long)]
    family: PolyFamily,
    #[arg(long)]
    degree: usize,
    /// Sample CSV with a header row: x, then one column per output.
    #[arg(long, conflicts_with = "target")]
    data: Option<PathBuf>,
    /// Named target sampled at Gauss nodes: exp:<a>, sin:<w> or basis:<i>.
    #[arg(long)]
    target: Option<String>,
    /// Number of Gauss nodes used with --target.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, value_enum, default_value = "normal")]
    mode: Mode,
    #[arg(long, default_value_t = 1.0)]
    lr: f64,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    /// Drop the family weight from the objective.
    #[arg(long)]
    unweighted: bool,
    /// Mask JSON of shape (degree+1) x outputs; masked coefficients stay zero.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Fitted layer JSON.
    #[arg(long)]
    out: PathBuf,
    /// Report JSON; printed to standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    x: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct ResidualArgs {
    #[arg(long)]
    model: PathBuf,
    /// exp:<a>, sin:<w> or basis:<i>.
    #[arg(long)]
    target: String,
    /// One-based output index.
    #[arg(long, default_value_t = 1)]
    output: usize,
    /// Gauss nodes of the quadrature.
    #[arg(long, default_value_t = 64)]
    nodes: usize,
}

/// A closed-form scalar function given on the command line.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Target {
    /// `exp(-a x)`
    Exp { a: f64 },
    /// `sin(w x)`
    Sin { w: f64 },
    /// The family's own basis polynomial of index `i`.
    Basis { i: usize },
}

impl Target {
    fn parse(s: &str) -> CliResult<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| usage(format!("target {s:?} must look like exp:<a>, sin:<w> or basis:<i>")))?;
        let bad = || usage(format!("bad target parameter in {s:?}"));
        match kind {
            "exp" => Ok(Target::Exp { a: arg.parse().map_err(|_| bad())? }),
            "sin" => Ok(Target::Sin { w: arg.parse().map_err(|_| bad())? }),
            "basis" => Ok(Target::Basis { i: arg.parse().map_err(|_| bad())? }),
            _ => Err(usage(format!("unknown target kind {kind:?}"))),
        }
    }

    fn eval(self, family: PolyFamily, x: f64) -> f64 {
        match self {
            Target::Exp { a } => (-a * x).exp(),
            Target::Sin { w } => (w * x).sin(),
            Target::Basis { i } => family.eval(i, x),
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case", tag = "source")]
enum SampleSource {
    File { rows: usize },
    Target { target: Target, samples: usize },
}

#[derive(Serialize)]
struct FitConfig {
    family: PolyFamily,
    degree: usize,
    data: SampleSource,
    mode: FitMode,
    weighting: Weighting,
    masked: bool,
}

#[derive(Serialize)]
struct FitReport {
    command: &'static str,
    config: FitConfig,
    objective: f64,
    final_mse: f64,
    residual_trace_len: usize,
    /// Quadrature residual against the target, when fitting a named target.
    residual: Option<ResidualReport>,
}

pub fn run(cmd: PolyCommand) -> CliResult {
    match cmd {
        PolyCommand::Fit(a) => fit(a),
        PolyCommand::Eval(a) => eval(a),
        PolyCommand::Residual(a) => residual(a),
    }
}

fn fit(args: FitArgs) -> CliResult {
    let family = args.family;
    let (xs, ys, source, target) = match (&args.data, &args.target) {
        (Some(path), _) => {
            let (header, rows) = read_numeric_csv(path)?;
            if header.len() < 2 {
                return Err(runtime(format!("{} needs an x column and at least one output", path.display())));
            }
            let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let ys = Matrix::from_rows(&rows.iter().map(|r| r[1..].to_vec()).collect::<Vec<_>>());
            (xs, ys, SampleSource::File { rows: rows.len() }, None)
        }
        (None, Some(spec)) => {
            let target = Target::parse(spec)?;
            let q = gauss_quadrature(family, args.samples)?;
            let ys = Matrix::from_rows(&q.nodes.iter().map(|&x| vec![target.eval(family, x)]).collect::<Vec<_>>());
            let source = SampleSource::Target {
                target,
                samples: args.samples,
            };
            (q.nodes, ys, source, Some(target))
        }
        (None, None) => return Err(usage("either --data or --target is required")),
    };
    let mode = match args.mode {
        Mode::Normal => FitMode::NormalEquations,
        Mode::Gradient => FitMode::Gradient {
            lr: args.lr,
            steps: args.steps,
        },
    };
    let weighting = if args.unweighted {
        Weighting::Unweighted
    } else {
        Weighting::Psi
    };
    let mask = match &args.mask {
        Some(path) => Some(
            BinaryMask::from_json(&read_text(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))?,
        ),
        None => None,
    };
    let masked = mask.is_some();
    let result = fit_polytron(&xs, &ys, family, args.degree, mode, weighting, mask)?;
    write_text(&args.out, &result.layer.to_json()?)?;

    let residual = match target {
        Some(t) => Some(parseval_residual(&result.layer, 0, |x| t.eval(family, x), args.samples)?),
        None => None,
    };
    let report = FitReport {
        command: "poly fit",
        config: FitConfig {
            family,
            degree: args.degree,
            data: source,
            mode,
            weighting,
            masked,
        },
        objective: polytron_objective(&result.layer, &xs, &ys, weighting)?,
        final_mse: *result.residual_trace.last().unwrap_or(&f64::NAN),
        residual_trace_len: result.residual_trace.len(),
        residual,
    };
    emit(args.report.as_deref(), &to_json(&report)?)
}

fn load_layer(path: &std::path::Path) -> CliResult<PolytronLayer> {
    PolytronLayer::from_json(&read_text(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn eval(args: EvalArgs) -> CliResult {
    let layer = load_layer(&args.model)?;
    let mut header = vec!["x".to_string()];
    header.extend((1..=layer.outputs()).map(|m| format!("y_{m}")));
    let rows = args.x.iter().map(|&x| {
        let mut row = vec![x.to_string()];
        row.extend(layer.forward(x).iter().map(f64::to_string));
        row
    });
    print!("{}", csv_text(&header, rows)?);
    Ok(())
}

fn residual(args: ResidualArgs) -> CliResult {
    let layer = load_layer(&args.model)?;
    if args.output == 0 || args.output > layer.outputs() {
        return Err(usage(format!("--output must lie in 1..={}", layer.outputs())));
    }
    let target = Target::parse(&args.target)?;
    let family = layer.family();
    let report = parseval_residual(&layer, args.output - 1, |x| target.eval(family, x), args.nodes)?;
    print!("{}", to_json(&report)?);
    Ok(())
}
