use std::path::PathBuf;

use clap::{Args, Subcommand};
use ghostnet::canonical::{canonicalize, network_distance, ReorderMethod};
use ghostnet::netcore::{load_network, network_to_json, Architecture, NetworkParams};
use ghostnet::prepruning::{apply_mask, generate_mask, BinaryMask};
use ghostnet::symmetry::count_equivalent_optima;

use crate::util::{csv_text, emit, fmt_phi, read_text, runtime, usage, write_text, CliResult};

fn load(path: &std::path::Path) -> CliResult<NetworkParams> {
    load_network(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

#[derive(Args, Debug)]
pub struct CanonArgs {
    network: PathBuf,
    /// raw, lexicographic or maximin.
    #[arg(long, default_value = "maximin")]
    method: ReorderMethod,
    /// Canonical network JSON; printed to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the permutation that was applied.
    #[arg(long)]
    perm_out: Option<PathBuf>,
}

pub fn canon(args: CanonArgs) -> CliResult {
    let params = load(&args.network)?;
    let (canonical, perms) = canonicalize(&params, args.method);
    if let Some(path) = &args.perm_out {
        write_text(path, &perms.to_json()?)?;
    }
    emit(args.out.as_deref(), &network_to_json(&canonical)?)
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Print only this method's Φ column.
    #[arg(long)]
    method: Option<ReorderMethod>,
}

pub fn compare(args: CompareArgs) -> CliResult {
    let (a, b) = (load(&args.a)?, load(&args.b)?);
    if !a.same_shape(&b) {
        return Err(runtime(format!(
            "architectures differ: {} vs {}",
            a.architecture(),
            b.architecture()
        )));
    }
    let methods = match args.method {
        Some(m) => vec![m],
        None => vec![ReorderMethod::Raw, ReorderMethod::Lexicographic, ReorderMethod::Maximin],
    };
    let phis = methods
        .iter()
        .map(|&m| Ok(network_distance(&a, &b, m)?.per_layer_phi))
        .collect::<CliResult<Vec<_>>>()?;
    let mut header = vec!["layer_index".to_string()];
    header.extend(methods.iter().map(|m| format!("phi_{}", column_name(*m))));
    let rows = (0..a.architecture().depth()).map(|k| {
        let mut row = vec![(k + 1).to_string()];
        row.extend(phis.iter().map(|p| fmt_phi(p[k])));
        row
    });
    print!("{}", csv_text(&header, rows)?);
    Ok(())
}

fn column_name(m: ReorderMethod) -> &'static str {
    match m {
        ReorderMethod::Raw => "raw",
        ReorderMethod::Lexicographic => "lex",
        ReorderMethod::Maximin => "maximin",
    }
}

#[derive(Subcommand, Debug)]
pub enum MaskCommand {
    /// Draw a binary mask with pairwise distinct columns.
    Gen(MaskGenArgs),
    /// Zero the masked weights of one layer of a network.
    Apply(MaskApplyArgs),
}

#[derive(Args, Debug)]
pub struct MaskGenArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Expected fraction of zeros.
    #[arg(long)]
    rho: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MaskApplyArgs {
    #[arg(long)]
    network: PathBuf,
    /// One-based index of the weight matrix W_k to mask.
    #[arg(long)]
    layer: usize,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn mask(cmd: MaskCommand) -> CliResult {
    match cmd {
        MaskCommand::Gen(a) => {
            let m = generate_mask(a.rows, a.cols, a.rho, a.seed)?;
            emit(a.out.as_deref(), &m.to_json()?)
        }
        MaskCommand::Apply(a) => {
            let params = load(&a.network)?;
            let depth = params.architecture().depth();
            if a.layer == 0 || a.layer > depth {
                return Err(usage(format!("--layer must lie in 1..={depth}")));
            }
            let m = BinaryMask::from_json(&read_text(&a.mask)?)
                .map_err(|e| runtime(format!("{}: {e}", a.mask.display())))?;
            let mut weights = params.weights().to_vec();
            weights[a.layer - 1] = apply_mask(&weights[a.layer - 1], &m)?;
            let masked = NetworkParams::new(params.architecture().clone(), weights, params.activation())?;
            emit(a.out.as_deref(), &network_to_json(&masked)?)
        }
    }
}

#[derive(Args, Debug)]
pub struct CountArgs {
    /// Layer widths, input first.
    #[arg(long, value_delimiter = ',', required = true)]
    arch: Vec<usize>,
}

pub fn count(args: CountArgs) -> CliResult {
    let arch = Architecture::new(args.arch)?;
    println!("{}", count_equivalent_optima(&arch));
    Ok(())
}
