//! `ghostnet`: command-line front end for the ghostnet library.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 when a command
//! fails at run time. Diagnostics go to standard error as one line.

mod experiment;
mod network;
mod poly;
mod simulate;
mod train;
mod util;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use util::CliResult;

#[derive(Parser, Debug)]
#[command(name = "ghostnet", version, about = "Weight-space symmetry tools for layered networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Noisy gradient descent on a quadratic landscape.
    Simulate(simulate::SimulateArgs),
    /// Train a network with minibatch SGD, optionally pre-pruned.
    Train(train::TrainArgs),
    /// Reorder hidden nodes into canonical order.
    Canon(network::CanonArgs),
    /// Per-layer Φ between two networks as CSV.
    Compare(network::CompareArgs),
    /// Generate or apply symmetry-breaking masks.
    #[command(subcommand)]
    Mask(network::MaskCommand),
    /// Orthogonal-polynomial layers.
    #[command(subcommand)]
    Poly(poly::PolyCommand),
    /// Number of permutation-equivalent parameterizations of an architecture.
    Count(network::CountArgs),
    /// Run an experiment described by a JSON configuration.
    Experiment(experiment::ExperimentArgs),
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Simulate(a) => simulate::run(a),
        Command::Train(a) => train::run(a),
        Command::Canon(a) => network::canon(a),
        Command::Compare(a) => network::compare(a),
        Command::Mask(c) => network::mask(c),
        Command::Poly(c) => poly::run(c),
        Command::Count(a) => network::count(a),
        Command::Experiment(a) => experiment::run(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => {
            // the first paragraph of clap's message, folded onto one line
            let rendered = e.render().to_string();
            let first: Vec<&str> = rendered
                .trim_start()
                .lines()
                .take_while(|l| !l.trim().is_empty())
                .map(str::trim)
                .collect();
            eprintln!("{}", first.join(" "));
            std::process::exit(1);
        }
    };
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
