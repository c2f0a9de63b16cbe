//! `lrcc` command-line runner.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 solver failure, 3 I/O
//! error.

mod commands;
mod error;
mod manifest;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliResult;
use settings::Settings;

#[derive(Parser)]
#[command(name = "lrcc", version, about = "Low-rank convex clustering of matrix-valued data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (data.mts, labels.txt, means.mts)
    Gen(Settings),
    /// Build the k-NN or edge-list graph and write edges.txt
    Graph(Settings),
    /// Fit the model at one (gamma1, gamma2)
    Fit(Settings),
    /// Sweep a (gamma1, gamma2) grid and write sweep.csv
    Path(Settings),
    /// Recovery, asymptotic or prediction-bound diagnostics
    Check(Settings),
    /// Low-rank Lloyd baseline
    Baseline(Settings),
    /// ARI and NMI between --labels and --pred
    Eval(Settings),
    /// PCA coordinates of the vectorized samples as CSV
    Embed(Settings),
}

fn run(cmd: Command) -> CliResult<()> {
    let (f, flags): (fn(&Settings) -> CliResult<()>, Settings) = match cmd {
        Command::Gen(s) => (commands::gen, s),
        Command::Graph(s) => (commands::graph, s),
        Command::Fit(s) => (commands::fit, s),
        Command::Path(s) => (commands::path, s),
        Command::Check(s) => (commands::check, s),
        Command::Baseline(s) => (commands::baseline, s),
        Command::Eval(s) => (commands::eval, s),
        Command::Embed(s) => (commands::embed, s),
    };
    f(&Settings::resolve(flags)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lrcc: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
