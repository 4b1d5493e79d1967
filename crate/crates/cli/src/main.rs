//! `lossyckpt`: overhead models, compression runs, solver runs and failure
//! simulations from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure or divergence, 2 usage or config error.

mod codec;
mod config;
mod error;
mod grid;
mod model_cmd;
mod nprime;
mod output;
mod problem;
mod simulate;
mod solve;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "lossyckpt", version, about = "Lossy checkpointing laboratory for iterative solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Overhead-ratio sweeps and the lossy break-even bound.
    Model(model_cmd::ModelArgs),
    /// Compress a vector file into a block file.
    Compress(codec::CompressArgs),
    /// Decompress a block file into a vector file.
    Decompress(codec::DecompressArgs),
    /// Run a solver to convergence.
    Solve(solve::SolveArgs),
    /// Run a failure-injection ensemble described by a TOML config.
    Simulate(simulate::SimulateArgs),
    /// Measure extra iterations caused by single injected failures.
    Nprime(nprime::NPrimeArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Model(a) => model_cmd::run(a),
        Command::Compress(a) => codec::compress(a),
        Command::Decompress(a) => codec::decompress(a),
        Command::Solve(a) => solve::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Nprime(a) => nprime::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
