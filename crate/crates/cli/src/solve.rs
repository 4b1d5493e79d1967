use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use lossyckpt::sparse::io::write_vector_file;
use lossyckpt::SolverState;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::{emit, emit_json, SCHEMA_VERSION};
use crate::problem::{ProblemArgs, SolverArgs};

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the solution vector here.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write the residual history as CSV (`iteration,residual_norm`).
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Serialize)]
struct SolveReport {
    schema_version: u32,
    method: String,
    n: usize,
    nnz: usize,
    iterations: usize,
    converged: bool,
    residual_norm: f64,
    relative_residual: f64,
    wall_seconds: f64,
}

pub fn run(args: SolveArgs) -> CliResult<()> {
    let sys = args.problem.build()?;
    let config = args.solver.config()?;
    let mut state = SolverState::init(args.solver.method, &sys, config)?;
    let start = Instant::now();
    let summary = state.solve(&sys)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    if let Some(p) = &args.output {
        write_vector_file(p, &state.solution())?;
    }
    if let Some(p) = &args.history {
        let mut text = String::from("iteration,residual_norm\n");
        for (i, r) in state.residual_history().iter().enumerate() {
            text.push_str(&format!("{i},{r}\n"));
        }
        emit(Some(p), &text)?;
    }
    emit_json(
        None,
        &SolveReport {
            schema_version: SCHEMA_VERSION,
            method: summary.method.to_string(),
            n: sys.n(),
            nnz: sys.a().nnz(),
            iterations: summary.iterations,
            converged: summary.converged,
            residual_norm: summary.residual_norm,
            relative_residual: summary.relative_residual,
            wall_seconds,
        },
    )?;
    if summary.converged {
        Ok(())
    } else {
        Err(CliError::runtime(format!(
            "{} did not converge within {} iterations",
            summary.method, config.max_iterations
        )))
    }
}
