use std::path::PathBuf;

use clap::Args;
use lossyckpt::compress::CompressorConfig;
use lossyckpt::sim::{measure_n_prime, Estimate};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::grid::parse_grid;
use crate::output::{csv_string, emit, emit_json, SCHEMA_VERSION};
use crate::problem::{ProblemArgs, SolverArgs};

#[derive(Debug, Args)]
pub struct NPrimeArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Value-range-relative bound of the lossy image.
    #[arg(long, conflicts_with_all = ["psnr", "lossless"])]
    eb_rel: Option<f64>,
    /// Fixed-PSNR target of the lossy image.
    #[arg(long, conflicts_with = "lossless")]
    psnr: Option<f64>,
    /// Recover from raw images instead (expects N′ = 0).
    #[arg(long)]
    lossless: bool,
    /// Failure iterations: `a,b,c` or `start:stop:count`.
    #[arg(long)]
    inject: String,
    /// Per-injection CSV path.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct Row {
    injection: usize,
    checkpoint_iteration: usize,
    final_iteration: usize,
    n_prime: Option<i64>,
    diverged: bool,
    relative_residual: f64,
}

#[derive(Serialize)]
struct NPrimeSummary {
    schema_version: u32,
    method: String,
    baseline_iterations: usize,
    samples: usize,
    mean_n_prime: Option<f64>,
    ci95_n_prime: Option<f64>,
    min_n_prime: Option<i64>,
    max_n_prime: Option<i64>,
    diverged: usize,
}

pub fn run(args: NPrimeArgs) -> CliResult<()> {
    let compressor = match (args.lossless, args.eb_rel, args.psnr) {
        (true, _, _) => None,
        (false, Some(e), _) => Some(CompressorConfig::relative(e)),
        (false, None, Some(p)) => Some(CompressorConfig::fixed_psnr(p)),
        (false, None, None) => return Err(CliError::usage("give --eb-rel, --psnr or --lossless")),
    };
    let injections: Vec<usize> = parse_grid(&args.inject)?
        .into_iter()
        .map(|v| {
            if v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::usage(format!("injection point {v} is not an integer")))
            }
        })
        .collect::<CliResult<_>>()?;
    let sys = args.problem.build()?;
    let config = args.solver.config()?;
    let report = measure_n_prime(args.solver.method, &sys, config, compressor.as_ref(), &injections)?;

    if let Some(path) = &args.output {
        let rows: Vec<Row> = report
            .samples
            .iter()
            .map(|s| Row {
                injection: s.injection,
                checkpoint_iteration: s.checkpoint_iteration,
                final_iteration: s.final_iteration,
                n_prime: s.n_prime,
                diverged: s.diverged,
                relative_residual: s.relative_residual,
            })
            .collect();
        emit(Some(path), &csv_string(&rows)?)?;
    }
    let values: Vec<i64> = report.samples.iter().filter_map(|s| s.n_prime).collect();
    let est = Estimate::from_samples(&values.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let diverged = report.samples.iter().filter(|s| s.diverged).count();
    emit_json(
        None,
        &NPrimeSummary {
            schema_version: SCHEMA_VERSION,
            method: args.solver.method.to_string(),
            baseline_iterations: report.baseline_iterations,
            samples: report.samples.len(),
            mean_n_prime: est.map(|e| e.mean),
            ci95_n_prime: est.map(|e| e.ci95),
            min_n_prime: values.iter().copied().min(),
            max_n_prime: values.iter().copied().max(),
            diverged,
        },
    )?;
    if diverged > 0 {
        return Err(CliError::runtime(format!("{diverged} recovery run(s) diverged")));
    }
    Ok(())
}
