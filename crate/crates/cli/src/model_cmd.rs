use std::path::PathBuf;

use clap::Args;
use lossyckpt::model::{self, sweep_overhead_surface, sweep_to_csv};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::grid::parse_grid;
use crate::output::{emit, emit_json, finite, SCHEMA_VERSION};

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Failure rates per second: `a,b,c` or `start:stop:count`. Default 0 to 3.5/hour.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Checkpoint times in seconds. Default 0 to 140.
    #[arg(long)]
    tckp_grid: Option<String>,
    /// Print the largest acceptable N′ (rounded down) instead of a sweep.
    #[arg(long, requires_all = ["lambda", "t_it", "tckp_trad", "tckp_lossy"])]
    bound: bool,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    t_it: Option<f64>,
    #[arg(long)]
    tckp_trad: Option<f64>,
    #[arg(long)]
    tckp_lossy: Option<f64>,
    /// With `--bound`, print a JSON record instead of the bare number.
    #[arg(long)]
    json: bool,
    /// Write the sweep CSV here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Serialize)]
struct BoundReport {
    schema_version: u32,
    lambda: f64,
    t_it: f64,
    t_ckp_trad: f64,
    t_ckp_lossy: f64,
    /// `null` when λ = 0 (any N′ is acceptable).
    n_prime_bound: Option<f64>,
    /// Negative when lossy checkpoints are the slower kind.
    n_prime_max: Option<i64>,
}

pub fn run(args: ModelArgs) -> CliResult<()> {
    if args.bound {
        return bound(&args);
    }
    let lambdas = match &args.lambda_grid {
        Some(s) => parse_grid(s)?,
        None => model::default_lambda_grid(),
    };
    let tckps = match &args.tckp_grid {
        Some(s) => parse_grid(s)?,
        None => model::default_tckp_grid(),
    };
    let cells = sweep_overhead_surface(&lambdas, &tckps)?;
    emit(args.output.as_deref(), &sweep_to_csv(&cells))
}

fn bound(args: &ModelArgs) -> CliResult<()> {
    let (Some(lambda), Some(t_it), Some(trad), Some(lossy)) = (args.lambda, args.t_it, args.tckp_trad, args.tckp_lossy)
    else {
        return Err(CliError::usage("--bound needs --lambda, --t-it, --tckp-trad and --tckp-lossy"));
    };
    let b = model::n_prime_bound(lambda, t_it, trad, lossy)?;
    if args.json {
        return emit_json(
            args.output.as_deref(),
            &BoundReport {
                schema_version: SCHEMA_VERSION,
                lambda,
                t_it,
                t_ckp_trad: trad,
                t_ckp_lossy: lossy,
                n_prime_bound: finite(b),
                n_prime_max: finite(b).map(|v| v.floor() as i64),
            },
        );
    }
    let text = if b.is_finite() {
        format!("{}\n", b.floor() as i64)
    } else {
        "inf\n".to_string()
    };
    emit(args.output.as_deref(), &text)
}
