use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use lossyckpt::model;
use lossyckpt::sim::{
    CheckpointPolicy, CodecTiming, CostModel, EnsembleReport, SimConfig, Simulation, TrialReport, Workload,
};
use lossyckpt::{LinearSystem, SolveConfig};
use serde::Serialize;

use crate::config::{ExperimentConfig, Interval, PolicyKind};
use crate::error::{CliError, CliResult};
use crate::output::{csv_string, emit, emit_json, finite, SCHEMA_VERSION};
use crate::problem::build_system;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment TOML file.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// none, traditional or lossy.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Iteration count or `young`.
    #[arg(long)]
    interval: Option<String>,
    /// Expose checkpoints and recoveries to failures (true/false).
    #[arg(long)]
    failures_during_ckpt: Option<bool>,
    /// Also run the traditional policy.
    #[arg(long)]
    compare_traditional: bool,
    /// Per-trial CSV path.
    #[arg(long)]
    trials_csv: Option<PathBuf>,
    /// Aggregate JSON path; stdout when absent.
    #[arg(long)]
    summary_json: Option<PathBuf>,
}

/// One CSV row. The header is stable across versions with the same schema_version.
#[derive(Serialize)]
struct TrialRow<'a> {
    policy: &'a str,
    trial: usize,
    seed: u64,
    total_time: f64,
    compute_time: f64,
    checkpoint_time: f64,
    recovery_time: f64,
    rollback_time: f64,
    iterations_executed: usize,
    final_iteration: usize,
    baseline_iterations: usize,
    extra_iterations: i64,
    lossy_recoveries: usize,
    n_prime_per_recovery: Option<f64>,
    failures: usize,
    checkpoints: usize,
    checkpoints_voided: usize,
    recoveries: usize,
    overhead: f64,
    converged: bool,
    truncated: bool,
    diverged: bool,
}

impl<'a> TrialRow<'a> {
    fn new(policy: &'a str, t: &TrialReport) -> Self {
        Self {
            policy,
            trial: t.trial,
            seed: t.seed,
            total_time: t.total_time,
            compute_time: t.compute_time,
            checkpoint_time: t.checkpoint_time,
            recovery_time: t.recovery_time,
            rollback_time: t.rollback_time,
            iterations_executed: t.iterations_executed,
            final_iteration: t.final_iteration,
            baseline_iterations: t.baseline_iterations,
            extra_iterations: t.extra_iterations,
            lossy_recoveries: t.lossy_recoveries,
            n_prime_per_recovery: t.n_prime_per_recovery,
            failures: t.failures,
            checkpoints: t.checkpoints,
            checkpoints_voided: t.checkpoints_voided,
            recoveries: t.recoveries,
            overhead: t.overhead,
            converged: t.converged,
            truncated: t.truncated,
            diverged: t.diverged,
        }
    }
}

#[derive(Serialize)]
struct RunSummary {
    policy: &'static str,
    ckpt_intvl: usize,
    t_ckp: Option<f64>,
    t_rc: Option<f64>,
    baseline_iterations: usize,
    mean_total_time: f64,
    ci95_total_time: f64,
    mean_overhead: f64,
    ci95_overhead: f64,
    /// Mean extra iterations per lossy recovery; `null` without lossy recoveries.
    mean_n_prime: Option<f64>,
    ci95_n_prime: Option<f64>,
    mean_failures: f64,
    mean_checkpoints: f64,
    mean_recoveries: f64,
    mean_rollback_per_failure: Option<f64>,
    truncated_trials: usize,
    diverged_trials: usize,
    /// `⌊N/k⌋·T_ckp`, the overhead with no failures.
    checkpoint_only_overhead: Option<f64>,
    /// Closed-form expected total time for fixed costs; `null` when saturated.
    model_total_time: Option<f64>,
}

#[derive(Serialize)]
struct Verdict {
    n_prime_bound: Option<f64>,
    /// Measured (solver workloads) or forced (synthetic) N′.
    n_prime: Option<f64>,
    /// `yes`, `no`, or `unknown` when no lossy recovery happened.
    worthwhile: &'static str,
    simulated_lossy_faster: Option<bool>,
}

#[derive(Serialize)]
struct Summary {
    schema_version: u32,
    seed: u64,
    trials: usize,
    workload: String,
    lambda: f64,
    t_it: f64,
    failures_during_checkpoint: bool,
    runs: Vec<RunSummary>,
    break_even: Option<Verdict>,
}

struct Run {
    policy: PolicyKind,
    k: usize,
    t_ckp: Option<f64>,
    t_rc: Option<f64>,
    report: EnsembleReport,
}

fn policy_name(p: PolicyKind) -> &'static str {
    match p {
        PolicyKind::None => "none",
        PolicyKind::Traditional => "traditional",
        PolicyKind::Lossy => "lossy",
    }
}

pub fn run(args: SimulateArgs) -> CliResult<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(l) = args.lambda {
        cfg.failures.lambda = l;
    }
    if let Some(p) = args.policy {
        cfg.checkpoint.policy = p;
    }
    if let Some(i) = &args.interval {
        cfg.checkpoint.interval = Interval::parse(i)?;
    }
    if let Some(f) = args.failures_during_ckpt {
        cfg.failures.during_checkpoint = f;
    }
    cfg.checkpoint.compare_traditional |= args.compare_traditional;
    let trials_csv = args.trials_csv.or(cfg.output.trials_csv.take());
    let summary_json = args.summary_json.or(cfg.output.summary_json.take());

    let seed = cfg
        .seed
        .ok_or_else(|| CliError::usage("a seed is required (config `seed` or --seed)"))?;
    let lambda = cfg.failures.lambda;
    let t_it = cfg.timing.t_it;
    let policy = cfg.checkpoint.policy;
    let system = match cfg.problem.kind.problem() {
        None => None,
        Some(kind) => Some(Arc::new(build_system(
            kind,
            cfg.problem.size.unwrap_or(32),
            cfg.problem.path.as_deref(),
            cfg.problem.rhs.as_deref(),
        )?)),
    };

    let primary_t_ckp = match policy {
        PolicyKind::Traditional => cfg.timing.t_ckp.or(cfg.timing.t_ckp_traditional),
        _ => cfg.timing.t_ckp,
    };
    let primary_t_rc = cfg.timing.t_rc.or(primary_t_ckp);
    let mut runs = vec![simulate_one(&cfg, seed, &system, policy, primary_t_ckp, primary_t_rc)?];

    let compare = cfg.checkpoint.compare_traditional && policy == PolicyKind::Lossy;
    if compare {
        let t_ckp = cfg.timing.t_ckp_traditional;
        if t_ckp.is_none() && cfg.timing.write_bandwidth.is_none() {
            return Err(CliError::usage("compare_traditional needs timing.t_ckp_traditional"));
        }
        let t_rc = cfg.timing.t_rc_traditional.or(t_ckp);
        runs.push(simulate_one(&cfg, seed, &system, PolicyKind::Traditional, t_ckp, t_rc)?);
    }

    let break_even = (policy == PolicyKind::Lossy).then(|| verdict(&cfg, &runs)).transpose()?;
    let workload = match (&system, cfg.problem.kind) {
        (None, _) => format!("synthetic(N={})", cfg.problem.n_iterations.unwrap_or(0)),
        (Some(sys), kind) => format!("{kind:?}(n={}) {}", sys.n(), cfg.solver.method).to_lowercase(),
    };
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        seed,
        trials: cfg.trials,
        workload,
        lambda,
        t_it,
        failures_during_checkpoint: cfg.failures.during_checkpoint,
        runs: runs.iter().map(|r| summarize(r, lambda, t_it)).collect::<CliResult<_>>()?,
        break_even,
    };

    if let Some(path) = &trials_csv {
        let rows: Vec<TrialRow> = runs
            .iter()
            .flat_map(|r| r.report.trials.iter().map(|t| TrialRow::new(policy_name(r.policy), t)))
            .collect();
        emit(Some(path), &csv_string(&rows)?)?;
    }
    emit_json(summary_json.as_deref(), &summary)?;

    let diverged: usize = runs.iter().map(|r| r.report.diverged_trials).sum();
    if diverged > 0 {
        return Err(CliError::runtime(format!("{diverged} trial(s) diverged; partial report written")));
    }
    Ok(())
}

fn simulate_one(
    cfg: &ExperimentConfig,
    seed: u64,
    system: &Option<Arc<LinearSystem>>,
    policy: PolicyKind,
    t_ckp: Option<f64>,
    t_rc: Option<f64>,
) -> CliResult<Run> {
    let lambda = cfg.failures.lambda;
    let t_it = cfg.timing.t_it;
    let k = if cfg.checkpoint.interval.is_young()? {
        let t = t_ckp.ok_or_else(|| CliError::usage("interval = \"young\" needs a fixed checkpoint cost (timing.t_ckp)"))?;
        if lambda <= 0.0 {
            return Err(CliError::usage("interval = \"young\" needs lambda > 0"));
        }
        model::young_iterations(1.0 / lambda, t, t_it)?
    } else {
        match cfg.checkpoint.interval {
            Interval::Count(k) => k,
            Interval::Named(_) => unreachable!("validated by is_young"),
        }
    };

    let cost = match (t_ckp, cfg.timing.write_bandwidth, cfg.timing.read_bandwidth) {
        (Some(t_ckp), _, _) => CostModel::Fixed {
            t_ckp,
            t_rc: t_rc.unwrap_or(t_ckp),
        },
        (None, Some(w), Some(r)) => CostModel::Bandwidth {
            write_bandwidth: w,
            read_bandwidth: r,
            timing: if cfg.timing.measured_codec {
                CodecTiming::Measured
            } else {
                CodecTiming::Injected {
                    t_comp: cfg.timing.t_comp.unwrap_or(0.0),
                    t_decomp: cfg.timing.t_decomp.unwrap_or(0.0),
                }
            },
        },
        (None, _, _) if policy == PolicyKind::None => CostModel::Fixed {
            t_ckp: 0.0,
            t_rc: t_rc.unwrap_or(0.0),
        },
        _ => {
            return Err(CliError::usage(
                "timing needs t_ckp, or write_bandwidth and read_bandwidth",
            ))
        }
    };

    let check_policy = match policy {
        PolicyKind::None => CheckpointPolicy::None,
        PolicyKind::Traditional => CheckpointPolicy::Traditional,
        PolicyKind::Lossy => CheckpointPolicy::Lossy(
            cfg.compressor
                .as_ref()
                .ok_or_else(|| CliError::usage("lossy policy needs a [compressor] section"))?
                .config()?,
        ),
    };

    let workload = match system {
        None => Workload::Synthetic {
            n_iterations: cfg
                .problem
                .n_iterations
                .ok_or_else(|| CliError::usage("synthetic problems need n_iterations"))?,
            forced_n_prime: cfg.problem.forced_n_prime,
        },
        Some(sys) => {
            let s = &cfg.solver;
            Workload::Solver {
                method: s.method,
                system: sys.clone(),
                config: SolveConfig::new(s.tolerance, s.max_iterations, k).with_restart_len(s.restart.unwrap_or(k)),
            }
        }
    };

    let sim = Simulation::new(SimConfig {
        workload,
        policy: check_policy,
        cost,
        ckpt_intvl: k,
        t_it,
        lambda,
        failures_during_ckpt: cfg.failures.during_checkpoint,
        trials: cfg.trials,
        max_time: cfg.max_time,
        seed,
    })?;
    let (t_ckp, t_rc) = match cost {
        CostModel::Fixed { t_ckp, t_rc } => (Some(t_ckp), Some(t_rc)),
        CostModel::Bandwidth { .. } => (None, None),
    };
    Ok(Run {
        policy,
        k,
        t_ckp,
        t_rc,
        report: sim.run_ensemble()?,
    })
}

fn summarize(run: &Run, lambda: f64, t_it: f64) -> CliResult<RunSummary> {
    let r = &run.report;
    let n = r.baseline_iterations as f64;
    let checkpoints_taken = if run.policy == PolicyKind::None {
        0.0
    } else {
        (r.baseline_iterations / run.k) as f64
    };
    let model_total_time = match (run.t_ckp, run.t_rc, run.policy) {
        (Some(_), Some(t_rc), PolicyKind::None) => finite_model(model::expected_total_time(lambda, n, t_it, 0.0, t_rc)),
        (Some(t_ckp), Some(t_rc), PolicyKind::Traditional) => {
            finite_model(model::expected_total_time(lambda, n, t_it, t_ckp, t_rc))
        }
        (Some(t_ckp), Some(t_rc), PolicyKind::Lossy) => {
            let np = r.n_prime.map_or(0.0, |e| e.mean);
            finite_model(model::overhead_lossy_exact(lambda, n, t_it, t_ckp, t_rc, np).map(|o| n * t_it + o))
        }
        _ => None,
    };
    Ok(RunSummary {
        policy: policy_name(run.policy),
        ckpt_intvl: run.k,
        t_ckp: run.t_ckp,
        t_rc: run.t_rc,
        baseline_iterations: r.baseline_iterations,
        mean_total_time: r.total_time.mean,
        ci95_total_time: r.total_time.ci95,
        mean_overhead: r.overhead.mean,
        ci95_overhead: r.overhead.ci95,
        mean_n_prime: r.n_prime.map(|e| e.mean),
        ci95_n_prime: r.n_prime.map(|e| e.ci95),
        mean_failures: r.failures.mean,
        mean_checkpoints: r.checkpoints.mean,
        mean_recoveries: r.recoveries.mean,
        mean_rollback_per_failure: r.mean_rollback_per_failure,
        truncated_trials: r.truncated_trials,
        diverged_trials: r.diverged_trials,
        checkpoint_only_overhead: run.t_ckp.map(|t| checkpoints_taken * t),
        model_total_time,
    })
}

fn finite_model(v: lossyckpt::Result<f64>) -> Option<f64> {
    v.ok().and_then(finite)
}

fn verdict(cfg: &ExperimentConfig, runs: &[Run]) -> CliResult<Verdict> {
    let lossy = &runs[0];
    let bound = match (cfg.timing.t_ckp_traditional, lossy.t_ckp) {
        (Some(trad), Some(l)) => finite(model::n_prime_bound(cfg.failures.lambda, cfg.timing.t_it, trad, l)?),
        _ => None,
    };
    let n_prime = match cfg.problem.kind.problem() {
        None => Some(cfg.problem.forced_n_prime as f64),
        Some(_) => lossy.report.n_prime.map(|e| e.mean),
    };
    let worthwhile = match (n_prime, bound) {
        (Some(np), Some(b)) if np <= b => "yes",
        (Some(_), Some(_)) => "no",
        // λ = 0: any N′ is acceptable.
        (_, None) if cfg.failures.lambda == 0.0 && cfg.timing.t_ckp_traditional.is_some() => "yes",
        _ => "unknown",
    };
    Ok(Verdict {
        n_prime_bound: bound,
        n_prime,
        worthwhile,
        simulated_lossy_faster: runs
            .get(1)
            .map(|trad| lossy.report.total_time.mean < trad.report.total_time.mean),
    })
}
