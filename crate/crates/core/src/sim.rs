//! Discrete-event failure-injection simulator.
//!
//! A trial runs a workload under Poisson failures and a checkpoint policy,
//! charging simulated time for every iteration, checkpoint and recovery.
//! Simulated time is decoupled from wall-clock time: `T_it` and checkpoint
//! costs are injected, so hour-scale failure regimes run in milliseconds.
//!
//! Failure semantics:
//!
//! * a failure during an iteration loses all work since the last good image;
//! * a failure during a checkpoint voids the in-flight image (the previous
//!   image stays live) and also loses the work since that image;
//! * a failure during recovery restarts the recovery;
//! * with no image yet, the run restarts from the initial guess but still
//!   pays the recovery cost.
//!
//! When `failures_during_ckpt` is false only iterations are exposed to
//! failures, which is the assumption behind the closed-form model.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{restore, CheckpointImage, Payload, StorageTarget};
use crate::compress::{compress, CompressorConfig};
use crate::error::{invalid, Error, Result};
use crate::solvers::{LinearSystem, Method, SolveConfig, SolverState};

/// What a trial executes.
#[derive(Clone, Debug)]
pub enum Workload {
    /// A real solver; lossy recoveries perturb the iterate and N′ emerges.
    Solver {
        method: Method,
        system: Arc<LinearSystem>,
        config: SolveConfig,
    },
    /// A counter that converges after `n_iterations`; every lossy recovery
    /// pushes convergence back by `forced_n_prime` iterations.
    Synthetic { n_iterations: usize, forced_n_prime: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CheckpointPolicy {
    None,
    Traditional,
    Lossy(CompressorConfig),
}

impl CheckpointPolicy {
    pub fn is_lossy(&self) -> bool {
        matches!(self, CheckpointPolicy::Lossy(_))
    }
}

/// Compression timing for bandwidth-derived costs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CodecTiming {
    /// Use measured wall-clock compress/decompress seconds (not reproducible).
    Measured,
    /// Fixed simulated costs per checkpoint and per recovery.
    Injected { t_comp: f64, t_decomp: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CostModel {
    /// Constant `T_ckp` and `T_rc` per checkpoint and recovery.
    Fixed { t_ckp: f64, t_rc: f64 },
    /// `T_ckp = T_comp + bytes / write_bw`, `T_rc = bytes / read_bw + T_decomp`.
    /// Only available for solver workloads.
    Bandwidth {
        write_bandwidth: f64,
        read_bandwidth: f64,
        timing: CodecTiming,
    },
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub workload: Workload,
    pub policy: CheckpointPolicy,
    pub cost: CostModel,
    /// Checkpoint every `ckpt_intvl` iterations.
    pub ckpt_intvl: usize,
    pub t_it: f64,
    /// Failures per simulated time unit.
    pub lambda: f64,
    pub failures_during_ckpt: bool,
    pub trials: usize,
    /// Trials stop (flagged truncated) past this time. Defaults to
    /// `1000·N·T_it`.
    pub max_time: Option<f64>,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.t_it > 0.0 && self.t_it.is_finite()) {
            return Err(invalid(format!("T_it must be positive, got {}", self.t_it)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.ckpt_intvl == 0 {
            return Err(invalid("checkpoint interval must be at least 1"));
        }
        if let Some(t) = self.max_time {
            if !(t > 0.0) {
                return Err(invalid("max_time must be positive"));
            }
        }
        match self.cost {
            CostModel::Fixed { t_ckp, t_rc } => {
                if !(t_ckp >= 0.0 && t_rc >= 0.0 && t_ckp.is_finite() && t_rc.is_finite()) {
                    return Err(invalid("T_ckp and T_rc must be non-negative"));
                }
            }
            CostModel::Bandwidth {
                write_bandwidth,
                read_bandwidth,
                timing,
            } => {
                if !(write_bandwidth > 0.0 && read_bandwidth > 0.0) {
                    return Err(invalid("bandwidths must be positive"));
                }
                if let CodecTiming::Injected { t_comp, t_decomp } = timing {
                    if !(t_comp >= 0.0 && t_decomp >= 0.0) {
                        return Err(invalid("T_comp and T_decomp must be non-negative"));
                    }
                }
                if matches!(self.workload, Workload::Synthetic { .. }) {
                    return Err(invalid("bandwidth costs need a solver workload"));
                }
            }
        }
        if let CheckpointPolicy::Lossy(c) = &self.policy {
            c.validate()?;
        }
        match &self.workload {
            Workload::Solver { config, system, .. } => {
                config.validate()?;
                if system.n() == 0 {
                    return Err(invalid("empty system"));
                }
            }
            Workload::Synthetic { n_iterations, .. } => {
                if *n_iterations == 0 {
                    return Err(invalid("synthetic workload needs at least one iteration"));
                }
            }
        }
        Ok(())
    }
}

/// One trial's outcome. All times are simulated units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub trial: usize,
    pub seed: u64,
    pub total_time: f64,
    /// Iterations on the final trajectory.
    pub compute_time: f64,
    /// Successful checkpoints plus the elapsed part of voided ones.
    pub checkpoint_time: f64,
    /// Recoveries, including interrupted attempts.
    pub recovery_time: f64,
    /// Work lost to failures, including partial iterations.
    pub rollback_time: f64,
    /// Every iteration executed, re-executions included.
    pub iterations_executed: usize,
    /// Iteration index at termination.
    pub final_iteration: usize,
    /// Failure-free iteration count N.
    pub baseline_iterations: usize,
    /// `final_iteration − N`; may be negative.
    pub extra_iterations: i64,
    pub lossy_recoveries: usize,
    /// `extra_iterations / lossy_recoveries` when there was at least one.
    pub n_prime_per_recovery: Option<f64>,
    pub failures: usize,
    pub checkpoints: usize,
    pub checkpoints_voided: usize,
    pub recoveries: usize,
    /// `total_time − N·T_it`.
    pub overhead: f64,
    pub converged: bool,
    pub truncated: bool,
    /// Solver hit its iteration cap without converging.
    pub diverged: bool,
    pub relative_residual: Option<f64>,
}

impl TrialReport {
    /// Sum of the four time buckets; equals `total_time` up to rounding.
    pub fn bucket_sum(&self) -> f64 {
        self.compute_time + self.checkpoint_time + self.recovery_time + self.rollback_time
    }
}

/// Sample mean with a normal-approximation 95% confidence half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci95: f64,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        let n = samples.len();
        if n == 0 {
            return None;
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self {
            n,
            mean,
            sd,
            ci95: 1.96 * sd / (n as f64).sqrt(),
        })
    }

    pub fn low(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn high(&self) -> f64 {
        self.mean + self.ci95
    }

    /// True when the two 95% intervals do not overlap.
    pub fn separated_from(&self, other: &Estimate) -> bool {
        self.high() < other.low() || other.high() < self.low()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub baseline_iterations: usize,
    pub trials: Vec<TrialReport>,
    pub total_time: Estimate,
    pub overhead: Estimate,
    /// Over trials with at least one lossy recovery.
    pub n_prime: Option<Estimate>,
    pub failures: Estimate,
    pub checkpoints: Estimate,
    pub recoveries: Estimate,
    /// Total rollback time divided by total failures across all trials.
    pub mean_rollback_per_failure: Option<f64>,
    pub truncated_trials: usize,
    pub diverged_trials: usize,
}

/// A validated configuration with its failure-free baseline resolved.
pub struct Simulation {
    config: SimConfig,
    baseline_iterations: usize,
    max_time: f64,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let baseline_iterations = match &config.workload {
            Workload::Synthetic { n_iterations, .. } => *n_iterations,
            Workload::Solver { method, system, config: sc } => {
                let summary = SolverState::init(*method, system, *sc)?.solve(system)?;
                if !summary.converged {
                    return Err(invalid(format!(
                        "failure-free baseline did not converge within {} iterations",
                        sc.max_iterations
                    )));
                }
                summary.iterations
            }
        };
        let max_time = config
            .max_time
            .unwrap_or(1000.0 * (baseline_iterations.max(1) as f64) * config.t_it);
        Ok(Self {
            config,
            baseline_iterations,
            max_time,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn baseline_iterations(&self) -> usize {
        self.baseline_iterations
    }

    /// Runs trial `index` with seed `seed + index`.
    pub fn run_trial(&self, index: usize) -> Result<TrialReport> {
        self.run_trial_with_solution(index).map(|(r, _)| r)
    }

    /// Like [`Simulation::run_trial`], also returning the final solver iterate.
    pub fn run_trial_with_solution(&self, index: usize) -> Result<(TrialReport, Option<Vec<f64>>)> {
        let seed = self.config.seed.wrapping_add(index as u64);
        Trial::new(self, seed)?.run(index, seed)
    }

    pub fn run_ensemble(&self) -> Result<EnsembleReport> {
        let trials: Vec<TrialReport> = (0..self.config.trials)
            .into_par_iter()
            .map(|i| self.run_trial(i))
            .collect::<Result<_>>()?;
        Ok(aggregate(self.baseline_iterations, trials))
    }
}

pub fn run_trial(config: SimConfig, index: usize) -> Result<TrialReport> {
    Simulation::new(config)?.run_trial(index)
}

pub fn run_ensemble(config: SimConfig) -> Result<EnsembleReport> {
    Simulation::new(config)?.run_ensemble()
}

fn aggregate(baseline_iterations: usize, trials: Vec<TrialReport>) -> EnsembleReport {
    let col = |f: &dyn Fn(&TrialReport) -> f64| trials.iter().map(f).collect::<Vec<_>>();
    let est = |v: Vec<f64>| Estimate::from_samples(&v).expect("at least one trial");
    let n_prime: Vec<f64> = trials.iter().filter_map(|t| t.n_prime_per_recovery).collect();
    let failures: usize = trials.iter().map(|t| t.failures).sum();
    let rollback: f64 = trials.iter().map(|t| t.rollback_time).sum();
    EnsembleReport {
        baseline_iterations,
        total_time: est(col(&|t| t.total_time)),
        overhead: est(col(&|t| t.overhead)),
        n_prime: Estimate::from_samples(&n_prime),
        failures: est(col(&|t| t.failures as f64)),
        checkpoints: est(col(&|t| t.checkpoints as f64)),
        recoveries: est(col(&|t| t.recoveries as f64)),
        mean_rollback_per_failure: (failures > 0).then(|| rollback / failures as f64),
        truncated_trials: trials.iter().filter(|t| t.truncated).count(),
        diverged_trials: trials.iter().filter(|t| t.diverged).count(),
        trials,
    }
}

/// Compensated (Neumaier) running sum, so the bookkeeping identity holds
/// to well below 1e-9 over long trials.
#[derive(Clone, Copy, Default)]
struct Acc {
    sum: f64,
    c: f64,
}

impl Acc {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

enum Outcome {
    Done,
    /// Failed after this much elapsed time.
    Failed(f64),
}

struct FailureClock {
    rng: ChaCha8Rng,
    exp: Option<Exp<f64>>,
    until_failure: f64,
}

impl FailureClock {
    fn new(lambda: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exp = if lambda > 0.0 {
            Some(Exp::new(lambda).map_err(|e| invalid(e.to_string()))?)
        } else {
            None
        };
        let until_failure = exp.as_ref().map_or(f64::INFINITY, |d| d.sample(&mut rng));
        Ok(Self {
            rng,
            exp,
            until_failure,
        })
    }

    /// Spends `duration`, consuming exposure only if `exposed`.
    fn spend(&mut self, duration: f64, exposed: bool) -> Outcome {
        if !exposed || self.until_failure >= duration {
            if exposed {
                self.until_failure -= duration;
            }
            return Outcome::Done;
        }
        let elapsed = self.until_failure;
        self.until_failure = self.exp.as_ref().map_or(f64::INFINITY, |d| d.sample(&mut self.rng));
        Outcome::Failed(elapsed)
    }
}

/// Mutable state of the workload being driven.
enum Runner<'a> {
    Solver {
        method: Method,
        system: &'a LinearSystem,
        config: SolveConfig,
        state: SolverState,
        target: StorageTarget,
    },
    Synthetic {
        iteration: usize,
        goal: usize,
        forced_n_prime: usize,
        image: Option<(usize, bool)>,
    },
}

impl Runner<'_> {
    fn iteration(&self) -> usize {
        match self {
            Runner::Solver { state, .. } => state.iteration(),
            Runner::Synthetic { iteration, .. } => *iteration,
        }
    }

    fn finished(&self) -> bool {
        match self {
            Runner::Solver { state, config, .. } => state.converged() || state.iteration() >= config.max_iterations,
            Runner::Synthetic { iteration, goal, .. } => iteration >= goal,
        }
    }

    fn step(&mut self) -> Result<()> {
        match self {
            Runner::Solver { state, system, .. } => state.step(system),
            Runner::Synthetic { iteration, .. } => {
                *iteration += 1;
                Ok(())
            }
        }
    }
}

struct Trial<'a> {
    sim: &'a Simulation,
    clock: FailureClock,
    runner: Runner<'a>,
    total: Acc,
    compute: Acc,
    checkpoint: Acc,
    recovery: Acc,
    rollback: Acc,
    /// Iterations completed since the last good image.
    uncommitted: usize,
    iterations_executed: usize,
    failures: usize,
    checkpoints: usize,
    checkpoints_voided: usize,
    recoveries: usize,
    lossy_recoveries: usize,
}

impl<'a> Trial<'a> {
    fn new(sim: &'a Simulation, seed: u64) -> Result<Self> {
        let runner = match &sim.config.workload {
            Workload::Solver { method, system, config } => Runner::Solver {
                method: *method,
                system,
                config: *config,
                state: SolverState::init(*method, system, *config)?,
                target: match sim.config.cost {
                    CostModel::Bandwidth {
                        write_bandwidth,
                        read_bandwidth,
                        ..
                    } => StorageTarget::memory().with_bandwidth(write_bandwidth, read_bandwidth)?,
                    CostModel::Fixed { .. } => StorageTarget::memory(),
                },
            },
            Workload::Synthetic {
                n_iterations,
                forced_n_prime,
            } => Runner::Synthetic {
                iteration: 0,
                goal: *n_iterations,
                forced_n_prime: *forced_n_prime,
                image: None,
            },
        };
        Ok(Self {
            sim,
            clock: FailureClock::new(sim.config.lambda, seed)?,
            runner,
            total: Acc::default(),
            compute: Acc::default(),
            checkpoint: Acc::default(),
            recovery: Acc::default(),
            rollback: Acc::default(),
            uncommitted: 0,
            iterations_executed: 0,
            failures: 0,
            checkpoints: 0,
            checkpoints_voided: 0,
            recoveries: 0,
            lossy_recoveries: 0,
        })
    }

    fn over_time(&self) -> bool {
        self.total.value() > self.sim.max_time
    }

    fn run(mut self, index: usize, seed: u64) -> Result<(TrialReport, Option<Vec<f64>>)> {
        let cfg = &self.sim.config;
        let t_it = cfg.t_it;
        let k = cfg.ckpt_intvl;
        let mut truncated = false;
        while !self.runner.finished() {
            if self.over_time() {
                truncated = true;
                break;
            }
            match self.clock.spend(t_it, true) {
                Outcome::Done => {
                    self.runner.step()?;
                    self.total.add(t_it);
                    self.uncommitted += 1;
                    self.iterations_executed += 1;
                }
                Outcome::Failed(dt) => {
                    self.total.add(dt);
                    self.rollback.add(dt);
                    self.fail_and_recover()?;
                    continue;
                }
            }
            let i = self.runner.iteration();
            if cfg.policy != CheckpointPolicy::None && i > 0 && i % k == 0 {
                self.checkpoint()?;
            }
        }
        // Work after the last image is on the final trajectory.
        self.compute.add(self.uncommitted as f64 * t_it);
        self.uncommitted = 0;

        let n = self.sim.baseline_iterations;
        let final_iteration = self.runner.iteration();
        let extra = final_iteration as i64 - n as i64;
        let (converged, diverged, relative_residual, solution) = match &self.runner {
            Runner::Solver { state, system, .. } => (
                state.converged(),
                !state.converged() && !truncated,
                Some(state.residual_norm() / system.b_norm()),
                Some(state.solution().into_owned()),
            ),
            Runner::Synthetic { iteration, goal, .. } => (iteration >= goal, false, None, None),
        };
        let total_time = self.total.value();
        let report = TrialReport {
            trial: index,
            seed,
            total_time,
            compute_time: self.compute.value(),
            checkpoint_time: self.checkpoint.value(),
            recovery_time: self.recovery.value(),
            rollback_time: self.rollback.value(),
            iterations_executed: self.iterations_executed,
            final_iteration,
            baseline_iterations: n,
            extra_iterations: extra,
            lossy_recoveries: self.lossy_recoveries,
            n_prime_per_recovery: (self.lossy_recoveries > 0).then(|| extra as f64 / self.lossy_recoveries as f64),
            failures: self.failures,
            checkpoints: self.checkpoints,
            checkpoints_voided: self.checkpoints_voided,
            recoveries: self.recoveries,
            overhead: total_time - n as f64 * cfg.t_it,
            converged,
            truncated,
            diverged,
            relative_residual,
        };
        Ok((report, solution))
    }

    /// Takes a checkpoint at the current iteration; a failure while writing
    /// voids it and triggers recovery from the previous image.
    fn checkpoint(&mut self) -> Result<()> {
        let cfg = &self.sim.config;
        let exposed = cfg.failures_during_ckpt;
        // Build the image first so its size can price the write.
        let (pending, cost) = match &mut self.runner {
            Runner::Solver { state, target, .. } => {
                let start = Instant::now();
                let payload = match &cfg.policy {
                    CheckpointPolicy::Lossy(c) => Payload::Lossy(compress(&state.solution(), c)?),
                    _ => Payload::Raw(state.solution().into_owned()),
                };
                let comp_seconds = start.elapsed().as_secs_f64();
                let image = CheckpointImage::new(state.iteration(), payload);
                let cost = match cfg.cost {
                    CostModel::Fixed { t_ckp, .. } => t_ckp,
                    CostModel::Bandwidth { timing, .. } => {
                        let t_comp = match timing {
                            CodecTiming::Measured if image.is_lossy() => comp_seconds,
                            CodecTiming::Measured => 0.0,
                            CodecTiming::Injected { t_comp, .. } => t_comp,
                        };
                        t_comp + target.write_time(image.to_bytes().len() as u64)
                    }
                };
                (Some(image), cost)
            }
            Runner::Synthetic { .. } => match cfg.cost {
                CostModel::Fixed { t_ckp, .. } => (None, t_ckp),
                CostModel::Bandwidth { .. } => unreachable!("rejected by validate"),
            },
        };
        match self.clock.spend(cost, exposed) {
            Outcome::Done => {
                self.total.add(cost);
                self.checkpoint.add(cost);
                match &mut self.runner {
                    Runner::Solver { target, .. } => {
                        let mut image = pending.expect("solver image");
                        target.commit(&mut image)?;
                    }
                    Runner::Synthetic { iteration, image, .. } => {
                        *image = Some((*iteration, cfg.policy.is_lossy()));
                    }
                }
                self.checkpoints += 1;
                self.compute.add(self.uncommitted as f64 * cfg.t_it);
                self.uncommitted = 0;
                Ok(())
            }
            Outcome::Failed(dt) => {
                self.total.add(dt);
                self.checkpoint.add(dt);
                self.checkpoints_voided += 1;
                self.fail_and_recover()
            }
        }
    }

    /// Handles a failure: discards uncommitted work, then recovers from the
    /// live image (or the initial guess), retrying if recovery itself fails.
    fn fail_and_recover(&mut self) -> Result<()> {
        let cfg = &self.sim.config;
        self.failures += 1;
        self.rollback.add(self.uncommitted as f64 * cfg.t_it);
        self.uncommitted = 0;

        let exposed = cfg.failures_during_ckpt;
        let cost = match (&self.runner, cfg.cost) {
            (_, CostModel::Fixed { t_rc, .. }) => t_rc,
            (Runner::Solver { target, .. }, CostModel::Bandwidth { timing, .. }) => {
                let bytes = if target.has_image() { target.load()?.1 } else { 0 };
                let t_decomp = match timing {
                    CodecTiming::Injected { t_decomp, .. } if cfg.policy.is_lossy() => t_decomp,
                    _ => 0.0,
                };
                target.read_time(bytes) + t_decomp
            }
            (Runner::Synthetic { .. }, CostModel::Bandwidth { .. }) => unreachable!("rejected by validate"),
        };
        loop {
            if self.over_time() {
                break;
            }
            match self.clock.spend(cost, exposed) {
                Outcome::Done => {
                    self.total.add(cost);
                    self.recovery.add(cost);
                    break;
                }
                Outcome::Failed(dt) => {
                    self.total.add(dt);
                    self.recovery.add(dt);
                    self.failures += 1;
                }
            }
        }
        self.recoveries += 1;

        let measured = matches!(
            cfg.cost,
            CostModel::Bandwidth {
                timing: CodecTiming::Measured,
                ..
            }
        );
        match &mut self.runner {
            Runner::Solver {
                method,
                system,
                config,
                state,
                target,
            } => {
                if target.has_image() {
                    let (image, _) = target.load()?;
                    let lossy = image.is_lossy();
                    let (restored, decomp_seconds) = restore(&image, *method, system, *config)?;
                    *state = restored;
                    if lossy {
                        self.lossy_recoveries += 1;
                        if measured {
                            self.total.add(decomp_seconds);
                            self.recovery.add(decomp_seconds);
                        }
                    }
                } else {
                    *state = SolverState::init(*method, system, *config)?;
                }
            }
            Runner::Synthetic {
                iteration,
                goal,
                forced_n_prime,
                image,
            } => match *image {
                Some((at, lossy)) => {
                    *iteration = at;
                    if lossy {
                        *goal += *forced_n_prime;
                        self.lossy_recoveries += 1;
                    }
                }
                None => *iteration = 0,
            },
        }
        Ok(())
    }
}

/// One injected-failure experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NPrimeSample {
    /// Iteration at which the failure strikes.
    pub injection: usize,
    /// Iteration of the image recovered from.
    pub checkpoint_iteration: usize,
    /// Iteration index at convergence (or at the cap).
    pub final_iteration: usize,
    /// `final_iteration − N`, absent when the run diverged.
    pub n_prime: Option<i64>,
    pub diverged: bool,
    pub relative_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NPrimeReport {
    pub baseline_iterations: usize,
    pub samples: Vec<NPrimeSample>,
}

impl NPrimeReport {
    /// Mean N′ over converged samples.
    pub fn mean(&self) -> Option<f64> {
        let v: Vec<f64> = self.samples.iter().filter_map(|s| s.n_prime.map(|n| n as f64)).collect();
        Estimate::from_samples(&v).map(|e| e.mean)
    }
}

/// Measures the extra iterations caused by one recovery.
///
/// For each injection point `j`, the run fails at `j`, recovers from the image
/// taken at `⌊j/k⌋·k` (compressed with `compressor`, or raw when `None`) and
/// runs to convergence. Rolled-back iterations are re-executed and therefore
/// not counted, so `N′ = final_iteration − N` isolates the perturbation.
pub fn measure_n_prime(
    method: Method,
    system: &LinearSystem,
    config: SolveConfig,
    compressor: Option<&CompressorConfig>,
    injections: &[usize],
) -> Result<NPrimeReport> {
    config.validate()?;
    if let Some(c) = compressor {
        c.validate()?;
    }
    let k = config.ckpt_intvl;
    let mut snap_points: Vec<usize> = injections.iter().map(|j| j / k * k).collect();
    snap_points.sort_unstable();
    snap_points.dedup();

    let mut baseline = SolverState::init(method, system, config)?;
    let mut snapshots = Vec::with_capacity(snap_points.len());
    let mut next = 0;
    loop {
        while next < snap_points.len() && snap_points[next] == baseline.iteration() {
            snapshots.push((baseline.iteration(), baseline.solution().into_owned()));
            next += 1;
        }
        if baseline.converged() || baseline.iteration() >= config.max_iterations {
            break;
        }
        baseline.step(system)?;
    }
    if !baseline.converged() {
        return Err(invalid("failure-free baseline did not converge"));
    }
    let n = baseline.iteration();
    if let Some(&j) = injections.iter().find(|&&j| j >= n) {
        return Err(invalid(format!("injection point {j} is not before convergence at {n}")));
    }

    let samples = injections
        .iter()
        .map(|&j| {
            let at = j / k * k;
            let x = snapshots
                .iter()
                .find(|(i, _)| *i == at)
                .map(|(_, x)| x.clone())
                .ok_or(Error::InvalidState("missing snapshot"))?;
            let payload = match compressor {
                Some(c) => Payload::Lossy(compress(&x, c)?),
                None => Payload::Raw(x),
            };
            let image = CheckpointImage::new(at, payload);
            let (mut state, _) = restore(&image, method, system, config)?;
            while !state.converged() && state.iteration() < config.max_iterations {
                state.step(system)?;
            }
            let diverged = !state.converged();
            Ok(NPrimeSample {
                injection: j,
                checkpoint_iteration: at,
                final_iteration: state.iteration(),
                n_prime: (!diverged).then(|| state.iteration() as i64 - n as i64),
                diverged,
                relative_residual: state.residual_norm() / system.b_norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NPrimeReport {
        baseline_iterations: n,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;

    fn synthetic(policy: CheckpointPolicy, n: usize, forced: usize, t_ckp: f64, lambda: f64, k: usize) -> SimConfig {
        SimConfig {
            workload: Workload::Synthetic {
                n_iterations: n,
                forced_n_prime: forced,
            },
            policy,
            cost: CostModel::Fixed { t_ckp, t_rc: t_ckp },
            ckpt_intvl: k,
            t_it: 1.2,
            lambda,
            failures_during_ckpt: true,
            trials: 1,
            max_time: None,
            seed: 7,
        }
    }

    fn solver_config(method: Method, m: usize, k: usize, policy: CheckpointPolicy, lambda: f64) -> SimConfig {
        SimConfig {
            workload: Workload::Solver {
                method,
                system: Arc::new(LinearSystem::poisson2d(m).unwrap()),
                config: SolveConfig::new(1e-8, 10_000, k),
            },
            policy,
            cost: CostModel::Fixed { t_ckp: 5.0, t_rc: 5.0 },
            ckpt_intvl: k,
            t_it: 1.0,
            lambda,
            failures_during_ckpt: true,
            trials: 1,
            max_time: None,
            seed: 11,
        }
    }

    #[test]
    fn zero_lambda_lossy_exact_time() {
        let r = run_trial(synthetic(CheckpointPolicy::Lossy(CompressorConfig::relative(1e-4)), 5875, 0, 25.0, 0.0, 775), 0).unwrap();
        assert_eq!(r.total_time, 5875.0 * 1.2 + 7.0 * 25.0);
        assert_eq!(r.checkpoints, 5875 / 775);
        assert_eq!(r.failures, 0);
        assert!(r.converged);
    }

    #[test]
    fn zero_lambda_no_policy() {
        let r = run_trial(synthetic(CheckpointPolicy::None, 100, 0, 25.0, 0.0, 10), 0).unwrap();
        assert!((r.total_time - 120.0).abs() < 1e-9);
        assert_eq!(r.checkpoints, 0);
        assert!(r.overhead.abs() < 1e-9);
    }

    #[test]
    fn checkpoint_at_final_iteration_counts() {
        let r = run_trial(synthetic(CheckpointPolicy::Traditional, 100, 0, 3.0, 0.0, 10), 0).unwrap();
        assert_eq!(r.checkpoints, 10);
        let r = run_trial(synthetic(CheckpointPolicy::Traditional, 99, 0, 3.0, 0.0, 10), 0).unwrap();
        assert_eq!(r.checkpoints, 9);
    }

    #[test]
    fn bookkeeping_identity_and_determinism() {
        let mut cfg = synthetic(CheckpointPolicy::Lossy(CompressorConfig::relative(1e-4)), 5875, 100, 120.0, 1.0 / 600.0, 200);
        cfg.trials = 20;
        let a = run_ensemble(cfg.clone()).unwrap();
        let b = run_ensemble(cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.failures.mean > 1.0);
        for t in &a.trials {
            assert!((t.total_time - t.bucket_sum()).abs() < 1e-9, "{t:?}");
            assert!(t.converged);
            assert_eq!(t.final_iteration, 5875 + 100 * t.lossy_recoveries);
            if t.lossy_recoveries > 0 {
                assert_eq!(t.n_prime_per_recovery, Some(100.0));
            }
        }
    }

    #[test]
    fn zero_variance_without_failures() {
        let mut cfg = synthetic(CheckpointPolicy::Traditional, 500, 0, 10.0, 0.0, 50);
        cfg.trials = 8;
        let r = run_ensemble(cfg).unwrap();
        assert_eq!(r.total_time.sd, 0.0);
        assert_eq!(r.total_time.ci95, 0.0);
    }

    #[test]
    fn no_image_restarts_from_zero() {
        // First failure lands before any checkpoint.
        let mut cfg = synthetic(CheckpointPolicy::None, 50, 0, 2.0, 1.0 / 40.0, 10);
        cfg.seed = 3;
        cfg.failures_during_ckpt = false;
        let r = run_trial(cfg, 0).unwrap();
        assert!(r.failures > 0);
        assert!(r.converged);
        assert_eq!(r.final_iteration, 50);
        assert!((r.compute_time - 60.0).abs() < 1e-9);
        assert!((r.recovery_time - 2.0 * r.recoveries as f64).abs() < 1e-9);
    }

    #[test]
    fn rollback_mean_is_half_interval() {
        let k = 100;
        let mut cfg = synthetic(CheckpointPolicy::Traditional, 20_000, 0, 1.0, 1.0 / 2000.0, k);
        cfg.failures_during_ckpt = false;
        cfg.cost = CostModel::Fixed { t_ckp: 1.0, t_rc: 1.0 };
        cfg.trials = 200;
        let r = run_ensemble(cfg).unwrap();
        let per_failure = r.mean_rollback_per_failure.unwrap();
        let expected = k as f64 * 1.2 / 2.0;
        assert!(((per_failure - expected) / expected).abs() < 0.1, "{per_failure} vs {expected}");
    }

    #[test]
    fn model_agreement_worked_parameters() {
        let lambda = 1.0 / 3600.0;
        let k = model::young_iterations(3600.0, 120.0, 1.2).unwrap();
        let mut cfg = synthetic(CheckpointPolicy::Traditional, 5875, 0, 120.0, lambda, k);
        cfg.trials = 500;
        let r = run_ensemble(cfg).unwrap();
        let expected = model::expected_total_time(lambda, 5875.0, 1.2, 120.0, 120.0).unwrap();
        let rel = (r.total_time.mean - expected) / expected;
        assert!(rel.abs() < 0.15, "sim {} model {expected}", r.total_time.mean);
    }

    #[test]
    fn failures_only_during_compute() {
        let mut cfg = synthetic(CheckpointPolicy::Traditional, 2000, 0, 500.0, 1.0 / 300.0, 10);
        cfg.failures_during_ckpt = false;
        cfg.trials = 5;
        let r = run_ensemble(cfg).unwrap();
        assert!(r.trials.iter().all(|t| t.checkpoints_voided == 0));
    }

    #[test]
    fn truncation_flag() {
        let mut cfg = synthetic(CheckpointPolicy::Traditional, 1000, 0, 50.0, 1.0 / 10.0, 100);
        cfg.max_time = Some(500.0);
        let r = run_trial(cfg, 0).unwrap();
        assert!(r.truncated);
        assert!(!r.converged);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = synthetic(CheckpointPolicy::None, 10, 0, 1.0, 0.0, 1);
        cfg.trials = 0;
        assert!(Simulation::new(cfg.clone()).is_err());
        cfg.trials = 1;
        cfg.t_it = 0.0;
        assert!(Simulation::new(cfg.clone()).is_err());
        cfg.t_it = 1.0;
        cfg.lambda = -1.0;
        assert!(Simulation::new(cfg.clone()).is_err());
        cfg.lambda = 0.0;
        cfg.cost = CostModel::Bandwidth {
            write_bandwidth: 1.0,
            read_bandwidth: 1.0,
            timing: CodecTiming::Injected { t_comp: 0.0, t_decomp: 0.0 },
        };
        assert!(Simulation::new(cfg).is_err());
    }

    #[test]
    fn checkpointing_does_not_perturb_solver() {
        for method in [Method::Cg, Method::Gmres, Method::Jacobi] {
            let cfg = solver_config(method, 8, 5, CheckpointPolicy::Lossy(CompressorConfig::relative(1e-2)), 0.0);
            let sys = match &cfg.workload {
                Workload::Solver { system, .. } => system.clone(),
                _ => unreachable!(),
            };
            let (r, x) = Simulation::new(cfg).unwrap().run_trial_with_solution(0).unwrap();
            let mut plain = SolverState::init(method, &sys, SolveConfig::new(1e-8, 10_000, 5)).unwrap();
            plain.solve(&sys).unwrap();
            let a: Vec<u64> = x.unwrap().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = plain.solution().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "{method}");
            assert_eq!(r.extra_iterations, 0);
        }
    }

    #[test]
    fn traditional_recovery_has_no_extra_iterations() {
        for method in [Method::Cg, Method::Gmres] {
            let mut cfg = solver_config(method, 16, 4, CheckpointPolicy::Traditional, 1.0 / 15.0);
            cfg.trials = 6;
            let r = run_ensemble(cfg).unwrap();
            assert!(r.trials.iter().any(|t| t.failures > 0));
            for t in &r.trials {
                assert!(t.converged);
                assert_eq!(t.extra_iterations, 0, "{method}");
                assert!((t.total_time - t.bucket_sum()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn lossy_solver_trial_converges() {
        let mut cfg = solver_config(Method::Cg, 16, 4, CheckpointPolicy::Lossy(CompressorConfig::relative(1e-4)), 1.0 / 200.0);
        cfg.trials = 8;
        let r = run_ensemble(cfg).unwrap();
        assert!(r.trials.iter().any(|t| t.lossy_recoveries > 0));
        assert!(r.trials.iter().all(|t| t.converged && t.relative_residual.unwrap() <= 1e-8));
        assert!(r.n_prime.is_some());
    }

    #[test]
    fn bandwidth_costs_from_image_size() {
        let mut cfg = solver_config(Method::Cg, 8, 5, CheckpointPolicy::Traditional, 0.0);
        cfg.cost = CostModel::Bandwidth {
            write_bandwidth: 64.0,
            read_bandwidth: 64.0,
            timing: CodecTiming::Injected { t_comp: 0.5, t_decomp: 0.5 },
        };
        let r = run_trial(cfg, 0).unwrap();
        let per = 0.5 + (64 * 8 + crate::checkpoint::IMAGE_HEADER_LEN) as f64 / 64.0;
        assert!(r.checkpoints > 0);
        assert!((r.checkpoint_time - per * r.checkpoints as f64).abs() < 1e-9);
    }

    #[test]
    fn n_prime_lossless_is_zero() {
        let sys = LinearSystem::poisson2d(16).unwrap();
        for method in [Method::Cg, Method::Gmres] {
            let cfg = SolveConfig::new(1e-8, 10_000, 5);
            let rep = measure_n_prime(method, &sys, cfg, None, &[3, 7, 12, 20]).unwrap();
            assert!(rep.samples.iter().all(|s| s.n_prime == Some(0)), "{method} {rep:?}");
        }
    }

    #[test]
    fn n_prime_small_for_tight_bound() {
        let sys = LinearSystem::poisson2d(16).unwrap();
        let cfg = SolveConfig::new(1e-8, 10_000, 5);
        let c = CompressorConfig::relative(1e-6);
        let rep = measure_n_prime(Method::Cg, &sys, cfg, Some(&c), &[15]).unwrap();
        let n = rep.baseline_iterations as f64;
        let np = rep.samples[0].n_prime.unwrap() as f64;
        assert!(np <= 0.05 * n.max(20.0), "N' = {np}, N = {n}");
        assert!(rep.samples[0].relative_residual <= 1e-8);
    }

    #[test]
    fn n_prime_rejects_late_injection() {
        let sys = LinearSystem::poisson2d(8).unwrap();
        let cfg = SolveConfig::new(1e-8, 10_000, 5);
        assert!(measure_n_prime(Method::Cg, &sys, cfg, None, &[10_000]).is_err());
    }

    #[test]
    fn estimate_separation() {
        let a = Estimate::from_samples(&[1.0, 1.1, 0.9, 1.0]).unwrap();
        let b = Estimate::from_samples(&[5.0, 5.1, 4.9, 5.0]).unwrap();
        assert!(a.separated_from(&b));
        assert!(!a.separated_from(&a));
        assert!(Estimate::from_samples(&[]).is_none());
    }
}
