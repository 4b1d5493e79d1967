//! TOML experiment files for `simulate`.
//!
//! ```toml
//! seed = 42
//! trials = 500
//!
//! [problem]
//! kind = "synthetic"        # or "poisson2d", "matrix-market"
//! n_iterations = 5875
//! forced_n_prime = 250
//!
//! [checkpoint]
//! policy = "lossy"          # "none", "traditional", "lossy"
//! interval = "young"        # or an iteration count
//! compare_traditional = true
//!
//! [compressor]
//! mode = "rel"
//! value = 1e-4
//!
//! [timing]
//! t_it = 1.2
//! t_ckp = 25
//! t_ckp_traditional = 120
//!
//! [failures]
//! lambda = 2.7778e-4
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use lossyckpt::compress::CompressorConfig;
use lossyckpt::Method;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::problem::ProblemKind;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub max_time: Option<f64>,
    pub problem: ProblemSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub checkpoint: CheckpointSection,
    pub compressor: Option<CompressorSection>,
    pub timing: TimingSection,
    pub failures: FailureSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_trials() -> usize {
    100
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: WorkloadKind,
    pub n_iterations: Option<usize>,
    #[serde(default)]
    pub forced_n_prime: usize,
    pub size: Option<usize>,
    pub path: Option<PathBuf>,
    pub rhs: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    Synthetic,
    Poisson2d,
    MatrixMarket,
}

impl WorkloadKind {
    pub fn problem(self) -> Option<ProblemKind> {
        match self {
            WorkloadKind::Synthetic => None,
            WorkloadKind::Poisson2d => Some(ProblemKind::Poisson2d),
            WorkloadKind::MatrixMarket => Some(ProblemKind::MatrixMarket),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Defaults to the checkpoint interval.
    pub restart: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: default_method(),
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            restart: None,
        }
    }
}

fn default_method() -> Method {
    Method::Cg
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_iterations() -> usize {
    100_000
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    None,
    Traditional,
    Lossy,
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(PolicyKind::None),
            "traditional" => Ok(PolicyKind::Traditional),
            "lossy" => Ok(PolicyKind::Lossy),
            other => Err(format!("unknown policy `{other}` (none, traditional, lossy)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum Interval {
    Count(usize),
    Named(String),
}

impl Interval {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s.parse::<usize>() {
            Ok(k) => Ok(Interval::Count(k)),
            Err(_) => Ok(Interval::Named(s.to_string())),
        }
    }

    pub fn is_young(&self) -> CliResult<bool> {
        match self {
            Interval::Count(0) => Err(CliError::usage("checkpoint interval must be at least 1")),
            Interval::Count(_) => Ok(false),
            Interval::Named(s) if s == "young" => Ok(true),
            Interval::Named(s) => Err(CliError::usage(format!(
                "checkpoint interval `{s}` must be a count or \"young\""
            ))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointSection {
    pub policy: PolicyKind,
    pub interval: Interval,
    /// Also run the traditional policy and compare.
    #[serde(default)]
    pub compare_traditional: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorSection {
    pub mode: CompressorMode,
    pub value: f64,
    pub bins_half: Option<u32>,
    #[serde(default)]
    pub closed_form_only: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressorMode {
    Abs,
    Rel,
    FixedPsnr,
}

impl CompressorSection {
    pub fn config(&self) -> CliResult<CompressorConfig> {
        let mut c = match self.mode {
            CompressorMode::Abs => CompressorConfig::absolute(self.value),
            CompressorMode::Rel => CompressorConfig::relative(self.value),
            CompressorMode::FixedPsnr => CompressorConfig::fixed_psnr(self.value),
        };
        if let Some(n) = self.bins_half {
            c = c.with_bins_half(n);
        }
        if self.closed_form_only {
            c = c.closed_form_only();
        }
        c.validate()?;
        Ok(c)
    }
}

/// Injected costs in simulated time units.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingSection {
    pub t_it: f64,
    /// Checkpoint cost of the selected policy.
    pub t_ckp: Option<f64>,
    /// Defaults to `t_ckp`.
    pub t_rc: Option<f64>,
    /// Traditional checkpoint cost, for the break-even verdict and comparisons.
    pub t_ckp_traditional: Option<f64>,
    pub t_rc_traditional: Option<f64>,
    /// Bytes per time unit; used instead of fixed costs when `t_ckp` is absent.
    pub write_bandwidth: Option<f64>,
    pub read_bandwidth: Option<f64>,
    pub t_comp: Option<f64>,
    pub t_decomp: Option<f64>,
    /// Charge measured wall-clock codec time (not reproducible).
    #[serde(default)]
    pub measured_codec: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSection {
    pub lambda: f64,
    #[serde(default = "default_true")]
    pub during_checkpoint: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub trials_csv: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Loads `path`, resolving relative paths inside it against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.problem.path);
        resolve(&mut cfg.problem.rhs);
        resolve(&mut cfg.output.trials_csv);
        resolve(&mut cfg.output.summary_json);
        Ok(cfg)
    }
}
