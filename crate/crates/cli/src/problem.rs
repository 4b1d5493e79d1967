use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lossyckpt::sparse::io::{read_matrix_market_file, read_vector_file};
use lossyckpt::{DenseVector, LinearSystem, Method, SolveConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    /// 5-point Laplacian on an m×m grid, b = ones.
    Poisson2d,
    /// Matrix Market file; b from `--rhs` or ones.
    MatrixMarket,
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    #[arg(long, value_enum, default_value = "poisson2d")]
    pub problem: ProblemKind,
    /// Grid side for poisson2d.
    #[arg(long, default_value_t = 32)]
    pub size: usize,
    /// Matrix Market file for matrix-market.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Right-hand side vector file.
    #[arg(long)]
    pub rhs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value = "cg")]
    pub method: Method,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Checkpoint interval k in iterations.
    #[arg(long, default_value_t = 10)]
    pub interval: usize,
    /// Restart length; defaults to the checkpoint interval.
    #[arg(long)]
    pub restart: Option<usize>,
}

impl SolverArgs {
    pub fn config(&self) -> CliResult<SolveConfig> {
        let mut c = SolveConfig::new(self.tol, self.max_iter, self.interval);
        if let Some(r) = self.restart {
            c = c.with_restart_len(r);
        }
        c.validate()?;
        Ok(c)
    }
}

impl ProblemArgs {
    pub fn build(&self) -> CliResult<LinearSystem> {
        build_system(self.problem, self.size, self.matrix.as_deref(), self.rhs.as_deref())
    }
}

pub fn build_system(kind: ProblemKind, size: usize, matrix: Option<&Path>, rhs: Option<&Path>) -> CliResult<LinearSystem> {
    match kind {
        ProblemKind::Poisson2d => {
            if rhs.is_some() {
                return Err(CliError::usage("--rhs is only used with matrix-market problems"));
            }
            Ok(LinearSystem::poisson2d(size)?)
        }
        ProblemKind::MatrixMarket => {
            let path = matrix.ok_or_else(|| CliError::usage("matrix-market problems need a matrix path"))?;
            let a = read_matrix_market_file(path).map_err(|e| CliError::input(path, e))?;
            let b = match rhs {
                Some(p) => read_vector_file(p).map_err(|e| CliError::input(p, e))?,
                None => DenseVector::ones(a.n_rows()),
            };
            Ok(LinearSystem::with_jacobi(a, b)?)
        }
    }
}
