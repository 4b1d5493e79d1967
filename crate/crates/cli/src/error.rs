use std::path::Path;

use thiserror::Error;

/// Errors surfaced by a subcommand, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config, unreadable input. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Runtime failure or divergence. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    /// Wraps an error reading `path` as a usage error.
    pub fn input(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Usage(format!("cannot read {}: {err}", path.display()))
    }
}

impl From<lossyckpt::Error> for CliError {
    fn from(e: lossyckpt::Error) -> Self {
        use lossyckpt::Error::*;
        match e {
            InvalidParameter(_) | DimensionMismatch { .. } | MalformedMatrix(_) | Parse(_) | Saturated { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
