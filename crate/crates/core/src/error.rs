use std::io;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),

    #[error("singular preconditioner: diagonal entry of row {row} is missing or zero")]
    SingularPreconditioner { row: usize },

    #[error("{method} breakdown at iteration {iteration}: {reason}")]
    Breakdown {
        method: &'static str,
        iteration: usize,
        reason: &'static str,
    },

    #[error("solver state does not allow stepping: {0}")]
    InvalidState(&'static str),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("PSNR is undefined for a zero value range")]
    UndefinedPsnr,

    #[error("model saturated: denominator {denominator} is not positive")]
    Saturated { denominator: f64 },

    #[error("checkpoint failed: {0}")]
    CheckpointFailed(String),

    #[error("unrecoverable checkpoint image: {0}")]
    UnrecoverableImage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
