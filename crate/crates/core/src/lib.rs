//! Lossy checkpointing for restarted iterative solvers.
//!
//! The crate bundles the pieces needed to study lossy checkpoint/restart on a
//! single machine:
//!
//! * [`sparse`]: CSR matrices, Poisson test problems, Jacobi preconditioner.
//! * [`solvers`]: Jacobi, restarted PCG and GMRES(k) as resumable step machines.
//! * [`compress`]: an error-bounded Lorenzo/quantizer/Huffman compressor with
//!   PSNR estimation and a fixed-PSNR mode.
//! * [`checkpoint`]: traditional and lossy checkpoint images over a storage target.
//! * [`sim`]: a discrete-event failure-injection simulator.
//! * [`model`]: closed-form checkpoint overhead models.

pub mod checkpoint;
pub mod compress;
pub mod error;
pub mod model;
pub mod sim;
pub mod solvers;
pub mod sparse;

pub use error::{Error, Result};
pub use solvers::{LinearSystem, Method, SolveConfig, SolveSummary, SolverState};
pub use sparse::{CsrMatrix, DenseVector, DiagonalPreconditioner};
