//! Sparse-array interpolation by low-rank Hankel matrix completion.
//!
//! A sparse linear array (SLA) observes a subset of the elements of a uniform
//! linear array (ULA). The full-array snapshot of `P` far-field sources lifts to
//! a rank-`P` Hankel matrix, so the missing elements can be filled in by
//! low-rank completion and the result fed to a beamformer for single-snapshot
//! direction-of-arrival estimation.
//!
//! The crate provides
//!
//! - [`array`]: signal model, SLA masking, seeded datasets,
//! - [`hankel`]: the Hankel lift, its anti-diagonal-averaging inverse and the
//!   observed-entry index machinery,
//! - [`lowrank`]: Jacobi SVD, rank-`r` truncation and tangent-space projection,
//! - [`solvers`]: iterative hard thresholding (IHT) and its tangent-space
//!   accelerated variant (FIHT),
//! - [`net`]: the unrolled, trainable IHT network,
//! - [`train`]: hand-written reverse-mode gradients, Adam and the training loop,
//! - [`doa`]: beamforming spectra, peak picking and matched DOA errors,
//! - [`experiments`]: the config-driven experiment pipeline behind the CLI.

pub mod array;
pub mod checkpoint;
pub mod dataset;
pub mod doa;
mod error;
pub mod experiments;
pub mod hankel;
pub mod lowrank;
pub mod net;
pub mod solvers;
pub mod train;

pub use array::{ArrayConfig, Snapshot, SnapshotKind, SourceSet};
pub use error::{Error, Result};
pub use hankel::HankelIndexMap;
pub use lowrank::RankFactorization;
pub use net::{NetParams, PhaseParams};
pub use num_complex::Complex64;
pub use solvers::{ResidualMode, SolverConfig, SolverTrace};
pub use train::{AdamState, TrainConfig};
