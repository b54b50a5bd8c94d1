//! Multiscale Gaussian-process level-set estimation.
//!
//! Given noisy evaluations of an unknown function drawn from a known GP
//! prior, the algorithm classifies a hyper-rectangle search space into
//! super-level and sub-level regions of a threshold `tau`. It explores a
//! binary tree of partitions, keeping running confidence bounds per cell and
//! either evaluating a cell's center or refining the cell depending on
//! whether noise uncertainty or within-cell variation dominates.
//!
//! The crate ships the estimator itself (exact incremental GP posterior,
//! partition tree, parameter schedules, the standard and the low-complexity
//! selection rules), a lazily extended GP sample path that serves as the
//! ground truth for experiments, evaluation metrics (level-set discrepancy,
//! information-gain accounting, packing diagnostics) and a config-driven,
//! fully deterministic experiment harness with a CLI.

pub mod error;
pub mod eval;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod lse;
pub mod lse_fast;
pub mod partition;
pub mod rng;

pub use error::{Error, Result};
pub use kernel::{KernelSpec, MaternNu, SmoothnessProfile};
