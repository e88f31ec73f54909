//! Learning unbalanced stochastic dynamics from weighted population snapshots.
//!
//! The pipeline goes: load or generate snapshot data ([`data`]), build the
//! static semi-coupling between consecutive snapshots ([`coupling`]), draw
//! conditional-path training targets ([`bridge`]), regress drift, growth-rate
//! and score networks against them ([`training`]), then simulate the learned
//! dynamics forward, either as a weighted-mass SDE flow or as a discrete
//! branching birth-death process ([`inference`]). [`eval`] holds the metrics
//! (exact 1-Wasserstein, relative mass error) and the hold-one-out harness.
//!
//! All numerics are `f64` and deterministic given a seed.

pub mod bridge;
pub mod coupling;
pub mod data;
pub mod error;
pub mod eval;
pub mod inference;
pub mod matrix;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Library version, recorded in model files and run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
