//! Post-processing for multi-expert precipitation forecasts.
//!
//! A trainable gating network assigns per-hour weights to a pool of fixed
//! NWP expert forecasts and combines them into a single rainfall estimate.
//! Training minimizes a hybrid objective: a point-wise MSE term calibrates
//! intensity, and a subsequence-distance term (the minimum Euclidean
//! distance between each expert's recent trajectory and nearby ground-truth
//! windows) rewards experts whose storm shape is right even when their
//! timing is off by a few hours. Because the expert series and observations
//! are fixed, the structural distances are precomputed once and act as
//! static penalty coefficients during optimization.
//!
//! Module map:
//! - [`dataset`]: aligned panels of experts/features/observations, synthetic
//!   basin generation, chronological splits, normalization, windowing.
//! - [`matrix_profile`]: windowed minimum-distance computation and the
//!   static penalty matrix.
//! - [`gating`]: the four-layer MLP gate, analytic gradients, Adam.
//! - [`loss`]: the hybrid objective and its constituent terms.
//! - [`metrics`]: verification suite (MAE, accumulations, DTW, CSI).
//! - [`trainer`]: training orchestration, multi-seed runs, sweeps,
//!   ablations, and reference baselines.
//!
//! The crate is `no_std`-compatible (`default-features = false,
//! features = ["libm"]`); all file formats and the CLI live in the
//! companion `mpmoe-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

#[cfg(not(any(feature = "std", feature = "libm")))]
compile_error!("mpmoe-core requires either the `std` or the `libm` feature");

pub(crate) mod fmath;

pub mod dataset;
pub mod gating;
pub mod loss;
pub mod matrix;
pub mod matrix_profile;
pub mod metrics;
pub mod trainer;

pub use matrix::Matrix;
