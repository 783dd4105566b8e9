//! Jackknife varying-coefficient quantile model averaging.
//!
//! Conditional quantile prediction that treats every continuous covariate as
//! a potential index of a varying-coefficient quantile model, fits one
//! local-linear candidate per index, and combines candidate predictions with
//! simplex weights chosen by leave-one-out cross-validation. Includes
//! equal-weight and smoothed-BIC baselines, a global linear quantile
//! regression baseline, simulation designs with analytic generators, a
//! replication/evaluation harness, bootstrap weight intervals, and CSV
//! ingestion with train-statistics standardization.

// indexed loops over small dense matrices read better than iterator chains
// in the numerical kernels here
#![allow(clippy::needless_range_loop)]

pub mod average;
pub mod bandwidth;
pub mod cli;
pub mod data;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod math;
pub mod qr;
pub mod rng;
pub mod sim;
pub mod vcm;

pub use error::{Error, Result};
pub use math::{KernelKind, QuantileLevel};
