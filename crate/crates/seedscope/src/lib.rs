//! seedscope: a benchmark-reliability harness for probabilistic regression.
//!
//! Trains heteroscedastic uncertainty methods across training-set sizes
//! with repeated realizations, then quantifies when a single-seed endpoint
//! metric is an unreliable estimate of expected performance: variance
//! trajectories, power-law fits, monotonicity labels, and single-seed
//! error diagnostics.

pub mod data;
pub mod error;
pub mod methods;
pub mod nn;
pub mod oracle;
pub mod reliability;
pub mod scoring;
pub mod trajectory;
pub mod seed;

pub use error::{Error, Result};
