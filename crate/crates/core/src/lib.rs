//! Separate-and-attend learning to rank.
//!
//! Sparse (n-gram) and dense (numeric) document features are scored by two
//! independent towers whose score vectors are combined by a learned
//! prediction-level attention. Training adds a KL co-training term that
//! pulls each tower toward the combined prediction.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
