//! Genetic search over retain/reinitialize masks of a network's parameter
//! blocks, with fitness measured by SGD retraining and diversity kept by
//! clustering-based niche suppression.

pub mod data;
pub mod error;
pub mod evolution;
pub mod exec;
pub mod genome;
pub mod harness;
pub mod nn;
pub mod seed;
pub mod stats;
pub mod suppression;

pub use error::{Error, Result};
