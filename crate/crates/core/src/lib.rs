//! Log-based anomaly detection for cyber-physical systems.
//!
//! Log entries are turned into fixed-layout vectors, normalized per chunk,
//! concatenated over a sliding window and ranked by Local Outlier Factor.
//! [`synthgen`] produces labelled synthetic logs for closed-loop checks.

pub mod error;
pub mod featurize;
pub mod lof;
pub mod log_model;
pub mod pipeline;
pub mod synthgen;

pub use error::{Error, Result};
