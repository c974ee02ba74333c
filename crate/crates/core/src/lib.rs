//! Training and evaluation toolkit for container-level power models.
//!
//! Measured node power mixes idle leakage, platform background processes,
//! and the workloads under study. This crate ingests per-second telemetry,
//! predicts the background share with system-level model candidates, scores
//! each candidate by how well the remaining power tracks target-container
//! usage, and trains container power models on the isolated labels. Trained
//! models need no power meter and no platform details at prediction time.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod extractor;
pub mod isolator;
pub mod pipeline;
pub mod regressors;
pub mod synthgen;
pub mod telemetry;

pub use error::{Error, Result};
