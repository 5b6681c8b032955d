//! Hierarchical contamination auditing for synthetic training data.
//!
//! A synthetic corpus is checked against a benchmark in a cascade of
//! increasingly expensive tests: memorization at the token level
//! ([`token`]), semantic proximity in embedding space ([`semantic`]), and
//! borrowed reasoning structure ([`reasoning`]). A benchmark-wide
//! performance-cliff test ([`cliff`]) runs separately on model correctness
//! under perturbation. [`pipeline::run_pipeline`] wires the per-sample levels
//! together; [`harness`] builds labelled scenarios for evaluating the whole
//! thing.

pub mod cli;
pub mod cliff;
pub mod config;
pub mod error;
pub mod harness;
pub mod model;
pub mod pipeline;
pub mod reasoning;
pub mod report;
pub mod semantic;
pub mod stats;
pub mod token;

pub use config::{DistanceMetric, ThresholdConfig};
pub use error::{Error, Result};
pub use model::{Dataset, Role, TextSample, Verdict};
pub use pipeline::{run_pipeline, AuditRun, Summary};
