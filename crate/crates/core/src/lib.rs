//! Bureau-free credit scoring benchmark.
//!
//! The crate is organised as a pipeline:
//!
//! - [`synthgen`] draws synthetic resident profiles from a marginal
//!   configuration, filters economically implausible ones and labels them.
//! - [`dataio`] owns the dataset schema, CSV format, stratified folds and the
//!   Demo/Full feature views.
//! - [`encode`] turns feature views into numeric matrices.
//! - [`models`] holds the learners (one histogram GBDT engine with three
//!   presets, elastic-net logistic regression, random forest, pruned CART).
//! - [`tune`] runs TPE and grid searches nested inside outer folds.
//! - [`eval`] computes metrics, the paired DeLong test, the ablation harness,
//!   policy lift and bootstrap intervals.
//! - [`explain`] generates diverse counterfactuals and flip-frequency profiles.

pub mod dataio;
pub mod encode;
pub mod error;
pub mod eval;
pub mod explain;
pub mod models;
pub mod rng;
pub mod synthgen;
pub mod tune;

pub use error::{Error, Result};
