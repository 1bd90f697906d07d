//! Metrics, significance testing, the Demo/Full ablation harness, policy
//! lift and bootstrap intervals.

mod ablation;
mod bootstrap;
mod delong;
mod lift;
mod metrics;
mod oof;

pub use ablation::*;
pub use bootstrap::{bootstrap_ci, stratified_resample, BootstrapCi};
pub use delong::{delong_paired, DeLongResult};
pub use lift::*;
pub use oof::{FoldTrainScores, OofPredictions, OofRecord};
pub use metrics::{
    apply_threshold, midranks, precision_recall_f1, prf_from_confusion, roc_auc,
    select_threshold_max_f1, Confusion, PrfScores,
};
