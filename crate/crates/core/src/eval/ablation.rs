//! Demo versus Full ablation over a shared outer fold plan.

use std::fmt::Write as _;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::delong::{delong_paired, DeLongResult};
use super::metrics::{apply_threshold, precision_recall_f1, roc_auc};
use super::oof::{FoldTrainScores, OofPredictions, OofRecord};
use crate::dataio::{feature_view, Dataset, FeatureSet, FoldPlan};
use crate::error::{Error, Result};
use crate::models::Family;
use crate::rng::{derive_seed, tag};
use crate::tune::{tune_and_refit, Assignment, Trial, TuneSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Demo,
    Full,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Demo, Variant::Full];

    pub fn feature_set(self) -> FeatureSet {
        match self {
            Variant::Demo => FeatureSet::demo(),
            Variant::Full => FeatureSet::full(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Demo => "Demo",
            Variant::Full => "Full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSettings {
    pub trials: usize,
    pub inner_valid_fraction: f64,
    pub reference_date: NaiveDate,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl Metrics {
    fn compute(scores: &[f64], predictions: &[u8], labels: &[u8]) -> Result<Metrics> {
        let prf = precision_recall_f1(predictions, labels);
        Ok(Metrics { auc: roc_auc(scores, labels)?, f1: prf.f1, precision: prf.precision, recall: prf.recall })
    }

    fn mean(all: &[Metrics]) -> Metrics {
        let n = all.len() as f64;
        let sum = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Metrics { auc: sum(|m| m.auc), f1: sum(|m| m.f1), precision: sum(|m| m.precision), recall: sum(|m| m.recall) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub threshold: f64,
    pub metrics: Metrics,
    pub tuned: Assignment,
    pub trials: Vec<Trial>,
}

/// One line of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub family: Family,
    pub variant: Variant,
    /// Unweighted mean of per-fold metrics.
    pub mean: Metrics,
    /// Metrics of the pooled out-of-fold scores, each thresholded by its fold's cut.
    pub pooled: Metrics,
    pub folds: Vec<FoldResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyAblation {
    pub family: Family,
    pub oof: OofPredictions,
    /// Demo as `a`, Full as `b`, on the pooled out-of-fold scores.
    pub delong: DeLongResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub n_records: usize,
    pub k: usize,
    pub settings: AblationSettings,
    pub rows: Vec<AblationRow>,
    pub families: Vec<FamilyAblation>,
}

struct Job {
    family: Family,
    variant: Variant,
    fold: usize,
}

struct JobOut {
    fold: FoldResult,
    test_scores: Vec<f64>,
    train_scores: Vec<f64>,
}

fn job_seed(seed: u64, family: Family, fold: usize) -> u64 {
    let fi = Family::ALL.iter().position(|&f| f == family).unwrap_or(0) as u64;
    derive_seed(seed, &[tag::TUNE, fi, fold as u64])
}

/// Nested-tuned fit of every family and variant on every outer fold. Both
/// variants of a family share the fold's tuning seed.
pub fn run_ablation(
    dataset: &Dataset,
    families: &[Family],
    plan: &FoldPlan,
    settings: &AblationSettings,
) -> Result<AblationReport> {
    if families.is_empty() {
        return Err(Error::Config("no model families requested".into()));
    }
    let labels = dataset.labels();
    if plan.len() != labels.len() {
        return Err(Error::invalid("fold plan does not match the dataset"));
    }
    plan.check_stratification(&labels)?;
    let views = [feature_view(dataset, &Variant::Demo.feature_set())?, feature_view(dataset, &Variant::Full.feature_set())?];

    let jobs: Vec<Job> = families
        .iter()
        .flat_map(|&family| {
            Variant::BOTH
                .into_iter()
                .flat_map(move |variant| (0..plan.k).map(move |fold| Job { family, variant, fold }))
        })
        .collect();
    let outs: Vec<JobOut> = jobs
        .par_iter()
        .map(|job| {
            let view = &views[job.variant as usize];
            let train = view.select(&plan.train_indices(job.fold));
            let test = view.select(&plan.test_indices(job.fold));
            let tune = TuneSettings {
                n_trials: settings.trials,
                inner_valid_fraction: settings.inner_valid_fraction,
                seed: job_seed(settings.seed, job.family, job.fold),
            };
            let (model, tuning, train_scores) = tune_and_refit(&train, job.family, settings.reference_date, &tune)?;
            let threshold = model.threshold.expect("refit sets a threshold");
            let test_scores = model.predict_view(&test)?;
            let metrics = Metrics::compute(&test_scores, &apply_threshold(&test_scores, threshold), &test.labels)?;
            Ok(JobOut {
                fold: FoldResult { fold: job.fold, threshold, metrics, tuned: tuning.best, trials: tuning.trials },
                test_scores,
                train_scores,
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut fams = Vec::new();
    let per_family = 2 * plan.k;
    for (fi, &family) in families.iter().enumerate() {
        let chunk = &outs[fi * per_family..(fi + 1) * per_family];
        let mut scores = [vec![0.0; labels.len()], vec![0.0; labels.len()]];
        for (vi, variant) in Variant::BOTH.into_iter().enumerate() {
            let folds = &chunk[vi * plan.k..(vi + 1) * plan.k];
            let mut preds = vec![0u8; labels.len()];
            for out in folds {
                let test = plan.test_indices(out.fold.fold);
                for (&i, &s) in test.iter().zip(&out.test_scores) {
                    scores[vi][i] = s;
                    preds[i] = u8::from(s > out.fold.threshold);
                }
            }
            let fold_metrics: Vec<Metrics> = folds.iter().map(|o| o.fold.metrics).collect();
            rows.push(AblationRow {
                family,
                variant,
                mean: Metrics::mean(&fold_metrics),
                pooled: Metrics::compute(&scores[vi], &preds, &labels)?,
                folds: folds.iter().map(|o| o.fold.clone()).collect(),
            });
        }
        let records = dataset
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| OofRecord {
                id: r.id,
                label: labels[i],
                fold: plan.assignments[i],
                demo_score: scores[0][i],
                full_score: scores[1][i],
            })
            .collect();
        let train_scores = (0..plan.k)
            .map(|f| FoldTrainScores {
                fold: f,
                demo: chunk[f].train_scores.clone(),
                full: chunk[plan.k + f].train_scores.clone(),
            })
            .collect();
        let oof = OofPredictions { family: family.name().to_string(), k: plan.k, records, train_scores };
        oof.validate()?;
        let delong = delong_paired(&scores[0], &scores[1], &labels)?;
        fams.push(FamilyAblation { family, oof, delong });
    }
    Ok(AblationReport { n_records: labels.len(), k: plan.k, settings: settings.clone(), rows, families: fams })
}

impl AblationReport {
    /// Metrics table (fold means) with columns Model, AUC, F1, Precision, Recall.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("Model,AUC,F1,Precision,Recall\n");
        for r in &self.rows {
            let m = &r.mean;
            let _ = writeln!(
                s,
                "{} ({}),{:.4},{:.4},{:.4},{:.4}",
                r.family,
                r.variant.name(),
                m.auc,
                m.f1,
                m.precision,
                m.recall
            );
        }
        s
    }

    pub fn row(&self, family: Family, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.family == family && r.variant == variant)
    }

    pub fn family(&self, family: Family) -> Option<&FamilyAblation> {
        self.families.iter().find(|f| f.family == family)
    }

    /// Fold-mean Full minus Demo AUC.
    pub fn auc_uplift(&self, family: Family) -> Option<f64> {
        Some(self.row(family, Variant::Full)?.mean.auc - self.row(family, Variant::Demo)?.mean.auc)
    }

    pub fn f1_uplift(&self, family: Family) -> Option<f64> {
        Some(self.row(family, Variant::Full)?.mean.f1 - self.row(family, Variant::Demo)?.mean.f1)
    }
}
