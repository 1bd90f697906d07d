use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Assignment of rows to cross-validation folds.
///
/// `assignments[i]` is the fold of the row at position `i` (id `i + 1`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }

    /// Checks that every fold's prevalence is within one record of the pooled
    /// prevalence.
    pub fn check_stratification(&self, labels: &[u8]) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::invalid("fold plan and labels differ in length"));
        }
        let n = labels.len() as f64;
        let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
        for f in 0..self.k {
            let idx = self.test_indices(f);
            let nf = idx.len() as f64;
            let pf = idx.iter().filter(|&&i| labels[i] == 1).count() as f64;
            if nf == 0.0 || (pf / nf - pos / n).abs() > 1.0 / nf + 1e-12 {
                return Err(Error::invalid(format!(
                    "fold {f} prevalence {pf}/{nf} deviates from pooled {pos}/{n}"
                )));
            }
        }
        Ok(())
    }
}

fn class_indices(labels: &[u8]) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        match y {
            1 => pos.push(i),
            0 => neg.push(i),
            other => return Err(Error::invalid(format!("label {other} is not 0/1"))),
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("both classes must be present"));
    }
    Ok((pos, neg))
}

/// Stratified k-fold assignment: each class is shuffled and dealt round-robin,
/// negatives continuing where positives stopped so fold sizes stay balanced.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("fold count must be >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::invalid(format!(
            "{} rows cannot fill {k} folds",
            labels.len()
        )));
    }
    let (mut pos, mut neg) = class_indices(labels)?;
    let mut rng = rng::substream(seed, &[tag::FOLDS, k as u64]);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignments = vec![0usize; labels.len()];
    for (slot, &i) in pos.iter().chain(neg.iter()).enumerate() {
        assignments[i] = slot % k;
    }
    Ok(FoldPlan {
        k,
        seed,
        assignments,
    })
}

/// Stratified two-way split of the given positions. Returns
/// `(train, validation)` as positions into `labels`, each sorted.
pub fn stratified_holdout(
    labels: &[u8],
    validation_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0 < validation_fraction && validation_fraction < 1.0) {
        return Err(Error::invalid("validation fraction must lie in (0, 1)"));
    }
    let (mut pos, mut neg) = class_indices(labels)?;
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::invalid(
            "need at least two rows per class for a stratified split",
        ));
    }
    let mut rng = rng::substream(seed, &[tag::INNER_SPLIT]);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for class in [&pos, &neg] {
        let nv = ((class.len() as f64 * validation_fraction).round() as usize)
            .clamp(1, class.len() - 1);
        valid.extend_from_slice(&class[..nv]);
        train.extend_from_slice(&class[nv..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    Ok((train, valid))
}
