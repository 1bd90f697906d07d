use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_binary(labels: &[u8]) -> Result<(usize, usize)> {
    let mut pos = 0;
    for &y in labels {
        match y {
            0 => {}
            1 => pos += 1,
            other => return Err(Error::invalid(format!("label {other} is not 0/1"))),
        }
    }
    Ok((pos, labels.len() - pos))
}

/// Midranks (1-based) of `scores`, averaging over ties.
pub fn midranks(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + j) as f64;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Area under the ROC curve via the rank-sum statistic.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let (pos, neg) = check_binary(labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUC needs both classes"));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(r, _)| r).sum();
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[u8], labels: &[u8]) -> Self {
        let mut c = Confusion { tp: 0, fp: 0, tn: 0, r#fn: 0 };
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.r#fn += 1,
                _ => c.tn += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when nothing was predicted positive; precision is reported as 0.
    pub no_predicted_positive: bool,
}

pub fn prf_from_confusion(c: &Confusion) -> PrfScores {
    let predicted = c.tp + c.fp;
    let actual = c.tp + c.r#fn;
    let precision = if predicted > 0 { c.tp as f64 / predicted as f64 } else { 0.0 };
    let recall = if actual > 0 { c.tp as f64 / actual as f64 } else { 0.0 };
    let f1 = if c.tp > 0 { 2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.r#fn) as f64 } else { 0.0 };
    PrfScores { precision, recall, f1, no_predicted_positive: predicted == 0 }
}

pub fn precision_recall_f1(predictions: &[u8], labels: &[u8]) -> PrfScores {
    prf_from_confusion(&Confusion::from_predictions(predictions, labels))
}

/// Hard predictions: positive iff `score > threshold`.
pub fn apply_threshold(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > threshold)).collect()
}

/// Threshold maximising F1 on the given (training) scores.
///
/// Candidates are -inf, the midpoints between consecutive distinct scores,
/// and +inf. Ties go to the lowest threshold.
pub fn select_threshold_max_f1(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::invalid("threshold selection needs equal-length non-empty inputs"));
    }
    let (pos, _) = check_binary(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Descending, so lowering the threshold admits rows in this order.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let f1 = |tp: usize, fp: usize| {
        if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (tp + fp + pos) as f64 }
    };
    // Walk from +inf downwards; remember the best, preferring later (lower) cuts.
    let mut best = (f1(0, 0), f64::INFINITY);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 { tp += 1 } else { fp += 1 }
            i += 1;
        }
        let threshold = if i < order.len() {
            0.5 * (s + scores[order[i]])
        } else {
            f64::NEG_INFINITY
        };
        let f = f1(tp, fp);
        if f >= best.0 {
            best = (f, threshold);
        }
    }
    Ok(best.1)
}
