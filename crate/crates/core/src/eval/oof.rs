use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OofRecord {
    pub id: u64,
    pub label: u8,
    pub fold: usize,
    /// Out-of-fold probability of delinquency from the Demo model.
    pub demo_score: f64,
    pub full_score: f64,
}

/// Cross-fitted scores of one fold's training rows, in the order those rows
/// appear in [`OofPredictions::records`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTrainScores {
    pub fold: usize,
    pub demo: Vec<f64>,
    pub full: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OofPredictions {
    pub family: String,
    pub k: usize,
    pub records: Vec<OofRecord>,
    pub train_scores: Vec<FoldTrainScores>,
}

impl OofPredictions {
    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn demo_scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.demo_score).collect()
    }

    pub fn full_scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.full_score).collect()
    }

    /// Positions of records held out in `fold`.
    pub fn test_positions(&self, fold: usize) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].fold == fold).collect()
    }

    /// Positions of records used to train `fold`'s models.
    pub fn train_positions(&self, fold: usize) -> Vec<usize> {
        (0..self.records.len()).filter(|&i| self.records[i].fold != fold).collect()
    }

    /// Copy with the Full scores replaced by the Demo scores.
    pub fn with_full_as_demo(&self) -> OofPredictions {
        let mut out = self.clone();
        for r in &mut out.records {
            r.full_score = r.demo_score;
        }
        for t in &mut out.train_scores {
            t.full = t.demo.clone();
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("out-of-fold predictions need k >= 2"));
        }
        for r in &self.records {
            if r.fold >= self.k || r.label > 1 {
                return Err(Error::invalid(format!("record {} has fold {} or label {}", r.id, r.fold, r.label)));
            }
            if !(r.demo_score.is_finite() && r.full_score.is_finite()) {
                return Err(Error::invalid(format!("record {} has a non-finite score", r.id)));
            }
        }
        let mut seen = vec![false; self.k];
        for t in &self.train_scores {
            if t.fold >= self.k || seen[t.fold] {
                return Err(Error::invalid(format!("duplicate or unknown training scores for fold {}", t.fold)));
            }
            seen[t.fold] = true;
            let n = self.train_positions(t.fold).len();
            if t.demo.len() != n || t.full.len() != n {
                return Err(Error::invalid(format!(
                    "fold {} training scores have {}/{} entries, expected {n}",
                    t.fold,
                    t.demo.len(),
                    t.full.len()
                )));
            }
        }
        Ok(())
    }

    pub fn train_scores_for(&self, fold: usize) -> Result<&FoldTrainScores> {
        self.train_scores
            .iter()
            .find(|t| t.fold == fold)
            .ok_or_else(|| Error::invalid(format!("no training scores stored for fold {fold}")))
    }
}
