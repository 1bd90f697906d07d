use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{balanced_bootstrap, grow_tree, CartParams};
use super::tree::{Binned, Tree};
use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::rng::{substream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Columns per node; `None` uses the rounded square root of the width.
    pub max_features: Option<usize>,
    pub max_bins: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 500, max_depth: 12, min_samples_leaf: 1, max_features: None, max_bins: 255 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestFit {
    pub trees: Vec<Tree>,
    pub oob_auc: Option<f64>,
    /// Positive share of each tree's bootstrap sample.
    pub bootstrap_positive_share: Vec<f64>,
}

fn tree_stream(seed: u64, t: usize) -> crate::rng::RandomStream {
    substream(seed, &[tag::FIT, 1, t as u64])
}

pub fn fit_forest(m: &FeatureMatrix, y: &[u8], params: &ForestParams, seed: u64) -> Result<ForestFit> {
    if m.n_rows != y.len() {
        return Err(Error::invalid("matrix and labels differ in length"));
    }
    if params.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("random forest needs both classes"));
    }
    let p = m.n_cols.max(1);
    let mtry = params.max_features.unwrap_or(((p as f64).sqrt().round() as usize).max(1)).min(p);
    let cart = CartParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        min_samples_split: 2,
        max_features: Some(mtry),
        smooth_leaves: false,
        max_bins: params.max_bins,
    };
    let binned = Binned::new(m, params.max_bins);
    let w = vec![1.0; y.len()];
    let grown: Vec<(Tree, f64)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_stream(seed, t);
            let rows = balanced_bootstrap(&pos, &neg, &mut rng);
            let share = rows.iter().filter(|&&r| y[r] == 1).count() as f64 / rows.len() as f64;
            (grow_tree(&binned, y, &w, rows, &cart, Some(&mut rng)).unpruned(), share)
        })
        .collect();
    let (trees, bootstrap_positive_share): (Vec<Tree>, Vec<f64>) = grown.into_iter().unzip();

    // Out-of-bag scores: regenerate each tree's draws from its stream.
    let mut sum = vec![0.0; y.len()];
    let mut count = vec![0u32; y.len()];
    for (t, tree) in trees.iter().enumerate() {
        let mut rng = tree_stream(seed, t);
        let mut inbag = vec![false; y.len()];
        for r in balanced_bootstrap(&pos, &neg, &mut rng) {
            inbag[r] = true;
        }
        for i in (0..y.len()).filter(|&i| !inbag[i]) {
            sum[i] += tree.predict_row(m.row(i));
            count[i] += 1;
        }
    }
    let oob: Vec<usize> = (0..y.len()).filter(|&i| count[i] > 0).collect();
    let scores: Vec<f64> = oob.iter().map(|&i| sum[i] / f64::from(count[i])).collect();
    let labels: Vec<u8> = oob.iter().map(|&i| y[i]).collect();
    let oob_auc = roc_auc(&scores, &labels).ok();
    Ok(ForestFit { trees, oob_auc, bootstrap_positive_share })
}

pub fn forest_predict(trees: &[Tree], row: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / trees.len() as f64
}
