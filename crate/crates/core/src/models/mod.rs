//! Learners for the six model families and a common serialisable model type.

mod cart;
mod forest;
mod gbdt;
mod logreg;
mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cart::{fit_pruned_tree, gini, CartParams, PrunedTree};
pub use forest::{fit_forest, forest_predict, ForestFit, ForestParams};
pub use gbdt::{
    boost, class_weights, clamp_prob, leaf_weight, logistic_grad_hess, predict_margin, sigmoid,
    split_gain, BoostOutcome, GbdtParams, Goss, Preset, PROB_EPS,
};
pub use logreg::{fit_logreg, LogRegFit, LogRegParams, Problem as LogRegProblem};
pub use tree::{Node, Tree};

use crate::dataio::FeatureView;
use crate::encode::{EncodeMode, EncoderState, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    GbdtCat,
    GbdtLgbm,
    GbdtXgb,
    Logreg,
    RandomForest,
    DecisionTree,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::GbdtCat,
        Family::GbdtLgbm,
        Family::GbdtXgb,
        Family::Logreg,
        Family::RandomForest,
        Family::DecisionTree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::GbdtCat => "gbdt_cat",
            Family::GbdtLgbm => "gbdt_lgbm",
            Family::GbdtXgb => "gbdt_xgb",
            Family::Logreg => "logreg",
            Family::RandomForest => "random_forest",
            Family::DecisionTree => "decision_tree",
        }
    }

    pub fn is_boosted(self) -> bool {
        matches!(self, Family::GbdtCat | Family::GbdtLgbm | Family::GbdtXgb)
    }

    pub fn encode_mode(self) -> EncodeMode {
        match self {
            Family::Logreg => EncodeMode::Linear,
            _ => EncodeMode::Tree,
        }
    }

    pub fn preset(self) -> Option<Preset> {
        match self {
            Family::GbdtCat => Some(Preset::CatLike),
            Family::GbdtLgbm => Some(Preset::LgbmLike),
            Family::GbdtXgb => Some(Preset::XgbLike),
            _ => None,
        }
    }

    pub fn default_params(self) -> ModelParams {
        match self.preset() {
            Some(p) => ModelParams::Gbdt(GbdtParams::preset(p)),
            None => match self {
                Family::Logreg => ModelParams::Logreg(LogRegParams::default()),
                Family::RandomForest => ModelParams::Forest(ForestParams::default()),
                _ => ModelParams::Tree(TreeParams::default()),
            },
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
                Error::Config(format!("unknown model family `{s}` (known: {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub cart: CartParams,
    pub cv_folds: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { cart: CartParams::default(), cv_folds: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Gbdt(GbdtParams),
    Logreg(LogRegParams),
    Forest(ForestParams),
    Tree(TreeParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Structure {
    /// Boosted trees; leaf values already include the learning rate.
    Ensemble { base_margin: f64, trees: Vec<Tree> },
    Forest { trees: Vec<Tree> },
    Single { tree: Tree, alpha: f64 },
    Linear { intercept: f64, coef: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub family: Family,
    pub params: ModelParams,
    pub structure: Structure,
    pub n_features: usize,
    pub encoder: Option<EncoderState>,
    /// Per-round validation AUC (boosted models only).
    pub trace: Vec<f64>,
    pub best_iteration: usize,
    pub rounds_trained: usize,
    pub converged: Option<bool>,
    pub oob_auc: Option<f64>,
    /// Decision threshold on the delinquency probability: reject iff p > threshold.
    pub threshold: Option<f64>,
}

/// Training data plus an optional early-stopping split.
pub struct FitData<'a> {
    pub train: &'a FeatureMatrix,
    pub labels: &'a [u8],
    pub valid: Option<(&'a FeatureMatrix, &'a [u8])>,
}

fn family_params_match(family: Family, params: &ModelParams) -> bool {
    matches!(
        (family, params),
        (Family::GbdtCat | Family::GbdtLgbm | Family::GbdtXgb, ModelParams::Gbdt(_))
            | (Family::Logreg, ModelParams::Logreg(_))
            | (Family::RandomForest, ModelParams::Forest(_))
            | (Family::DecisionTree, ModelParams::Tree(_))
    )
}

/// Fits `family` with `params`. Boosted models use `data.valid` for early
/// stopping when present; other families ignore it.
pub fn fit(family: Family, params: &ModelParams, data: FitData<'_>, seed: u64) -> Result<TrainedModel> {
    if !family_params_match(family, params) {
        return Err(Error::Config(format!("parameters do not belong to family {family}")));
    }
    let n_features = data.train.n_cols;
    let mut model = TrainedModel {
        family,
        params: params.clone(),
        structure: Structure::Linear { intercept: 0.0, coef: vec![] },
        n_features,
        encoder: None,
        trace: vec![],
        best_iteration: 0,
        rounds_trained: 0,
        converged: None,
        oob_auc: None,
        threshold: None,
    };
    match params {
        ModelParams::Gbdt(p) => {
            let out = boost(data.train, data.labels, data.valid, p, seed)?;
            model.structure = Structure::Ensemble { base_margin: out.base_margin, trees: out.trees };
            model.trace = out.trace;
            model.best_iteration = out.best_iteration;
            model.rounds_trained = out.rounds_trained;
        }
        ModelParams::Logreg(p) => {
            let w = vec![1.0; data.labels.len()];
            let out = fit_logreg(data.train, data.labels, &w, p)?;
            model.converged = Some(out.converged);
            model.rounds_trained = out.iterations;
            model.best_iteration = out.iterations;
            model.structure = Structure::Linear { intercept: out.intercept, coef: out.coef };
        }
        ModelParams::Forest(p) => {
            let out = fit_forest(data.train, data.labels, p, seed)?;
            model.oob_auc = out.oob_auc;
            model.rounds_trained = out.trees.len();
            model.best_iteration = out.trees.len();
            model.structure = Structure::Forest { trees: out.trees };
        }
        ModelParams::Tree(p) => {
            let w = vec![1.0; data.labels.len()];
            let out = fit_pruned_tree(data.train, data.labels, &w, &p.cart, p.cv_folds, seed)?;
            model.structure = Structure::Single { tree: out.tree, alpha: out.alpha };
        }
    }
    Ok(model)
}

impl TrainedModel {
    fn score_row(&self, row: &[f64]) -> f64 {
        let p = match &self.structure {
            Structure::Ensemble { base_margin, trees } => {
                sigmoid(base_margin + trees.iter().map(|t| t.predict_row(row)).sum::<f64>())
            }
            Structure::Forest { trees } => forest_predict(trees, row),
            Structure::Single { tree, .. } => tree.predict_row(row),
            Structure::Linear { intercept, coef } => {
                sigmoid(intercept + row.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>())
            }
        };
        clamp_prob(p)
    }

    /// Delinquency probabilities in (0, 1) for an encoded matrix.
    pub fn predict_proba(&self, m: &FeatureMatrix) -> Result<Vec<f64>> {
        if m.n_cols != self.n_features {
            return Err(Error::Mismatch(format!(
                "matrix has {} columns, model expects {}",
                m.n_cols, self.n_features
            )));
        }
        if let Some(enc) = &self.encoder {
            if m.n_rows > 0 && m.column_names != enc.feature_names {
                return Err(Error::Mismatch("matrix was not produced by the model's encoder".into()));
            }
        }
        Ok((0..m.n_rows).into_par_iter().map(|i| self.score_row(m.row(i))).collect())
    }

    /// Encodes `view` with the embedded encoder and scores it.
    pub fn predict_view(&self, view: &FeatureView) -> Result<Vec<f64>> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::Mismatch("model has no embedded encoder".into()))?;
        let m = crate::encode::transform(enc, view)?;
        self.predict_proba(&m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!(matches!("gbdt".parse::<Family>(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_tree_ensemble_is_constant() {
        let model = TrainedModel {
            family: Family::GbdtXgb,
            params: Family::GbdtXgb.default_params(),
            structure: Structure::Ensemble { base_margin: 0.4, trees: vec![] },
            n_features: 2,
            encoder: None,
            trace: vec![],
            best_iteration: 0,
            rounds_trained: 0,
            converged: None,
            oob_auc: None,
            threshold: None,
        };
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![5.0, -1.0]], vec!["a".into(), "b".into()]).unwrap();
        let p = model.predict_proba(&m).unwrap();
        assert_eq!(p, vec![sigmoid(0.4); 2]);
        let wide = FeatureMatrix::from_rows(&[vec![1.0]], vec!["a".into()]).unwrap();
        assert!(model.predict_proba(&wide).is_err());
    }

    #[test]
    fn raising_input_on_positive_path_never_lowers_probability() {
        // x <= 0.5 -> 0.1, else (x <= 2 -> 0.4 else 0.9).
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { value: 0.1 },
                Node::Split { feature: 0, threshold: 2.0, left: 3, right: 4 },
                Node::Leaf { value: 0.4 },
                Node::Leaf { value: 0.9 },
            ],
            depth: 2,
        };
        let mut last = 0.0;
        for i in 0..40 {
            let p = tree.predict_row(&[f64::from(i) * 0.1]);
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn every_family_fits_and_serialises() {
        let (m, y) = gbdt::tests::separable(120, 12);
        for f in Family::ALL {
            let mut params = f.default_params();
            match &mut params {
                ModelParams::Gbdt(p) => p.n_rounds_max = 10,
                ModelParams::Forest(p) => p.n_trees = 10,
                _ => {}
            }
            let model = fit(f, &params, FitData { train: &m, labels: &y, valid: None }, 1).unwrap();
            let p = model.predict_proba(&m).unwrap();
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
            let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
            assert_eq!(back.predict_proba(&m).unwrap(), p);
        }
    }
}
