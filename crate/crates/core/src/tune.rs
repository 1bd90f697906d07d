//! Hyperparameter search nested inside an outer training partition.
//!
//! Boosted families use a tree-structured Parzen estimator; the forest, the
//! single tree and the elastic net enumerate small grids. Every trial is
//! scored by AUC on a stratified inner validation split of the rows it is
//! given, so callers only ever pass outer-training rows.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as NormalDist};

use crate::dataio::{stratified_holdout, stratified_kfold, FeatureView};
use crate::encode::{fit_encoder, transform, FeatureMatrix};
use crate::error::{Error, Result};
use crate::eval::{roc_auc, select_threshold_max_f1};
use crate::models::{fit, Family, FitData, ModelParams, TrainedModel};
use crate::rng::{derive_seed, substream, tag, RandomStream};

pub const TPE_GAMMA: f64 = 0.25;
pub const TPE_CANDIDATES: usize = 24;
pub const TPE_STARTUP: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Float { lo: f64, hi: f64, log: bool },
    /// Inclusive integer range.
    Int { lo: i64, hi: i64 },
    Cat { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Float(v) => Some(*v),
            ParamValue::Cat(_) => None,
        }
    }
}

pub type Assignment = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<(String, Domain)>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, d) in &self.params {
            let ok = match d {
                Domain::Float { lo, hi, log } => lo < hi && (!log || *lo > 0.0),
                Domain::Int { lo, hi } => lo < hi,
                Domain::Cat { choices } => !choices.is_empty(),
            };
            if !ok {
                return Err(Error::Config(format!("invalid domain for `{name}`: {d:?}")));
            }
        }
        Ok(())
    }

    /// Default space for a boosted family.
    pub fn for_family(family: Family) -> SearchSpace {
        let lr = ("learning_rate".to_string(), Domain::Float { lo: 0.01, hi: 0.3, log: true });
        let l1 = ("l1_alpha".to_string(), Domain::Float { lo: 1e-3, hi: 10.0, log: true });
        let l2 = ("l2_lambda".to_string(), Domain::Float { lo: 1e-3, hi: 10.0, log: true });
        let depth = ("max_depth".to_string(), Domain::Int { lo: 4, hi: 10 });
        let sub = ("row_subsample".to_string(), Domain::Float { lo: 0.6, hi: 1.0, log: false });
        let params = match family {
            Family::GbdtXgb => vec![lr, depth, l1, l2, sub],
            Family::GbdtLgbm => vec![lr, ("max_leaves".to_string(), Domain::Int { lo: 15, hi: 63 }), l1, l2],
            Family::GbdtCat => vec![lr, depth, l2, sub],
            _ => vec![],
        };
        SearchSpace { params }
    }

    pub fn contains(&self, a: &Assignment) -> bool {
        self.params.iter().all(|(name, d)| match (d, a.get(name)) {
            (Domain::Float { lo, hi, .. }, Some(ParamValue::Float(v))) => lo <= v && v <= hi,
            (Domain::Int { lo, hi }, Some(ParamValue::Int(v))) => lo <= v && v <= hi,
            (Domain::Cat { choices }, Some(ParamValue::Cat(v))) => choices.contains(v),
            _ => false,
        })
    }
}

/// Default grid for a grid-searched family.
pub fn default_grid(family: Family) -> Vec<Assignment> {
    let one = |k: &str, v: ParamValue| Assignment::from([(k.to_string(), v)]);
    match family {
        Family::DecisionTree => [4, 6, 8].map(|d| one("max_depth", ParamValue::Int(d))).to_vec(),
        Family::RandomForest => [1, 5, 20].map(|m| one("min_samples_leaf", ParamValue::Int(m))).to_vec(),
        Family::Logreg => {
            let mut g = Vec::new();
            for a in [0.1, 0.5, 0.9] {
                for l in [1e-4, 1e-3, 1e-2] {
                    g.push(Assignment::from([
                        ("alpha_mix".to_string(), ParamValue::Float(a)),
                        ("lambda".to_string(), ParamValue::Float(l)),
                    ]));
                }
            }
            g
        }
        _ => vec![Assignment::new()],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub assignment: Assignment,
    pub auc: f64,
    /// Best boosting round on the inner split, when applicable.
    pub best_iteration: Option<usize>,
}

fn to_unit(d: &Domain, v: f64) -> f64 {
    match d {
        Domain::Float { log: true, .. } => v.ln(),
        _ => v,
    }
}

/// Bounds in the transformed space used by the Parzen kernels.
fn bounds(d: &Domain) -> (f64, f64) {
    match d {
        Domain::Float { lo, hi, log } => {
            if *log {
                (lo.ln(), hi.ln())
            } else {
                (*lo, *hi)
            }
        }
        Domain::Int { lo, hi } => (*lo as f64 - 0.5, *hi as f64 + 0.5),
        Domain::Cat { .. } => (0.0, 1.0),
    }
}

fn from_unit(d: &Domain, u: f64) -> ParamValue {
    match d {
        Domain::Float { lo, hi, log } => {
            let v = if *log { u.exp() } else { u };
            ParamValue::Float(v.clamp(*lo, *hi))
        }
        Domain::Int { lo, hi } => ParamValue::Int((u.round() as i64).clamp(*lo, *hi)),
        Domain::Cat { choices } => ParamValue::Cat(choices[0].clone()),
    }
}

fn prior_draw(d: &Domain, rng: &mut RandomStream) -> ParamValue {
    match d {
        Domain::Cat { choices } => ParamValue::Cat(choices[rng.random_range(0..choices.len())].clone()),
        Domain::Int { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
        _ => {
            let (a, b) = bounds(d);
            from_unit(d, rng.random_range(a..b))
        }
    }
}

/// Gaussian kernels truncated to `[lo, hi]`, one per observation, mixed
/// with the uniform prior as one extra component.
struct Parzen {
    centers: Vec<f64>,
    sigma: f64,
    lo: f64,
    hi: f64,
}

impl Parzen {
    fn new(centers: Vec<f64>, lo: f64, hi: f64, count: usize) -> Self {
        let sigma = (hi - lo) / (count.max(1) as f64).sqrt();
        Parzen { centers, sigma, lo, hi }
    }

    fn pdf(&self, x: f64) -> f64 {
        let mut s = 1.0 / (self.hi - self.lo);
        for &c in &self.centers {
            let n = NormalDist::new(c, self.sigma).expect("positive sigma");
            let mass = n.cdf(self.hi) - n.cdf(self.lo);
            s += n.pdf(x) / mass.max(1e-300);
        }
        s / (self.centers.len() + 1) as f64
    }

    fn sample(&self, rng: &mut RandomStream) -> f64 {
        let k = rng.random_range(0..=self.centers.len());
        if k == self.centers.len() {
            return rng.random_range(self.lo..self.hi);
        }
        let c = self.centers[k];
        let n = Normal::new(c, self.sigma).expect("positive sigma");
        for _ in 0..100 {
            let x = n.sample(rng);
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        c.clamp(self.lo, self.hi)
    }
}

/// Next assignment to evaluate. Histories shorter than the start-up count
/// fall back to prior sampling.
pub fn tpe_suggest(history: &[Trial], space: &SearchSpace, rng: &mut RandomStream) -> Assignment {
    let mut out = Assignment::new();
    if history.len() < TPE_STARTUP {
        for (name, d) in &space.params {
            out.insert(name.clone(), prior_draw(d, rng));
        }
        return out;
    }
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| history[b].auc.total_cmp(&history[a].auc).then(a.cmp(&b)));
    let n_good = ((TPE_GAMMA * history.len() as f64).ceil() as usize).max(1);
    let (good, bad) = order.split_at(n_good);
    for (name, d) in &space.params {
        let value = match d {
            Domain::Cat { choices } => {
                let weights = |set: &[usize]| {
                    let mut w = vec![1.0; choices.len()];
                    for &i in set {
                        if let Some(ParamValue::Cat(v)) = history[i].assignment.get(name) {
                            if let Some(k) = choices.iter().position(|c| c == v) {
                                w[k] += 1.0;
                            }
                        }
                    }
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / s).collect::<Vec<f64>>()
                };
                let (l, g) = (weights(good), weights(bad));
                let mut best = (f64::NEG_INFINITY, 0);
                for _ in 0..TPE_CANDIDATES {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut k = choices.len() - 1;
                    for (j, p) in l.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            k = j;
                            break;
                        }
                    }
                    let score = l[k].ln() - g[k].ln();
                    if score > best.0 {
                        best = (score, k);
                    }
                }
                ParamValue::Cat(choices[best.1].clone())
            }
            _ => {
                let (lo, hi) = bounds(d);
                let pts = |set: &[usize]| -> Vec<f64> {
                    set.iter()
                        .filter_map(|&i| history[i].assignment.get(name).and_then(ParamValue::as_f64))
                        .map(|v| to_unit(d, v))
                        .collect()
                };
                let l = Parzen::new(pts(good), lo, hi, history.len());
                let g = Parzen::new(pts(bad), lo, hi, history.len());
                let mut best = (f64::NEG_INFINITY, lo);
                for _ in 0..TPE_CANDIDATES {
                    let x = l.sample(rng);
                    let score = l.pdf(x).max(1e-300).ln() - g.pdf(x).max(1e-300).ln();
                    if score > best.0 {
                        best = (score, x);
                    }
                }
                from_unit(d, best.1)
            }
        };
        out.insert(name.clone(), value);
    }
    out
}

fn get_f(a: &Assignment, k: &str) -> Option<f64> {
    a.get(k).and_then(ParamValue::as_f64)
}

fn get_u(a: &Assignment, k: &str) -> Result<Option<usize>> {
    match a.get(k) {
        None => Ok(None),
        Some(ParamValue::Int(v)) if *v >= 0 => Ok(Some(*v as usize)),
        Some(v) => Err(Error::Config(format!("`{k}` must be a non-negative integer, got {v:?}"))),
    }
}

/// Overlays `a` on `base`. Unknown names are rejected.
pub fn apply_assignment(base: &ModelParams, a: &Assignment) -> Result<ModelParams> {
    let mut p = base.clone();
    let known: &[&str] = match &p {
        ModelParams::Gbdt(_) => &[
            "learning_rate", "max_depth", "max_leaves", "l1_alpha", "l2_lambda", "row_subsample",
            "col_subsample", "n_rounds_max",
        ],
        ModelParams::Logreg(_) => &["alpha_mix", "lambda"],
        ModelParams::Forest(_) => &["min_samples_leaf", "max_depth", "n_trees", "max_features"],
        ModelParams::Tree(_) => &["max_depth", "min_samples_leaf"],
    };
    if let Some(k) = a.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown hyperparameter `{k}`")));
    }
    match &mut p {
        ModelParams::Gbdt(g) => {
            if let Some(v) = get_f(a, "learning_rate") { g.learning_rate = v }
            if let Some(v) = get_u(a, "max_depth")? { g.max_depth = v }
            if let Some(v) = get_u(a, "max_leaves")? { g.max_leaves = v }
            if let Some(v) = get_u(a, "n_rounds_max")? { g.n_rounds_max = v }
            if let Some(v) = get_f(a, "l1_alpha") { g.l1_alpha = v }
            if let Some(v) = get_f(a, "l2_lambda") { g.l2_lambda = v }
            if let Some(v) = get_f(a, "row_subsample") { g.row_subsample = v }
            if let Some(v) = get_f(a, "col_subsample") { g.col_subsample = v }
            g.validate()?;
        }
        ModelParams::Logreg(l) => {
            if let Some(v) = get_f(a, "alpha_mix") { l.alpha_mix = v }
            if let Some(v) = get_f(a, "lambda") { l.lambda = v }
        }
        ModelParams::Forest(f) => {
            if let Some(v) = get_u(a, "min_samples_leaf")? { f.min_samples_leaf = v }
            if let Some(v) = get_u(a, "max_depth")? { f.max_depth = v }
            if let Some(v) = get_u(a, "n_trees")? { f.n_trees = v }
            if let Some(v) = get_u(a, "max_features")? { f.max_features = Some(v) }
        }
        ModelParams::Tree(t) => {
            if let Some(v) = get_u(a, "max_depth")? { t.cart.max_depth = v }
            if let Some(v) = get_u(a, "min_samples_leaf")? { t.cart.min_samples_leaf = v }
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSettings {
    pub n_trials: usize,
    pub inner_valid_fraction: f64,
    pub seed: u64,
}

impl Default for TuneSettings {
    fn default() -> Self {
        TuneSettings { n_trials: 50, inner_valid_fraction: 0.2, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub family: Family,
    pub best_index: usize,
    pub best: Assignment,
    /// Base parameters with the winning assignment applied.
    pub params: ModelParams,
    pub trials: Vec<Trial>,
}

impl TuneResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best_index]
    }

    /// Parameters for the refit on the whole outer-training partition.
    /// Boosted models train exactly the selected trial's best number of rounds.
    pub fn refit_params(&self) -> ModelParams {
        let mut p = self.params.clone();
        if let (ModelParams::Gbdt(g), Some(it)) = (&mut p, self.best_trial().best_iteration) {
            g.n_rounds_max = it.max(1);
        }
        p
    }
}

/// The inner split and its encoded matrices.
struct Inner {
    train: FeatureMatrix,
    train_y: Vec<u8>,
    valid: FeatureMatrix,
    valid_y: Vec<u8>,
}

fn inner_split(view: &FeatureView, family: Family, reference_date: chrono::NaiveDate, s: &TuneSettings) -> Result<Inner> {
    let split_seed = derive_seed(s.seed, &[tag::INNER_SPLIT]);
    let (tr, va) = stratified_holdout(&view.labels, s.inner_valid_fraction, split_seed)?;
    let tv = view.select(&tr);
    let vv = view.select(&va);
    let enc = fit_encoder(&tv, family.encode_mode(), reference_date)?;
    Ok(Inner {
        train: transform(&enc, &tv)?,
        train_y: tv.labels,
        valid: transform(&enc, &vv)?,
        valid_y: vv.labels,
    })
}

fn run_trial(family: Family, params: &ModelParams, inner: &Inner, seed: u64) -> Result<(f64, Option<usize>)> {
    let data = FitData {
        train: &inner.train,
        labels: &inner.train_y,
        valid: Some((&inner.valid, &inner.valid_y)),
    };
    let model = fit(family, params, data, seed)?;
    let auc = roc_auc(&model.predict_proba(&inner.valid)?, &inner.valid_y)?;
    let it = matches!(params, ModelParams::Gbdt(_)).then_some(model.best_iteration);
    Ok((auc, it))
}

fn pick_best(trials: &[Trial]) -> usize {
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.auc > trials[best].auc {
            best = i;
        }
    }
    best
}

/// TPE search over `space`, every trial scored on the inner split of `view`.
pub fn nested_tune(
    view: &FeatureView,
    family: Family,
    space: &SearchSpace,
    reference_date: chrono::NaiveDate,
    settings: &TuneSettings,
) -> Result<TuneResult> {
    space.validate()?;
    if settings.n_trials == 0 {
        return Err(Error::Config("n_trials must be >= 1".into()));
    }
    let inner = inner_split(view, family, reference_date, settings)?;
    let base = family.default_params();
    let fit_seed = derive_seed(settings.seed, &[tag::FIT]);
    let mut trials: Vec<Trial> = Vec::with_capacity(settings.n_trials);
    for index in 0..settings.n_trials {
        let mut rng = substream(settings.seed, &[tag::TUNE, index as u64]);
        let assignment = tpe_suggest(&trials, space, &mut rng);
        let params = apply_assignment(&base, &assignment)?;
        let (auc, best_iteration) = run_trial(family, &params, &inner, fit_seed)?;
        trials.push(Trial { index, assignment, auc, best_iteration });
    }
    let best_index = pick_best(&trials);
    let best = trials[best_index].assignment.clone();
    Ok(TuneResult { family, best_index, params: apply_assignment(&base, &best)?, best, trials })
}

/// Exhaustive search; ties go to the earlier grid entry.
pub fn grid_search(
    view: &FeatureView,
    family: Family,
    grid: &[Assignment],
    reference_date: chrono::NaiveDate,
    settings: &TuneSettings,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    let inner = inner_split(view, family, reference_date, settings)?;
    let base = family.default_params();
    let fit_seed = derive_seed(settings.seed, &[tag::FIT]);
    let mut trials = Vec::with_capacity(grid.len());
    for (index, assignment) in grid.iter().enumerate() {
        let params = apply_assignment(&base, assignment)?;
        let (auc, best_iteration) = run_trial(family, &params, &inner, fit_seed)?;
        trials.push(Trial { index, assignment: assignment.clone(), auc, best_iteration });
    }
    let best_index = pick_best(&trials);
    let best = trials[best_index].assignment.clone();
    Ok(TuneResult { family, best_index, params: apply_assignment(&base, &best)?, best, trials })
}

/// TPE for boosted families, the default grid otherwise.
pub fn tune_family(
    view: &FeatureView,
    family: Family,
    reference_date: chrono::NaiveDate,
    settings: &TuneSettings,
) -> Result<TuneResult> {
    if family.is_boosted() {
        nested_tune(view, family, &SearchSpace::for_family(family), reference_date, settings)
    } else {
        grid_search(view, family, &default_grid(family), reference_date, settings)
    }
}

/// Inner folds used to score the training rows out of sample.
pub const CROSS_FIT_FOLDS: usize = 3;

/// Out-of-sample scores for every row of `view`: each row is scored by a
/// model fitted with `params` on the other cross-fit folds.
pub fn cross_fit_scores(
    view: &FeatureView,
    family: Family,
    params: &ModelParams,
    reference_date: chrono::NaiveDate,
    seed: u64,
) -> Result<Vec<f64>> {
    let plan = stratified_kfold(&view.labels, CROSS_FIT_FOLDS, derive_seed(seed, &[tag::CROSS_FIT]))?;
    let fit_seed = derive_seed(seed, &[tag::FIT]);
    let mut scores = vec![f64::NAN; view.rows.len()];
    for fold in 0..plan.k {
        let tr = plan.train_indices(fold);
        let te = plan.test_indices(fold);
        let tv = view.select(&tr);
        let enc = fit_encoder(&tv, family.encode_mode(), reference_date)?;
        let m = transform(&enc, &tv)?;
        let model = fit(family, params, FitData { train: &m, labels: &tv.labels, valid: None }, fit_seed)?;
        let p = model.predict_proba(&transform(&enc, &view.select(&te))?)?;
        for (&i, s) in te.iter().zip(p) {
            scores[i] = s;
        }
    }
    Ok(scores)
}

/// Tunes on `view`, then refits on all of it with the selected parameters.
/// The returned model carries its encoder and an F1-maximising threshold.
/// The threshold is chosen on cross-fitted scores of `view`, which are
/// returned alongside; in-sample scores of a boosted model sit far lower
/// than its held-out scores.
pub fn tune_and_refit(
    view: &FeatureView,
    family: Family,
    reference_date: chrono::NaiveDate,
    settings: &TuneSettings,
) -> Result<(TrainedModel, TuneResult, Vec<f64>)> {
    let tuning = tune_family(view, family, reference_date, settings)?;
    let params = tuning.refit_params();
    let enc = fit_encoder(view, family.encode_mode(), reference_date)?;
    let m = transform(&enc, view)?;
    let data = FitData { train: &m, labels: &view.labels, valid: None };
    let mut model = fit(family, &params, data, derive_seed(settings.seed, &[tag::FIT]))?;
    let train_scores = cross_fit_scores(view, family, &params, reference_date, settings.seed)?;
    model.threshold = Some(select_threshold_max_f1(&train_scores, &view.labels)?);
    model.encoder = Some(enc);
    Ok((model, tuning, train_scores))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{FeatureSet, Value};
    use rand::SeedableRng;

    fn x_space() -> SearchSpace {
        SearchSpace { params: vec![("x".into(), Domain::Float { lo: 0.0, hi: 1.0, log: false })] }
    }

    fn trial(index: usize, a: Assignment, auc: f64) -> Trial {
        Trial { index, assignment: a, auc, best_iteration: None }
    }

    #[test]
    fn cold_start_draws_inside_bounds() {
        let space = SearchSpace {
            params: vec![
                ("lr".into(), Domain::Float { lo: 0.01, hi: 0.3, log: true }),
                ("d".into(), Domain::Int { lo: 4, hi: 10 }),
                ("c".into(), Domain::Cat { choices: vec!["a".into(), "b".into()] }),
            ],
        };
        let mut rng = substream(1, &[0]);
        for _ in 0..200 {
            assert!(space.contains(&tpe_suggest(&[], &space, &mut rng)));
        }
    }

    #[test]
    fn tpe_concentrates_near_the_optimum() {
        let mut hits = 0;
        for run in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(run);
            let history: Vec<Trial> = (0..40)
                .map(|i| {
                    let x: f64 = rng.random();
                    let a = Assignment::from([("x".to_string(), ParamValue::Float(x))]);
                    trial(i, a, 1.0 - (x - 0.3).powi(2))
                })
                .collect();
            let mut srng = substream(run, &[tag::TUNE]);
            let s = tpe_suggest(&history, &x_space(), &mut srng);
            let x = s["x"].as_f64().unwrap();
            if (0.15..=0.45).contains(&x) {
                hits += 1;
            }
        }
        assert!(hits >= 90, "hits {hits}");
    }

    #[test]
    fn tpe_prefers_the_better_category() {
        let space = SearchSpace { params: vec![("c".into(), Domain::Cat { choices: vec!["good".into(), "bad".into()] })] };
        let mut hits = 0;
        for run in 0..100u64 {
            let history: Vec<Trial> = (0..20)
                .map(|i| {
                    let c = if i % 2 == 0 { "good" } else { "bad" };
                    let auc = if c == "good" { 0.8 } else { 0.6 } + 0.001 * i as f64;
                    trial(i, Assignment::from([("c".to_string(), ParamValue::Cat(c.into()))]), auc)
                })
                .collect();
            let mut rng = substream(run, &[tag::TUNE]);
            if tpe_suggest(&history, &space, &mut rng)["c"] == ParamValue::Cat("good".into()) {
                hits += 1;
            }
        }
        assert!(hits >= 80);
    }

    fn toy_view(n: usize) -> FeatureView {
        let fs = FeatureSet::custom("t", &["age", "monthly_income"]).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let a = (i * 37 % 101) as f64;
            let b = (i * 53 % 97) as f64;
            labels.push(u8::from(a > 60.0 && b > 30.0 || (i % 17 == 0)));
            rows.push(vec![Value::Num(a), Value::Num(b)]);
        }
        FeatureView { feature_set: fs, rows, labels }
    }

    fn date() -> chrono::NaiveDate {
        chrono::NaiveDate::from_ymd_opt(2025, 3, 31).unwrap()
    }

    #[test]
    fn single_trial_returns_its_assignment() {
        let view = toy_view(200);
        let settings = TuneSettings { n_trials: 1, seed: 3, ..TuneSettings::default() };
        let mut space = SearchSpace::for_family(Family::GbdtXgb);
        space.params.truncate(2);
        let r = nested_tune(&view, Family::GbdtXgb, &space, date(), &settings).unwrap();
        assert_eq!(r.trials.len(), 1);
        assert_eq!(r.best, r.trials[0].assignment);
        let again = nested_tune(&view, Family::GbdtXgb, &space, date(), &settings).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn grid_prefers_the_deeper_tree_when_needed() {
        // The positive region needs two nested cuts on each feature.
        let view = toy_view(600);
        let settings = TuneSettings { n_trials: 1, seed: 5, ..TuneSettings::default() };
        let grid = vec![
            Assignment::from([("max_depth".to_string(), ParamValue::Int(1))]),
            Assignment::from([("max_depth".to_string(), ParamValue::Int(8))]),
        ];
        let r = grid_search(&view, Family::DecisionTree, &grid, date(), &settings).unwrap();
        assert_eq!(r.best_index, 1);
    }

    #[test]
    fn grid_ties_go_to_the_first_entry() {
        let view = toy_view(300);
        let settings = TuneSettings { n_trials: 1, seed: 5, ..TuneSettings::default() };
        let a = Assignment::from([("max_depth".to_string(), ParamValue::Int(6))]);
        let r = grid_search(&view, Family::DecisionTree, &[a.clone(), a], date(), &settings).unwrap();
        assert_eq!(r.best_index, 0);
        let single = grid_search(&view, Family::DecisionTree, &default_grid(Family::DecisionTree)[..1], date(), &settings).unwrap();
        assert_eq!(single.best, default_grid(Family::DecisionTree)[0]);
    }

    #[test]
    fn refit_uses_the_selected_round_count() {
        let view = toy_view(400);
        let settings = TuneSettings { n_trials: 3, seed: 2, ..TuneSettings::default() };
        let (model, tuning, scores) = tune_and_refit(&view, Family::GbdtXgb, date(), &settings).unwrap();
        let it = tuning.best_trial().best_iteration.unwrap();
        assert_eq!(model.rounds_trained, it.max(1));
        assert_eq!(scores.len(), 400);
        assert!(model.threshold.is_some());
        assert!(scores.iter().all(|s| s.is_finite()));
        let again = cross_fit_scores(&view, Family::GbdtXgb, &tuning.refit_params(), date(), 2).unwrap();
        assert_eq!(again, scores);
    }

    #[test]
    fn unknown_hyperparameter_is_rejected() {
        let a = Assignment::from([("depth".to_string(), ParamValue::Int(3))]);
        assert!(apply_assignment(&Family::DecisionTree.default_params(), &a).is_err());
    }
}
