//! Diverse counterfactuals and flip-frequency attribution.
//!
//! A counterfactual set is searched genetically: each individual is a set of
//! `k` edited copies of the record, scored by a hinge on the logit margin,
//! a MAD-normalised proximity, a diversity bonus and a sparsity penalty.
//! Valid candidates are then sparsified by reverting edits that are not
//! needed to keep the flip.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Column, ColumnKind, FeatureSet, FeatureView, Value};
use crate::error::{Error, Result};
use crate::models::TrainedModel;
use crate::rng::{substream, tag, RandomStream};

/// Something that maps feature rows to delinquency probabilities and rejects
/// iff the probability exceeds its threshold.
pub trait Scorer: Sync {
    fn feature_set(&self) -> &FeatureSet;
    fn threshold(&self) -> f64;
    fn score(&self, rows: &[Vec<Value>]) -> Result<Vec<f64>>;
}

impl Scorer for TrainedModel {
    fn feature_set(&self) -> &FeatureSet {
        &self.encoder.as_ref().expect("explained models carry an encoder").feature_set
    }

    fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(0.5)
    }

    fn score(&self, rows: &[Vec<Value>]) -> Result<Vec<f64>> {
        let enc = self
            .encoder
            .as_ref()
            .ok_or_else(|| Error::Mismatch("model has no embedded encoder".into()))?;
        self.predict_proba(&enc.transform_rows(rows)?)
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

fn predicted(score: f64, threshold: f64) -> u8 {
    u8::from(score > threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureDomain {
    Numeric { min: f64, max: f64, mad: f64, integral: bool, grid: Vec<f64> },
    Date { min: NaiveDate, max: NaiveDate, mad_days: f64, grid: Vec<NaiveDate> },
    Categorical { values: Vec<String> },
    Boolean,
}

/// Per-column ranges, scales and candidate grids observed in training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDomains {
    pub columns: Vec<Column>,
    pub domains: Vec<FeatureDomain>,
}

pub const GRID_POINTS: usize = 21;

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median absolute deviation, falling back to the standard deviation and then 1.
fn robust_scale(sorted: &[f64]) -> f64 {
    let med = median_sorted(sorted);
    let mut dev: Vec<f64> = sorted.iter().map(|v| (v - med).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = median_sorted(&dev);
    if mad > 0.0 {
        return mad;
    }
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let sd = (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

/// Whole units for integral columns, cents for amounts.
fn snap(x: f64, integral: bool) -> f64 {
    if integral { x.round() } else { (x * 100.0).round() / 100.0 }
}

fn quantile_grid(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    let mut g: Vec<f64> = (0..GRID_POINTS)
        .map(|i| {
            let pos = i as f64 / (GRID_POINTS - 1) as f64 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect();
    g.dedup();
    g
}

fn days(d: NaiveDate) -> f64 {
    f64::from(d.num_days_from_ce())
}

fn from_days(x: f64) -> NaiveDate {
    NaiveDate::from_num_days_from_ce_opt(x.round() as i32).expect("date in range")
}

impl FeatureDomains {
    pub fn fit(view: &FeatureView) -> Result<FeatureDomains> {
        if view.rows.is_empty() {
            return Err(Error::invalid("cannot derive feature domains from no rows"));
        }
        let columns = view.feature_set.columns.clone();
        let home = columns.iter().position(|&c| c == Column::OwnsHome);
        let mut domains = Vec::with_capacity(columns.len());
        for (j, &c) in columns.iter().enumerate() {
            let d = match c.kind() {
                ColumnKind::Numeric => {
                    // Rent ranges come from renters only.
                    let renter = |r: &Vec<Value>| c != Column::MonthlyRent || home.is_none_or(|h| r[h] != Value::Bool(true));
                    let mut v: Vec<f64> = view.rows.iter().filter(|r| renter(r)).filter_map(|r| r[j].as_num()).collect();
                    if v.is_empty() {
                        v = view.rows.iter().filter_map(|r| r[j].as_num()).collect();
                    }
                    v.sort_by(f64::total_cmp);
                    let integral = v.iter().all(|x| x.fract() == 0.0);
                    let mut grid = quantile_grid(&v);
                    grid.iter_mut().for_each(|x| *x = snap(*x, integral));
                    grid.dedup();
                    FeatureDomain::Numeric { min: v[0], max: v[v.len() - 1], mad: robust_scale(&v), integral, grid }
                }
                ColumnKind::Date => {
                    let mut v: Vec<f64> = view
                        .rows
                        .iter()
                        .filter_map(|r| match r[j] {
                            Value::Date(Some(d)) => Some(days(d)),
                            _ => None,
                        })
                        .collect();
                    if v.is_empty() {
                        v.push(0.0);
                    }
                    v.sort_by(f64::total_cmp);
                    let mut grid: Vec<NaiveDate> = quantile_grid(&v).into_iter().map(from_days).collect();
                    grid.dedup();
                    FeatureDomain::Date {
                        min: from_days(v[0]),
                        max: from_days(v[v.len() - 1]),
                        mad_days: robust_scale(&v),
                        grid,
                    }
                }
                ColumnKind::Categorical => {
                    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                    for r in &view.rows {
                        if let Value::Cat(s) = &r[j] {
                            if !s.is_empty() {
                                *counts.entry(s.clone()).or_default() += 1;
                            }
                        }
                    }
                    let mut values: Vec<(String, usize)> = counts.into_iter().collect();
                    values.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                    FeatureDomain::Categorical { values: values.into_iter().map(|v| v.0).collect() }
                }
                ColumnKind::Boolean => FeatureDomain::Boolean,
            };
            domains.push(d);
        }
        Ok(FeatureDomains { columns, domains })
    }

    fn position(&self, c: Column) -> Option<usize> {
        self.columns.iter().position(|&x| x == c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub validity: f64,
    pub proximity: f64,
    pub diversity: f64,
    pub sparsity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { validity: 2.0, proximity: 0.5, diversity: 0.5, sparsity: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfConfig {
    pub k: usize,
    pub mutable: Vec<Column>,
    pub weights: LossWeights,
    pub population: usize,
    pub generations: usize,
    /// Logit margin added to the hinge so candidates do not sit on the threshold.
    pub hinge_margin: f64,
    pub seed: u64,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            k: 4,
            mutable: FeatureSet::ALTERNATIVE.to_vec(),
            weights: LossWeights::default(),
            population: 50,
            generations: 100,
            hinge_margin: 0.1,
            seed: 0,
        }
    }
}

impl CfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.population < 2 {
            return Err(Error::Config("counterfactual search needs k >= 1 and population >= 2".into()));
        }
        let w = &self.weights;
        if [w.validity, w.proximity, w.diversity, w.sparsity].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if let Some(c) = self.mutable.iter().find(|c| FeatureSet::DEMOGRAPHIC.contains(c)) {
            return Err(Error::Config(format!("`{c}` is immutable")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub values: Vec<Value>,
    pub changed: Vec<Column>,
    pub score: f64,
    pub valid: bool,
    pub proximity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSet {
    pub record_id: u64,
    pub columns: Vec<Column>,
    pub original: Vec<Value>,
    pub original_score: f64,
    pub threshold: f64,
    pub candidates: Vec<Candidate>,
    /// The record already had the desired prediction.
    pub trivially_satisfied: bool,
    /// The search found no valid candidate.
    pub exhausted: bool,
}

impl CounterfactualSet {
    pub fn valid_candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.valid)
    }
}

/// Positions of the columns with coupled edits.
struct Layout {
    owns_car: Option<usize>,
    brand: Option<usize>,
    car_date: Option<usize>,
    owns_home: Option<usize>,
    rent: Option<usize>,
}

struct Search<'a> {
    domains: &'a FeatureDomains,
    original: &'a [Value],
    mutable: Vec<usize>,
    layout: Layout,
    cfg: &'a CfConfig,
}

fn value_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Num(x), Value::Num(y)) => (x - y).abs() <= 1e-9 * x.abs().max(1.0),
        _ => a == b,
    }
}

impl<'a> Search<'a> {
    fn new(domains: &'a FeatureDomains, original: &'a [Value], cfg: &'a CfConfig) -> Self {
        let mutable = cfg.mutable.iter().filter_map(|&c| domains.position(c)).collect();
        let layout = Layout {
            owns_car: domains.position(Column::OwnsCar),
            brand: domains.position(Column::CarBrand),
            car_date: domains.position(Column::CarPurchaseDate),
            owns_home: domains.position(Column::OwnsHome),
            rent: domains.position(Column::MonthlyRent),
        };
        Search { domains, original, mutable, layout, cfg }
    }

    fn owns_car(&self, row: &[Value]) -> bool {
        match self.layout.owns_car.map(|p| &row[p]) {
            Some(Value::Bool(b)) => *b,
            // Without the flag, a non-empty brand signals ownership.
            _ => matches!(self.layout.brand.map(|p| &row[p]), Some(Value::Cat(s)) if !s.is_empty()),
        }
    }

    fn is_renter(&self, row: &[Value]) -> bool {
        !matches!(self.layout.owns_home.map(|p| &row[p]), Some(Value::Bool(true)))
    }

    /// Columns that may be edited on `row`.
    fn editable(&self, row: &[Value]) -> Vec<usize> {
        self.mutable
            .iter()
            .copied()
            .filter(|&j| {
                if Some(j) == self.layout.brand || Some(j) == self.layout.car_date {
                    self.owns_car(row)
                } else if Some(j) == self.layout.rent {
                    self.is_renter(row)
                } else {
                    true
                }
            })
            .collect()
    }

    fn random_value(&self, j: usize, current: &Value, rng: &mut RandomStream) -> Value {
        match &self.domains.domains[j] {
            FeatureDomain::Numeric { min, max, integral, grid, .. } => {
                let mut x = if rng.random_bool(0.5) || min == max {
                    *grid.choose(rng).expect("non-empty grid")
                } else {
                    rng.random_range(*min..=*max)
                };
                x = snap(x, *integral);
                Value::Num(x.clamp(*min, *max))
            }
            FeatureDomain::Date { grid, .. } => Value::Date(Some(*grid.choose(rng).expect("non-empty grid"))),
            FeatureDomain::Categorical { values } => match values.choose(rng) {
                Some(v) => Value::Cat(v.clone()),
                None => current.clone(),
            },
            FeatureDomain::Boolean => match current {
                Value::Bool(b) => Value::Bool(!b),
                other => other.clone(),
            },
        }
    }

    /// Writes `value` at `j` and repairs the coupled car columns.
    fn set(&self, row: &mut [Value], j: usize, value: Value, rng: &mut RandomStream) {
        row[j] = value;
        if Some(j) != self.layout.owns_car {
            return;
        }
        let owns = matches!(row[j], Value::Bool(true));
        if let Some(b) = self.layout.brand {
            row[b] = if owns {
                if matches!(&self.original[b], Value::Cat(s) if !s.is_empty()) {
                    self.original[b].clone()
                } else {
                    self.random_value(b, &row[b].clone(), rng)
                }
            } else {
                Value::Cat(String::new())
            };
        }
        if let Some(d) = self.layout.car_date {
            row[d] = if owns {
                if matches!(self.original[d], Value::Date(Some(_))) {
                    self.original[d].clone()
                } else {
                    self.random_value(d, &row[d].clone(), rng)
                }
            } else {
                Value::Date(None)
            };
        }
    }

    fn mutate(&self, row: &mut [Value], rng: &mut RandomStream) {
        let editable = self.editable(row);
        let Some(&j) = editable.choose(rng) else { return };
        if rng.random_bool(0.25) {
            self.revert(row, j);
        } else {
            let v = self.random_value(j, &row[j], rng);
            self.set(row, j, v, rng);
        }
    }

    /// Restores column `j` (and its coupled columns) to the original value.
    fn revert(&self, row: &mut [Value], j: usize) {
        let car = [self.layout.owns_car, self.layout.brand, self.layout.car_date];
        if car.contains(&Some(j)) {
            for p in car.into_iter().flatten() {
                row[p] = self.original[p].clone();
            }
        } else {
            row[j] = self.original[j].clone();
        }
    }

    fn changed(&self, row: &[Value]) -> Vec<usize> {
        (0..row.len()).filter(|&j| !value_eq(&row[j], &self.original[j])).collect()
    }

    fn column_distance(&self, j: usize, a: &Value, b: &Value) -> f64 {
        match (&self.domains.domains[j], a, b) {
            (FeatureDomain::Numeric { mad, .. }, Value::Num(x), Value::Num(y)) => (x - y).abs() / mad,
            (FeatureDomain::Date { mad_days, .. }, Value::Date(Some(x)), Value::Date(Some(y))) => {
                (days(*x) - days(*y)).abs() / mad_days
            }
            _ => f64::from(u8::from(!value_eq(a, b))),
        }
    }

    /// Mean per-column distance over the mutable columns.
    fn distance(&self, a: &[Value], b: &[Value]) -> f64 {
        if self.mutable.is_empty() {
            return 0.0;
        }
        self.mutable.iter().map(|&j| self.column_distance(j, &a[j], &b[j])).sum::<f64>() / self.mutable.len() as f64
    }

    /// Hinge on the logit distance to the threshold.
    fn hinge(&self, score: f64, threshold: f64, desired: u8) -> f64 {
        let m = self.cfg.hinge_margin;
        let gap = logit(score) - logit(threshold);
        if desired == 0 {
            (gap + m).max(0.0)
        } else {
            (m - gap).max(0.0)
        }
    }

    fn set_loss(&self, set: &[Vec<Value>], scores: &[f64], threshold: f64, desired: u8) -> f64 {
        let w = &self.cfg.weights;
        let k = set.len() as f64;
        let mut loss = 0.0;
        for (row, &s) in set.iter().zip(scores) {
            loss += w.validity * self.hinge(s, threshold, desired) / k;
            loss += w.proximity * self.distance(row, self.original) / k;
            loss += w.sparsity * self.changed(row).len() as f64 / k;
        }
        if set.len() > 1 {
            let mut div = 0.0;
            let mut pairs = 0.0;
            for a in 0..set.len() {
                for b in a + 1..set.len() {
                    div += self.distance(&set[a], &set[b]);
                    pairs += 1.0;
                }
            }
            loss -= w.diversity * div / pairs;
        }
        loss
    }
}

fn tournament(losses: &[f64], rng: &mut RandomStream) -> usize {
    let mut best = rng.random_range(0..losses.len());
    for _ in 0..2 {
        let c = rng.random_range(0..losses.len());
        if losses[c] < losses[best] {
            best = c;
        }
    }
    best
}

/// Genetic counterfactual search for one record.
pub fn generate_counterfactuals(
    scorer: &dyn Scorer,
    domains: &FeatureDomains,
    record_id: u64,
    row: &[Value],
    cfg: &CfConfig,
) -> Result<CounterfactualSet> {
    cfg.validate()?;
    if domains.columns != scorer.feature_set().columns || row.len() != domains.columns.len() {
        return Err(Error::Mismatch("record, domains and model use different feature sets".into()));
    }
    let threshold = scorer.threshold();
    let original_score = scorer.score(&[row.to_vec()])?[0];
    let desired = 1 - predicted(original_score, threshold);
    let mut out = CounterfactualSet {
        record_id,
        columns: domains.columns.clone(),
        original: row.to_vec(),
        original_score,
        threshold,
        candidates: vec![],
        trivially_satisfied: desired == 1,
        exhausted: false,
    };
    if out.trivially_satisfied {
        return Ok(out);
    }
    let search = Search::new(domains, row, cfg);
    let mut rng = substream(cfg.seed, &[tag::EXPLAIN, record_id]);
    let k = cfg.k;

    let mut pop: Vec<Vec<Vec<Value>>> = (0..cfg.population)
        .map(|_| {
            (0..k)
                .map(|_| {
                    let mut c = row.to_vec();
                    for _ in 0..rng.random_range(1..=2) {
                        search.mutate(&mut c, &mut rng);
                    }
                    c
                })
                .collect()
        })
        .collect();
    let evaluate = |pop: &[Vec<Vec<Value>>]| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let flat: Vec<Vec<Value>> = pop.iter().flatten().cloned().collect();
        let scores = scorer.score(&flat)?;
        let per: Vec<Vec<f64>> = scores.chunks(k).map(<[f64]>::to_vec).collect();
        let losses = pop.iter().zip(&per).map(|(s, sc)| search.set_loss(s, sc, threshold, desired)).collect();
        Ok((losses, per))
    };
    let (mut losses, mut scores) = evaluate(&pop)?;
    for _ in 0..cfg.generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));
        let mut next: Vec<Vec<Vec<Value>>> = order.iter().take(2).map(|&i| pop[i].clone()).collect();
        while next.len() < cfg.population {
            let a = &pop[tournament(&losses, &mut rng)];
            let b = &pop[tournament(&losses, &mut rng)];
            let mut child: Vec<Vec<Value>> =
                (0..k).map(|s| if rng.random_bool(0.5) { a[s].clone() } else { b[s].clone() }).collect();
            for cand in &mut child {
                if rng.random_bool(0.3) {
                    search.mutate(cand, &mut rng);
                }
            }
            next.push(child);
        }
        pop = next;
        (losses, scores) = evaluate(&pop)?;
    }
    let best = (0..pop.len()).min_by(|&a, &b| losses[a].total_cmp(&losses[b])).expect("non-empty population");

    // Sparsify: drop edits that are not needed to keep the flip.
    let mut finals: Vec<(Vec<Value>, f64)> = Vec::new();
    for (cand, &s) in pop[best].iter().zip(&scores[best]) {
        let mut cand = cand.clone();
        let mut s = s;
        if predicted(s, threshold) == desired {
            for j in search.changed(&cand) {
                if value_eq(&cand[j], &row[j]) {
                    continue;
                }
                let mut trial = cand.clone();
                search.revert(&mut trial, j);
                let ts = scorer.score(std::slice::from_ref(&trial))?[0];
                if predicted(ts, threshold) == desired {
                    cand = trial;
                    s = ts;
                }
            }
        }
        if !search.changed(&cand).is_empty() && !finals.iter().any(|(f, _)| f == &cand) {
            finals.push((cand, s));
        }
    }
    out.candidates = finals
        .into_iter()
        .map(|(values, score)| Candidate {
            changed: search.changed(&values).into_iter().map(|j| domains.columns[j]).collect(),
            proximity: search.distance(&values, row),
            valid: predicted(score, threshold) == desired,
            score,
            values,
        })
        .collect();
    if !out.candidates.iter().any(|c| c.valid) {
        out.candidates.clear();
        out.exhausted = true;
    }
    Ok(out)
}

/// Counterfactual sets for many records, in parallel.
pub fn explain_records(
    scorer: &dyn Scorer,
    domains: &FeatureDomains,
    records: &[(u64, Vec<Value>)],
    cfg: &CfConfig,
) -> Result<Vec<CounterfactualSet>> {
    records
        .par_iter()
        .map(|(id, row)| generate_counterfactuals(scorer, domains, *id, row, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipProfile {
    pub n_sets: usize,
    pub n_valid_candidates: usize,
    /// Valid candidates editing each feature.
    pub counts: BTreeMap<String, usize>,
    /// Share of valid candidates editing each feature.
    pub shares: BTreeMap<String, f64>,
    /// Share of valid candidates editing exactly one feature.
    pub single_edit_share: f64,
}

/// How often each feature appears in valid edits.
pub fn flip_frequency(sets: &[CounterfactualSet]) -> Result<FlipProfile> {
    let n_valid: usize = sets.iter().map(|s| s.valid_candidates().count()).sum();
    if n_valid == 0 {
        return Err(Error::invalid("no valid counterfactual candidates to tally"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in sets {
        for c in &s.columns {
            counts.entry(c.name().to_string()).or_default();
        }
    }
    let mut single = 0usize;
    for c in sets.iter().flat_map(|s| s.valid_candidates()) {
        for col in &c.changed {
            *counts.entry(col.name().to_string()).or_default() += 1;
        }
        single += usize::from(c.changed.len() == 1);
    }
    let shares = counts.iter().map(|(k, &v)| (k.clone(), v as f64 / n_valid as f64)).collect();
    Ok(FlipProfile {
        n_sets: sets.len(),
        n_valid_candidates: n_valid,
        counts,
        shares,
        single_edit_share: single as f64 / n_valid as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleEditReport {
    /// Records with the undesired (rejected) prediction.
    pub n_rejected: usize,
    pub n_flippable: usize,
    pub rate: f64,
    /// Flippable records per feature that achieves the flip on its own.
    pub by_feature: BTreeMap<String, usize>,
}

/// Fraction of rejected records that one edit of one mutable feature turns
/// into approvals, scanning every grid value of every editable feature.
/// Records already approved are not counted.
pub fn single_edit_flip_rate(
    scorer: &dyn Scorer,
    domains: &FeatureDomains,
    rows: &[Vec<Value>],
    cfg: &CfConfig,
) -> Result<SingleEditReport> {
    cfg.validate()?;
    if domains.columns != scorer.feature_set().columns {
        return Err(Error::Mismatch("domains and model use different feature sets".into()));
    }
    let threshold = scorer.threshold();
    let base = scorer.score(rows)?;
    let per_row: Vec<Option<Vec<Column>>> = rows
        .par_iter()
        .zip(&base)
        .map(|(row, &s)| {
            if predicted(s, threshold) == 0 {
                return Ok(None);
            }
            let search = Search::new(domains, row, cfg);
            let mut rng = substream(cfg.seed, &[tag::EXPLAIN, u64::MAX]);
            let mut edits: Vec<(usize, Vec<Value>)> = Vec::new();
            for j in search.editable(row) {
                let values: Vec<Value> = match &domains.domains[j] {
                    FeatureDomain::Numeric { grid, .. } => grid.iter().map(|&x| Value::Num(x)).collect(),
                    FeatureDomain::Date { grid, .. } => grid.iter().map(|&d| Value::Date(Some(d))).collect(),
                    FeatureDomain::Categorical { values } => values.iter().map(|v| Value::Cat(v.clone())).collect(),
                    FeatureDomain::Boolean => match &row[j] {
                        Value::Bool(b) => vec![Value::Bool(!b)],
                        _ => vec![],
                    },
                };
                for v in values {
                    if value_eq(&v, &row[j]) {
                        continue;
                    }
                    let mut c = row.clone();
                    search.set(&mut c, j, v, &mut rng);
                    edits.push((j, c));
                }
            }
            let cands: Vec<Vec<Value>> = edits.iter().map(|e| e.1.clone()).collect();
            let scores = if cands.is_empty() { vec![] } else { scorer.score(&cands)? };
            let mut flipping: Vec<Column> = edits
                .iter()
                .zip(&scores)
                .filter(|(_, &sc)| predicted(sc, threshold) == 0)
                .map(|((j, _), _)| domains.columns[*j])
                .collect();
            flipping.dedup();
            Ok(Some(flipping))
        })
        .collect::<Result<_>>()?;
    let mut by_feature: BTreeMap<String, usize> = BTreeMap::new();
    let (mut n_rejected, mut n_flippable) = (0, 0);
    for f in per_row.into_iter().flatten() {
        n_rejected += 1;
        if !f.is_empty() {
            n_flippable += 1;
        }
        for c in f {
            *by_feature.entry(c.name().to_string()).or_default() += 1;
        }
    }
    let rate = if n_rejected == 0 { 0.0 } else { n_flippable as f64 / n_rejected as f64 };
    Ok(SingleEditReport { n_rejected, n_flippable, rate, by_feature })
}

/// Plain-text rendering of a counterfactual set.
pub fn render_text(set: &CounterfactualSet) -> String {
    use std::fmt::Write as _;
    let mut s = format!(
        "record {}: p = {:.4} (threshold {:.4})\n",
        set.record_id, set.original_score, set.threshold
    );
    if set.trivially_satisfied {
        s.push_str("  already approved\n");
        return s;
    }
    if set.exhausted {
        s.push_str("  no counterfactual found\n");
        return s;
    }
    for (i, c) in set.candidates.iter().enumerate() {
        let _ = writeln!(s, "  #{} p = {:.4} {}", i + 1, c.score, if c.valid { "valid" } else { "invalid" });
        for col in &c.changed {
            let j = set.columns.iter().position(|x| x == col).expect("changed column is in the set");
            let _ = writeln!(s, "     {}: {} -> {}", col, show(&set.original[j]), show(&c.values[j]));
        }
    }
    s
}

fn show(v: &Value) -> String {
    match v {
        Value::Num(x) => format!("{x}"),
        Value::Bool(b) => b.to_string(),
        Value::Date(Some(d)) => d.to_string(),
        Value::Date(None) => "-".into(),
        Value::Cat(c) if c.is_empty() => "-".into(),
        Value::Cat(c) => c.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rejects iff monthly_subscriptions < 5.
    struct Boundary {
        fs: FeatureSet,
    }

    impl Scorer for Boundary {
        fn feature_set(&self) -> &FeatureSet {
            &self.fs
        }
        fn threshold(&self) -> f64 {
            0.5
        }
        fn score(&self, rows: &[Vec<Value>]) -> Result<Vec<f64>> {
            Ok(rows.iter().map(|r| if r[1].as_num().unwrap() > 5.0 { 0.2 } else { 0.8 }).collect())
        }
    }

    struct Constant(FeatureSet);

    impl Scorer for Constant {
        fn feature_set(&self) -> &FeatureSet {
            &self.0
        }
        fn threshold(&self) -> f64 {
            0.5
        }
        fn score(&self, rows: &[Vec<Value>]) -> Result<Vec<f64>> {
            Ok(vec![0.9; rows.len()])
        }
    }

    fn toy() -> (Boundary, FeatureDomains, FeatureView) {
        let fs = FeatureSet::custom("toy", &["age", "monthly_subscriptions", "social_media_active"]).unwrap();
        let rows: Vec<Vec<Value>> = (0..100)
            .map(|i| vec![Value::Num(20.0 + f64::from(i % 40)), Value::Num(f64::from(i) / 10.0), Value::Bool(i % 2 == 0)])
            .collect();
        let view = FeatureView { feature_set: fs.clone(), labels: vec![0; rows.len()], rows };
        let domains = FeatureDomains::fit(&view).unwrap();
        (Boundary { fs }, domains, view)
    }

    fn cfg(k: usize) -> CfConfig {
        CfConfig { k, population: 20, generations: 30, seed: 3, ..CfConfig::default() }
    }

    fn rec() -> Vec<Value> {
        vec![Value::Num(30.0), Value::Num(4.0), Value::Bool(true)]
    }

    #[test]
    fn boundary_model_needs_one_edit() {
        let (m, d, _) = toy();
        let set = generate_counterfactuals(&m, &d, 1, &rec(), &cfg(1)).unwrap();
        assert!(!set.exhausted);
        let c = &set.candidates[0];
        assert!(c.valid);
        assert_eq!(c.changed, vec![Column::MonthlySubscriptions]);
        assert!(c.values[1].as_num().unwrap() > 5.0);
        assert!(c.values[1].as_num().unwrap() <= 9.9);
    }

    #[test]
    fn two_candidates_are_distinct() {
        let (m, d, _) = toy();
        let set = generate_counterfactuals(&m, &d, 2, &rec(), &cfg(2)).unwrap();
        let valid: Vec<&Candidate> = set.valid_candidates().collect();
        assert_eq!(valid.len(), 2);
        assert_ne!(valid[0].values[1], valid[1].values[1]);
        assert!(valid.iter().all(|c| c.changed == vec![Column::MonthlySubscriptions]));
    }

    #[test]
    fn approved_record_is_trivially_satisfied() {
        let (m, d, _) = toy();
        let mut r = rec();
        r[1] = Value::Num(8.0);
        let set = generate_counterfactuals(&m, &d, 3, &r, &cfg(2)).unwrap();
        assert!(set.trivially_satisfied && set.candidates.is_empty());
    }

    #[test]
    fn search_is_deterministic_and_never_edits_age() {
        let (m, d, _) = toy();
        let a = generate_counterfactuals(&m, &d, 4, &rec(), &cfg(3)).unwrap();
        let b = generate_counterfactuals(&m, &d, 4, &rec(), &cfg(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.candidates.iter().all(|c| !c.changed.contains(&Column::Age) && c.values[0] == rec()[0]));
    }

    #[test]
    fn constant_model_is_exhausted_and_never_single_flips() {
        let (m, d, view) = toy();
        let c = Constant(m.fs.clone());
        let set = generate_counterfactuals(&c, &d, 5, &rec(), &cfg(2)).unwrap();
        assert!(set.exhausted && set.candidates.is_empty());
        assert_eq!(single_edit_flip_rate(&c, &d, &view.rows, &cfg(2)).unwrap().rate, 0.0);
    }

    #[test]
    fn boundary_model_single_flip_rate_is_one() {
        let (m, d, view) = toy();
        let r = single_edit_flip_rate(&m, &d, &view.rows, &cfg(1)).unwrap();
        assert_eq!(r.n_rejected, 51);
        assert_eq!(r.rate, 1.0);
        assert_eq!(r.by_feature["monthly_subscriptions"], 51);
    }

    #[test]
    fn demographic_columns_cannot_be_mutable() {
        let c = CfConfig { mutable: vec![Column::Age], ..CfConfig::default() };
        assert!(c.validate().is_err());
    }

    fn set_with(edits: &[&[Column]]) -> CounterfactualSet {
        let columns = vec![Column::Age, Column::MonthlySubscriptions, Column::OwnsCreditCard];
        CounterfactualSet {
            record_id: 0,
            columns,
            original: vec![],
            original_score: 0.9,
            threshold: 0.5,
            candidates: edits
                .iter()
                .map(|e| Candidate { values: vec![], changed: e.to_vec(), score: 0.1, valid: true, proximity: 0.0 })
                .collect(),
            trivially_satisfied: false,
            exhausted: false,
        }
    }

    #[test]
    fn flip_frequency_tallies_valid_edits() {
        use Column::*;
        let mut a = set_with(&[&[MonthlySubscriptions], &[MonthlySubscriptions, OwnsCreditCard]]);
        a.candidates.push(Candidate { values: vec![], changed: vec![OwnsCreditCard], score: 0.9, valid: false, proximity: 0.0 });
        let b = set_with(&[&[OwnsCreditCard]]);
        let p = flip_frequency(&[a, b]).unwrap();
        assert_eq!(p.n_valid_candidates, 3);
        assert_eq!(p.counts["monthly_subscriptions"], 2);
        assert_eq!(p.counts["owns_credit_card"], 2);
        assert_eq!(p.counts["age"], 0);
        assert!((p.single_edit_share - 2.0 / 3.0).abs() < 1e-12);
        let only = flip_frequency(&[set_with(&[&[MonthlySubscriptions], &[MonthlySubscriptions]])]).unwrap();
        assert_eq!(only.shares["monthly_subscriptions"], 1.0);
        assert_eq!(only.shares["owns_credit_card"], 0.0);
        assert!(flip_frequency(&[set_with(&[])]).is_err());
    }

    #[test]
    fn car_and_rent_edits_stay_coupled() {
        use crate::dataio::{feature_view, sample_record, Dataset};
        let mut rows = Vec::new();
        for i in 0..40u64 {
            let mut r = sample_record(i + 1);
            if i % 2 == 0 {
                r.owns_car = false;
                r.car_brand = None;
                r.car_purchase_date = None;
            }
            r.monthly_subscriptions = i as f64 * 10.0;
            rows.push(r);
        }
        let ds = Dataset::new(rows, None).unwrap();
        let view = feature_view(&ds, &FeatureSet::full()).unwrap();
        let domains = FeatureDomains::fit(&view).unwrap();
        let cfg = CfConfig::default();
        let search = Search::new(&domains, &view.rows[0], &cfg);
        let mut rng = substream(1, &[0]);
        for _ in 0..300 {
            let mut c = view.rows[0].clone();
            for _ in 0..3 {
                search.mutate(&mut c, &mut rng);
            }
            let owns = search.owns_car(&c);
            let b = domains.position(Column::CarBrand).unwrap();
            let d = domains.position(Column::CarPurchaseDate).unwrap();
            assert_eq!(owns, matches!(&c[b], Value::Cat(s) if !s.is_empty()));
            assert_eq!(owns, matches!(c[d], Value::Date(Some(_))));
            for &col in &FeatureSet::DEMOGRAPHIC {
                let j = domains.position(col).unwrap();
                assert_eq!(c[j], view.rows[0][j]);
            }
        }
    }
}
