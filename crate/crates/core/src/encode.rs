//! Numeric encoding of feature views.
//!
//! Two modes share one fitted state. `Linear` one-hot encodes categoricals
//! (plus an unseen bucket) and standardises numerics; `Tree` keeps raw
//! numerics and maps categories to integer codes ordered by training
//! frequency, with the unseen bucket last. Dates become whole-month ages
//! relative to the reference date; a missing car date becomes -1.

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    whole_months_between, Column, ColumnKind, FeatureSet, FeatureView, Record, Value,
};
use crate::error::{Error, Result};

/// Sentinel age for an absent date.
pub const MISSING_AGE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeMode {
    Linear,
    Tree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnEncoder {
    Numeric { mean: f64, std: f64 },
    Boolean,
    Date { mean: f64, std: f64 },
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub mode: EncodeMode,
    pub reference_date: NaiveDate,
    pub feature_set: FeatureSet,
    pub columns: Vec<ColumnEncoder>,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major values.
    pub values: Vec<f64>,
    pub column_names: Vec<String>,
    pub feature_set: String,
    pub bin_edges: Option<Vec<Vec<f64>>>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// Builds a matrix from rows of equal width.
    pub fn from_rows(rows: &[Vec<f64>], column_names: Vec<String>) -> Result<Self> {
        let n_cols = column_names.len();
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::Mismatch(format!(
                    "row has {} values, expected {n_cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            n_cols,
            values,
            column_names,
            feature_set: "custom".into(),
            bin_edges: None,
        })
    }

    /// Sub-matrix of the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_rows: idx.len(),
            n_cols: self.n_cols,
            values,
            column_names: self.column_names.clone(),
            feature_set: self.feature_set.clone(),
            bin_edges: None,
        }
    }

    pub fn attach_bins(&mut self, max_bins: usize) {
        self.bin_edges = Some(build_histogram_bins(self, max_bins));
    }
}

/// Phone and car ages in whole months; a missing car date yields -1.
pub fn derive_date_features(record: &Record, reference_date: NaiveDate) -> Result<(i64, i64)> {
    let phone = date_age(Some(record.phone_purchase_date), reference_date)?;
    let car = date_age(record.car_purchase_date, reference_date)?;
    Ok((phone as i64, car as i64))
}

fn date_age(date: Option<NaiveDate>, reference_date: NaiveDate) -> Result<f64> {
    match date {
        None => Ok(MISSING_AGE),
        Some(d) if d > reference_date => Err(Error::invalid(format!(
            "date {d} lies after reference date {reference_date}"
        ))),
        Some(d) => Ok(whole_months_between(d, reference_date) as f64),
    }
}

fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

fn type_error(c: Column, v: &Value) -> Error {
    Error::Mismatch(format!("value {v:?} does not match column `{c}`"))
}

fn numeric_cell(c: Column, v: &Value) -> Result<f64> {
    match v {
        Value::Num(x) if x.is_finite() => Ok(*x),
        _ => Err(type_error(c, v)),
    }
}

fn date_cell(c: Column, v: &Value, reference_date: NaiveDate) -> Result<f64> {
    match v {
        Value::Date(d) => date_age(*d, reference_date),
        _ => Err(type_error(c, v)),
    }
}

fn cat_cell(c: Column, v: &Value) -> Result<&str> {
    match v {
        Value::Cat(s) => Ok(s),
        _ => Err(type_error(c, v)),
    }
}

/// Learns encoding statistics from `train` only.
pub fn fit_encoder(
    train: &FeatureView,
    mode: EncodeMode,
    reference_date: NaiveDate,
) -> Result<EncoderState> {
    if train.rows.is_empty() {
        return Err(Error::invalid("cannot fit an encoder on zero rows"));
    }
    let fs = &train.feature_set;
    let mut columns = Vec::with_capacity(fs.columns.len());
    let mut names = Vec::new();
    for (j, &col) in fs.columns.iter().enumerate() {
        let cells = train.rows.iter().map(|r| &r[j]);
        let enc = match col.kind() {
            ColumnKind::Numeric => {
                let vals = cells.map(|v| numeric_cell(col, v)).collect::<Result<Vec<_>>>()?;
                let (mean, std) = mean_std(vals.into_iter());
                ColumnEncoder::Numeric { mean, std }
            }
            ColumnKind::Date => {
                let vals = cells
                    .map(|v| date_cell(col, v, reference_date))
                    .collect::<Result<Vec<_>>>()?;
                let (mean, std) = mean_std(vals.into_iter());
                ColumnEncoder::Date { mean, std }
            }
            ColumnKind::Boolean => {
                for v in cells {
                    if !matches!(v, Value::Bool(_)) {
                        return Err(type_error(col, v));
                    }
                }
                ColumnEncoder::Boolean
            }
            ColumnKind::Categorical => {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for v in cells {
                    *counts.entry(cat_cell(col, v)?).or_default() += 1;
                }
                let mut levels: Vec<(&str, usize)> = counts.into_iter().collect();
                levels.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
                ColumnEncoder::Categorical {
                    levels: levels.into_iter().map(|(s, _)| s.to_string()).collect(),
                }
            }
        };
        match (&enc, mode) {
            (ColumnEncoder::Categorical { levels }, EncodeMode::Linear) => {
                names.extend(levels.iter().map(|l| format!("{col}={l}")));
                names.push(format!("{col}=<unseen>"));
            }
            (ColumnEncoder::Date { .. }, _) => names.push(format!("{col}_age_months")),
            _ => names.push(col.name().to_string()),
        }
        columns.push(enc);
    }
    Ok(EncoderState {
        mode,
        reference_date,
        feature_set: fs.clone(),
        columns,
        feature_names: names,
    })
}

impl EncoderState {
    pub fn n_outputs(&self) -> usize {
        self.feature_names.len()
    }

    /// Encodes one row into `out` (which must have `n_outputs` slots).
    pub fn encode_row(&self, row: &[Value], out: &mut [f64]) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Mismatch(format!(
                "row has {} cells, encoder expects {}",
                row.len(),
                self.columns.len()
            )));
        }
        let mut k = 0;
        for ((enc, &col), v) in self.columns.iter().zip(&self.feature_set.columns).zip(row) {
            match enc {
                ColumnEncoder::Numeric { mean, std } => {
                    let x = numeric_cell(col, v)?;
                    out[k] = match self.mode {
                        EncodeMode::Linear => (x - mean) / std,
                        EncodeMode::Tree => x,
                    };
                    k += 1;
                }
                ColumnEncoder::Date { mean, std } => {
                    let x = date_cell(col, v, self.reference_date)?;
                    out[k] = match self.mode {
                        EncodeMode::Linear => (x - mean) / std,
                        EncodeMode::Tree => x,
                    };
                    k += 1;
                }
                ColumnEncoder::Boolean => {
                    out[k] = match v {
                        Value::Bool(b) => f64::from(u8::from(*b)),
                        _ => return Err(type_error(col, v)),
                    };
                    k += 1;
                }
                ColumnEncoder::Categorical { levels } => {
                    let s = cat_cell(col, v)?;
                    let code = levels.iter().position(|l| l == s).unwrap_or(levels.len());
                    match self.mode {
                        EncodeMode::Linear => {
                            out[k..=k + levels.len()].fill(0.0);
                            out[k + code] = 1.0;
                            k += levels.len() + 1;
                        }
                        EncodeMode::Tree => {
                            out[k] = code as f64;
                            k += 1;
                        }
                    }
                }
            }
        }
        debug_assert_eq!(k, self.n_outputs());
        Ok(())
    }

    pub fn transform_rows(&self, rows: &[Vec<Value>]) -> Result<FeatureMatrix> {
        let n_cols = self.n_outputs();
        let mut values = vec![0.0; rows.len() * n_cols];
        for (i, r) in rows.iter().enumerate() {
            self.encode_row(r, &mut values[i * n_cols..(i + 1) * n_cols])?;
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            n_cols,
            values,
            column_names: self.feature_names.clone(),
            feature_set: self.feature_set.name.clone(),
            bin_edges: None,
        })
    }
}

/// Applies a fitted encoder. The view must use the encoder's feature set.
pub fn transform(encoder: &EncoderState, view: &FeatureView) -> Result<FeatureMatrix> {
    if view.feature_set.columns != encoder.feature_set.columns {
        return Err(Error::Mismatch(format!(
            "view uses feature set `{}`, encoder was fitted on `{}`",
            view.feature_set.name, encoder.feature_set.name
        )));
    }
    encoder.transform_rows(&view.rows)
}

/// Quantile bin edges per column, at most `max_bins` bins each.
///
/// A value `v` falls in bin `#edges < v`, so splitting after bin `t` sends
/// `v <= edges[t]` left. Columns with few distinct values get one bin per
/// value, with edges at midpoints.
pub fn build_histogram_bins(matrix: &FeatureMatrix, max_bins: usize) -> Vec<Vec<f64>> {
    assert!(max_bins >= 2, "max_bins must be >= 2");
    (0..matrix.n_cols)
        .map(|j| column_edges(&matrix.column(j), max_bins))
        .collect()
}

pub fn column_edges(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = sorted.len();
    let mut edges: Vec<f64> = Vec::with_capacity(max_bins);
    for q in 1..max_bins {
        let pos = (q * n / max_bins).max(1);
        let v = sorted[pos - 1];
        let next = sorted.partition_point(|&x| x <= v);
        if next < n {
            let e = 0.5 * (v + sorted[next]);
            if edges.last().is_none_or(|&last| e > last) {
                edges.push(e);
            }
        }
    }
    edges
}

/// Bin of `v` under `edges`.
pub fn bin_index(edges: &[f64], v: f64) -> usize {
    edges.partition_point(|&e| e < v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::FeatureSet;
    use proptest::prelude::*;

    fn ref_date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2025, 3, 31).unwrap()
    }

    fn view(columns: &[&str], rows: Vec<Vec<Value>>) -> FeatureView {
        let fs = FeatureSet::custom("t", columns).unwrap();
        let labels = vec![0; rows.len()];
        FeatureView {
            feature_set: fs,
            rows,
            labels,
        }
    }

    fn cat(s: &str) -> Value {
        Value::Cat(s.into())
    }

    #[test]
    fn date_features() {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).unwrap();
        let mut r = crate::dataio::sample_record(1);
        r.phone_purchase_date = ref_date();
        r.car_purchase_date = None;
        assert_eq!(derive_date_features(&r, ref_date()).unwrap(), (0, -1));
        r.phone_purchase_date = d(2023, 9, 30);
        r.car_purchase_date = Some(d(2020, 3, 31));
        assert_eq!(derive_date_features(&r, ref_date()).unwrap(), (18, 60));
        r.phone_purchase_date = d(2025, 4, 1);
        assert!(derive_date_features(&r, ref_date()).is_err());
    }

    #[test]
    fn linear_one_hot_has_unseen_bucket() {
        let v = view(
            &["home_district"],
            vec![vec![cat("A")], vec![cat("B")], vec![cat("C")], vec![cat("A")]],
        );
        let enc = fit_encoder(&v, EncodeMode::Linear, ref_date()).unwrap();
        assert_eq!(enc.n_outputs(), 4);
        assert_eq!(enc.feature_names[3], "home_district=<unseen>");
        let m = transform(&enc, &v).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.row(2), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn constant_numeric_standardises_to_zero() {
        let v = view(&["age"], vec![vec![Value::Num(5.0)]; 6]);
        let enc = fit_encoder(&v, EncodeMode::Linear, ref_date()).unwrap();
        assert_eq!(enc.columns[0], ColumnEncoder::Numeric { mean: 5.0, std: 1.0 });
        let m = transform(&enc, &v).unwrap();
        assert!(m.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn held_out_category_maps_to_unseen() {
        let train = view(
            &["home_district", "age"],
            vec![
                vec![cat("Kadikoy"), Value::Num(30.0)],
                vec![cat("Fatih"), Value::Num(40.0)],
                vec![cat("Kadikoy"), Value::Num(50.0)],
            ],
        );
        let test = view(&["home_district", "age"], vec![vec![cat("Adalar"), Value::Num(35.0)]]);
        let lin = fit_encoder(&train, EncodeMode::Linear, ref_date()).unwrap();
        let m = transform(&lin, &test).unwrap();
        assert_eq!(&m.row(0)[..3], &[0.0, 0.0, 1.0]);
        let tree = fit_encoder(&train, EncodeMode::Tree, ref_date()).unwrap();
        let m = transform(&tree, &test).unwrap();
        // Kadikoy (2 rows) gets code 0, Fatih 1, unseen 2.
        assert_eq!(m.row(0), &[2.0, 35.0]);
    }

    #[test]
    fn tree_mode_column_count_and_idempotence() {
        let fs = FeatureSet::full();
        let r = crate::dataio::sample_record(1);
        let v = FeatureView {
            rows: vec![crate::dataio::project(&r, &fs)],
            labels: vec![0],
            feature_set: fs,
        };
        let enc = fit_encoder(&v, EncodeMode::Tree, ref_date()).unwrap();
        // 4 numerics + 4 booleans + 2 date ages + 7 categorical codes.
        assert_eq!(enc.n_outputs(), 17);
        let a = transform(&enc, &v).unwrap();
        let b = transform(&enc, &v).unwrap();
        assert_eq!(a, b);
        let empty = enc.transform_rows(&[]).unwrap();
        assert_eq!((empty.n_rows, empty.n_cols), (0, 17));
    }

    #[test]
    fn wrong_feature_set_is_rejected() {
        let v = view(&["age"], vec![vec![Value::Num(1.0)]]);
        let enc = fit_encoder(&v, EncodeMode::Tree, ref_date()).unwrap();
        let other = view(&["monthly_income"], vec![vec![Value::Num(1.0)]]);
        assert!(matches!(transform(&enc, &other), Err(Error::Mismatch(_))));
        let empty = view(&["age"], vec![]);
        assert!(fit_encoder(&empty, EncodeMode::Tree, ref_date()).is_err());
    }

    #[test]
    fn encoder_ignores_test_rows() {
        let train = view(&["age"], vec![vec![Value::Num(20.0)], vec![Value::Num(40.0)]]);
        let enc = fit_encoder(&train, EncodeMode::Linear, ref_date()).unwrap();
        let mut test = view(&["age"], vec![vec![Value::Num(1e6)]]);
        let _ = transform(&enc, &test).unwrap();
        test.rows[0][0] = Value::Num(-5.0);
        let _ = transform(&enc, &test).unwrap();
        assert_eq!(enc, fit_encoder(&train, EncodeMode::Linear, ref_date()).unwrap());
    }

    fn matrix(cols: Vec<Vec<f64>>) -> FeatureMatrix {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        let names = (0..cols.len()).map(|j| format!("c{j}")).collect();
        FeatureMatrix::from_rows(&rows, names).unwrap()
    }

    #[test]
    fn histogram_bin_cases() {
        let m = matrix(vec![
            (0..100).map(|i| f64::from(i % 2)).collect(),
            (1..=100).map(|_| 3.0).collect(),
        ]);
        let edges = build_histogram_bins(&m, 255);
        assert_eq!(edges[0], vec![0.5]);
        assert!(edges[1].is_empty());

        let m = matrix(vec![(1..=1000).map(f64::from).collect()]);
        let edges = build_histogram_bins(&m, 10);
        assert_eq!(edges[0].len(), 9);
        let mut counts = [0usize; 10];
        for v in 1..=1000 {
            counts[bin_index(&edges[0], f64::from(v))] += 1;
        }
        // Quantile oracle: each decile of 1..=1000 holds exactly 100 values.
        assert_eq!(counts, [100; 10]);
    }

    proptest! {
        #[test]
        fn binning_is_monotone_and_bounded(
            values in proptest::collection::vec(-1e4f64..1e4, 1..400),
            max_bins in 2usize..40,
        ) {
            let edges = column_edges(&values, max_bins);
            prop_assert!(edges.len() < max_bins);
            prop_assert!(edges.windows(2).all(|w| w[0] < w[1]));
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            for w in sorted.windows(2) {
                prop_assert!(bin_index(&edges, w[0]) <= bin_index(&edges, w[1]));
            }
        }
    }
}
