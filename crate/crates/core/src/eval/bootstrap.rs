use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    /// Statistic on the original sample.
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub resamples: usize,
}

/// One stratified resample: each class is redrawn with replacement at its
/// original size, so prevalence is preserved exactly.
pub fn stratified_resample(labels: &[u8], seed: u64, b: usize) -> Vec<usize> {
    let mut rng = substream(seed, &[tag::BOOTSTRAP, b as u64]);
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    let mut out = Vec::with_capacity(labels.len());
    for class in [&pos, &neg] {
        for _ in 0..class.len() {
            out.push(class[rng.random_range(0..class.len())]);
        }
    }
    out
}

/// Linear-interpolated quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile interval (2.5%, 97.5%) of `statistic` over `b` stratified
/// resamples of the rows described by `labels`.
///
/// `statistic` receives row indices and may return `None` when undefined on a
/// resample; such resamples are skipped.
pub fn bootstrap_ci<F>(labels: &[u8], b: usize, seed: u64, statistic: F) -> Result<BootstrapCi>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    if labels.is_empty() || b == 0 {
        return Err(Error::invalid("bootstrap needs rows and at least one resample"));
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    let estimate = statistic(&all)
        .ok_or_else(|| Error::invalid("statistic undefined on the full sample"))?;
    let mut values: Vec<f64> = (0..b)
        .into_par_iter()
        .filter_map(|i| statistic(&stratified_resample(labels, seed, i)))
        .collect();
    if values.is_empty() {
        return Err(Error::invalid("statistic undefined on every resample"));
    }
    values.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        estimate,
        lo: quantile_sorted(&values, 0.025),
        hi: quantile_sorted(&values, 0.975),
        resamples: values.len(),
    })
}
