use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::metrics::midranks;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeLongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    /// `auc_b - auc_a`.
    pub delta: f64,
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
    /// Zero variance with a non-zero difference.
    pub degenerate: bool,
}

/// Placement values of one score vector: `v10` per positive, `v01` per negative.
pub(crate) struct Placements {
    pub v10: Vec<f64>,
    pub v01: Vec<f64>,
}

pub(crate) fn placements(scores: &[f64], labels: &[u8]) -> Placements {
    let all = midranks(scores);
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &y)| y == 0).map(|(s, _)| *s).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let rp = midranks(&pos);
    let rn = midranks(&neg);
    let (mut v10, mut v01) = (Vec::with_capacity(pos.len()), Vec::with_capacity(neg.len()));
    let (mut ip, mut ineg) = (0, 0);
    for (i, &y) in labels.iter().enumerate() {
        if y == 1 {
            v10.push((all[i] - rp[ip]) / n);
            ip += 1;
        } else {
            v01.push(1.0 - (all[i] - rn[ineg]) / m);
            ineg += 1;
        }
    }
    Placements { v10, v01 }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

/// Paired DeLong test of `auc(b) - auc(a)` using the fast midrank algorithm.
pub fn delong_paired(scores_a: &[f64], scores_b: &[f64], labels: &[u8]) -> Result<DeLongResult> {
    if scores_a.len() != labels.len() || scores_b.len() != labels.len() {
        return Err(Error::invalid("paired score vectors must match the label count"));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels must be 0/1"));
    }
    let m = labels.iter().filter(|&&y| y == 1).count();
    let n = labels.len() - m;
    if m == 0 || n == 0 {
        return Err(Error::invalid("DeLong test needs both classes"));
    }
    let a = placements(scores_a, labels);
    let b = placements(scores_b, labels);
    let (auc_a, auc_b) = (mean(&a.v10), mean(&b.v10));
    let s10 = cov(&a.v10, &a.v10) + cov(&b.v10, &b.v10) - 2.0 * cov(&a.v10, &b.v10);
    let s01 = cov(&a.v01, &a.v01) + cov(&b.v01, &b.v01) - 2.0 * cov(&a.v01, &b.v01);
    let variance = (s10 / m as f64 + s01 / n as f64).max(0.0);
    let delta = auc_b - auc_a;
    let (z, p_value, degenerate) = if variance <= 1e-300 {
        if delta == 0.0 {
            (0.0, 1.0, false)
        } else {
            (delta.signum() * f64::INFINITY, 0.0, true)
        }
    } else {
        let z = delta / variance.sqrt();
        let std = Normal::standard();
        (z, (2.0 * std.sf(z.abs())).min(1.0), false)
    };
    Ok(DeLongResult { auc_a, auc_b, delta, variance, z, p_value, degenerate })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn psi(x: f64, y: f64) -> f64 {
        if x > y {
            1.0
        } else if x == y {
            0.5
        } else {
            0.0
        }
    }

    /// Structural components straight from the definition, O(m*n).
    pub(crate) fn quadratic_variance(a: &[f64], b: &[f64], labels: &[u8]) -> f64 {
        let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        let comps = |s: &[f64]| {
            let v10: Vec<f64> = pos
                .iter()
                .map(|&i| neg.iter().map(|&j| psi(s[i], s[j])).sum::<f64>() / neg.len() as f64)
                .collect();
            let v01: Vec<f64> = neg
                .iter()
                .map(|&j| pos.iter().map(|&i| psi(s[i], s[j])).sum::<f64>() / pos.len() as f64)
                .collect();
            (v10, v01)
        };
        let (a10, a01) = comps(a);
        let (b10, b01) = comps(b);
        let c = |x: &[f64], y: &[f64]| {
            let mx = x.iter().sum::<f64>() / x.len() as f64;
            let my = y.iter().sum::<f64>() / y.len() as f64;
            x.iter().zip(y).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / (x.len() - 1) as f64
        };
        (c(&a10, &a10) + c(&b10, &b10) - 2.0 * c(&a10, &b10)) / pos.len() as f64
            + (c(&a01, &a01) + c(&b01, &b01) - 2.0 * c(&a01, &b01)) / neg.len() as f64
    }

    #[test]
    fn identical_models_have_unit_p() {
        let s = [0.1, 0.4, 0.35, 0.8, 0.7];
        let y = [0, 0, 1, 1, 0];
        let r = delong_paired(&s, &s, &y).unwrap();
        assert_eq!((r.delta, r.p_value, r.degenerate), (0.0, 1.0, false));
    }

    #[test]
    fn matches_quadratic_oracle_and_is_antisymmetric() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let y: Vec<u8> = (0..200).map(|_| u8::from(rng.random_bool(0.4))).collect();
        let a: Vec<f64> = y.iter().map(|&l| f64::from(l) + rng.random::<f64>() * 2.0).collect();
        let b: Vec<f64> = a.iter().map(|v| v + rng.random::<f64>()).collect();
        let r = delong_paired(&a, &b, &y).unwrap();
        assert!((r.variance - quadratic_variance(&a, &b, &y)).abs() < 1e-10);
        let s = delong_paired(&b, &a, &y).unwrap();
        assert_eq!(s.z, -r.z);
        assert_eq!(s.p_value, r.p_value);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(delong_paired(&[0.1, 0.2], &[0.3, 0.1], &[1, 1]).is_err());
    }
}
