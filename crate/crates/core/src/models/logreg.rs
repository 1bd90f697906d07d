//! Elastic-net logistic regression by proximal Newton with coordinate descent.
//!
//! Objective: weighted mean log-loss + lambda * (alpha |b|_1 + (1 - alpha)/2 |b|_2^2),
//! intercept unpenalised.

use serde::{Deserialize, Serialize};

use super::gbdt::sigmoid;
use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// Share of the penalty on the l1 norm.
    pub alpha_mix: f64,
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams { alpha_mix: 0.5, lambda: 1e-3, tol: 1e-4, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after each iteration.
    pub objective_trace: Vec<f64>,
}

/// Problem data shared by objective and gradient evaluations.
pub struct Problem<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [u8],
    pub w: &'a [f64],
    pub params: &'a LogRegParams,
    total_weight: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl<'a> Problem<'a> {
    pub fn new(x: &'a FeatureMatrix, y: &'a [u8], w: &'a [f64], params: &'a LogRegParams) -> Result<Self> {
        if x.n_rows != y.len() || y.len() != w.len() || y.is_empty() {
            return Err(Error::invalid("matrix, labels and weights differ in length or are empty"));
        }
        let total_weight = w.iter().sum::<f64>();
        if total_weight <= 0.0 {
            return Err(Error::invalid("weights must have positive sum"));
        }
        Ok(Problem { x, y, w, params, total_weight })
    }

    fn margins(&self, b0: f64, b: &[f64]) -> Vec<f64> {
        (0..self.x.n_rows)
            .map(|i| b0 + self.x.row(i).iter().zip(b).map(|(a, c)| a * c).sum::<f64>())
            .collect()
    }

    /// Weighted mean log-loss.
    pub fn loss(&self, b0: f64, b: &[f64]) -> f64 {
        let z = self.margins(b0, b);
        z.iter()
            .zip(self.y)
            .zip(self.w)
            .map(|((&z, &y), &w)| w * (softplus(z) - f64::from(y) * z))
            .sum::<f64>()
            / self.total_weight
    }

    /// Gradient of the mean log-loss: (d/d intercept, d/d coef).
    pub fn loss_gradient(&self, b0: f64, b: &[f64]) -> (f64, Vec<f64>) {
        let z = self.margins(b0, b);
        let mut g0 = 0.0;
        let mut g = vec![0.0; b.len()];
        for i in 0..self.x.n_rows {
            let r = self.w[i] * (sigmoid(z[i]) - f64::from(self.y[i])) / self.total_weight;
            g0 += r;
            for (gj, xij) in g.iter_mut().zip(self.x.row(i)) {
                *gj += r * xij;
            }
        }
        (g0, g)
    }

    pub fn penalty(&self, b: &[f64]) -> f64 {
        let p = self.params;
        let l1: f64 = b.iter().map(|v| v.abs()).sum();
        let l2: f64 = b.iter().map(|v| v * v).sum();
        p.lambda * (p.alpha_mix * l1 + 0.5 * (1.0 - p.alpha_mix) * l2)
    }

    pub fn objective(&self, b0: f64, b: &[f64]) -> f64 {
        self.loss(b0, b) + self.penalty(b)
    }

    /// Gradient of the full objective, using sign(b) for the l1 term; valid
    /// away from b_j = 0.
    pub fn gradient(&self, b0: f64, b: &[f64]) -> (f64, Vec<f64>) {
        let p = self.params;
        let (g0, mut g) = self.loss_gradient(b0, b);
        for (gj, bj) in g.iter_mut().zip(b) {
            *gj += p.lambda * (p.alpha_mix * bj.signum() + (1.0 - p.alpha_mix) * bj);
        }
        (g0, g)
    }

}

fn params_ok(p: &LogRegParams) -> Result<()> {
    if !(0.0..=1.0).contains(&p.alpha_mix) || p.lambda < 0.0 || p.tol <= 0.0 || p.max_iter == 0 {
        return Err(Error::Config(format!("invalid logistic regression parameters {p:?}")));
    }
    Ok(())
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Fits the model by proximal Newton steps: each outer iteration solves the
/// penalised quadratic model of the loss by cyclic coordinate descent, then
/// backtracks along the step until the objective does not increase.
/// Hitting the iteration cap is reported through `converged = false`.
pub fn fit_logreg(x: &FeatureMatrix, y: &[u8], w: &[f64], params: &LogRegParams) -> Result<LogRegFit> {
    params_ok(params)?;
    let prob = Problem::new(x, y, w, params)?;
    let (n, p) = (x.n_rows, x.n_cols);
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let l1 = params.lambda * params.alpha_mix;
    let l2 = params.lambda * (1.0 - params.alpha_mix);

    let (mut b0, mut b) = (0.0, vec![0.0; p]);
    let mut eta = vec![0.0; n];
    let mut fx = prob.objective(b0, &b);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut v = vec![0.0; n];
    let mut r = vec![0.0; n];
    for it in 0..params.max_iter {
        iterations = it + 1;
        for i in 0..n {
            let pi = sigmoid(eta[i]);
            let h = (pi * (1.0 - pi)).max(1e-5);
            v[i] = w[i] * h / prob.total_weight;
            r[i] = (f64::from(y[i]) - pi) / h;
        }
        let vsum: f64 = v.iter().sum();
        let curv: Vec<f64> = cols.iter().map(|c| c.iter().zip(&v).map(|(a, b)| a * a * b).sum()).collect();
        let (mut n0, mut nb) = (b0, b.clone());
        for _pass in 0..100 {
            let d0 = v.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / vsum;
            n0 += d0;
            r.iter_mut().for_each(|ri| *ri -= d0);
            let mut max_step = d0.abs();
            for j in 0..p {
                if curv[j] <= 0.0 {
                    continue;
                }
                let c = &cols[j];
                let g: f64 = c.iter().zip(&v).zip(&r).map(|((a, b), e)| a * b * e).sum::<f64>() + curv[j] * nb[j];
                let new = soft_threshold(g, l1) / (curv[j] + l2);
                let d = new - nb[j];
                if d != 0.0 {
                    for (ri, a) in r.iter_mut().zip(c) {
                        *ri -= a * d;
                    }
                    nb[j] = new;
                    max_step = max_step.max(d.abs());
                }
            }
            if max_step < 0.1 * params.tol {
                break;
            }
        }
        // Backtracking along the Newton direction.
        let (d0, d): (f64, Vec<f64>) = (n0 - b0, nb.iter().zip(&b).map(|(a, c)| a - c).collect());
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let c0 = b0 + t * d0;
            let cb: Vec<f64> = b.iter().zip(&d).map(|(a, e)| a + t * e).collect();
            let fc = prob.objective(c0, &cb);
            if fc <= fx {
                accepted = Some((c0, cb, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((c0, cb, fc)) = accepted else {
            trace.push(fx);
            break;
        };
        let change = t * d.iter().fold(d0.abs(), |m, e| m.max(e.abs()));
        b0 = c0;
        b = cb;
        fx = fc;
        trace.push(fx);
        for (i, e) in eta.iter_mut().enumerate() {
            *e = b0 + x.row(i).iter().zip(&b).map(|(a, c)| a * c).sum::<f64>();
        }
        if change < params.tol {
            converged = true;
            break;
        }
    }
    Ok(LogRegFit { intercept: b0, coef: b, converged, iterations, objective_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn data(n: usize, seed: u64) -> (FeatureMatrix, Vec<u8>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-2.0..2.0);
            let b: f64 = rng.random_range(-2.0..2.0);
            let c: f64 = rng.random_range(-2.0..2.0);
            let p = sigmoid(1.5 * a - 0.8 * b + 0.3);
            y.push(u8::from(rng.random::<f64>() < p));
            rows.push(vec![a, b, c]);
        }
        (FeatureMatrix::from_rows(&rows, vec!["a".into(), "b".into(), "c".into()]).unwrap(), y)
    }

    #[test]
    fn huge_penalty_gives_base_rate_intercept() {
        let (x, y) = data(300, 1);
        let w = vec![1.0; 300];
        let params = LogRegParams { lambda: 1e6, ..LogRegParams::default() };
        let fit = fit_logreg(&x, &y, &w, &params).unwrap();
        assert!(fit.coef.iter().all(|&c| c == 0.0));
        let pos = y.iter().filter(|&&v| v == 1).count() as f64;
        let logit = (pos / (300.0 - pos)).ln();
        assert!((fit.intercept - logit).abs() < 1e-3);
        assert!(fit.converged);
    }

    #[test]
    fn objective_never_increases() {
        let (x, y) = data(400, 2);
        let fit = fit_logreg(&x, &y, &vec![1.0; 400], &LogRegParams::default()).unwrap();
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(fit.converged);
        assert!(fit.coef[0] > 0.5 && fit.coef[1] < -0.2);
    }

    #[test]
    fn separable_data_hits_the_cap() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![f64::from(i) - 19.5]).collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let x = FeatureMatrix::from_rows(&rows, vec!["a".into()]).unwrap();
        let params = LogRegParams { lambda: 0.0, max_iter: 300, ..LogRegParams::default() };
        let fit = fit_logreg(&x, &y, &vec![1.0; 40], &params).unwrap();
        assert!(!fit.converged);
        assert!(fit.iterations <= 300);
        assert!(fit.coef[0] > 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = data(200, 3);
        let w: Vec<f64> = (0..200).map(|i| 1.0 + f64::from(i % 3)).collect();
        let params = LogRegParams { alpha_mix: 0.5, lambda: 0.1, ..LogRegParams::default() };
        let fit = fit_logreg(&x, &y, &w, &params).unwrap();
        let prob = Problem::new(&x, &y, &w, &params).unwrap();
        // At the returned fit (zero coefficients nudged off the kink) and at
        // a point away from the optimum.
        let nudged: Vec<f64> = fit.coef.iter().map(|&c| if c.abs() < 1e-3 { 0.05 } else { c }).collect();
        for (b0, b) in [(fit.intercept, nudged), (0.4, vec![0.7, -0.4, 0.25])] {
            let (g0, g) = prob.gradient(b0, &b);
            let eps = 1e-6;
            let fd0 = (prob.objective(b0 + eps, &b) - prob.objective(b0 - eps, &b)) / (2.0 * eps);
            assert!((g0 - fd0).abs() <= 1e-5 * fd0.abs().max(1e-3));
            for j in 0..b.len() {
                let mut up = b.clone();
                let mut dn = b.clone();
                up[j] += eps;
                dn[j] -= eps;
                let fd = (prob.objective(b0, &up) - prob.objective(b0, &dn)) / (2.0 * eps);
                assert!((g[j] - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "coef {j}: {} vs {fd}", g[j]);
            }
        }
    }
}
