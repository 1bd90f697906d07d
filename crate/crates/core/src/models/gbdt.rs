//! Histogram gradient boosting for binary log-loss.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Binned, Node, Tree};
use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::rng::{substream, tag};

pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    XgbLike,
    LgbmLike,
    CatLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Growth {
    DepthWise,
    LeafWise,
    Oblivious,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goss {
    /// Fraction of rows kept by largest |gradient|.
    pub top: f64,
    /// Fraction of all rows sampled from the remainder.
    pub rest: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub preset: Preset,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Leaf budget for leaf-wise growth; ignored by the other presets.
    pub max_leaves: usize,
    pub n_rounds_max: usize,
    pub early_stopping_rounds: usize,
    pub row_subsample: f64,
    pub col_subsample: f64,
    pub l1_alpha: f64,
    pub l2_lambda: f64,
    pub min_gain_gamma: f64,
    pub min_child_weight: f64,
    pub min_child_samples: usize,
    pub goss: Option<Goss>,
    pub balanced: bool,
    pub max_bins: usize,
}

impl GbdtParams {
    pub fn preset(preset: Preset) -> Self {
        let base = GbdtParams {
            preset,
            learning_rate: 0.1,
            max_depth: 6,
            max_leaves: 31,
            n_rounds_max: 400,
            early_stopping_rounds: 100,
            row_subsample: 1.0,
            col_subsample: 1.0,
            l1_alpha: 0.0,
            l2_lambda: 1.0,
            min_gain_gamma: 0.0,
            min_child_weight: 1.0,
            min_child_samples: 1,
            goss: None,
            balanced: true,
            max_bins: 255,
        };
        match preset {
            Preset::XgbLike => GbdtParams {
                row_subsample: 0.8,
                col_subsample: 0.8,
                l1_alpha: 0.01,
                ..base
            },
            Preset::LgbmLike => GbdtParams {
                max_depth: 12,
                l2_lambda: 0.0,
                min_child_weight: 1e-3,
                min_child_samples: 20,
                goss: Some(Goss { top: 0.2, rest: 0.1 }),
                ..base
            },
            Preset::CatLike => GbdtParams {
                row_subsample: 0.8,
                l2_lambda: 3.0,
                ..base
            },
        }
    }

    fn growth(&self) -> Growth {
        match self.preset {
            Preset::XgbLike => Growth::DepthWise,
            Preset::LgbmLike => Growth::LeafWise,
            Preset::CatLike => Growth::Oblivious,
        }
    }

    /// A learning rate of 0 is accepted and yields a constant model.
    pub fn validate(&self) -> Result<()> {
        let frac = |x: f64| x > 0.0 && x <= 1.0;
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::Config(format!("learning_rate {} outside [0, 1]", self.learning_rate)));
        }
        if !frac(self.row_subsample) || !frac(self.col_subsample) {
            return Err(Error::Config("subsample fractions must lie in (0, 1]".into()));
        }
        if let Some(g) = self.goss {
            if !frac(g.top) || !frac(g.rest) || g.top + g.rest > 1.0 {
                return Err(Error::Config(format!("invalid GOSS fractions {g:?}")));
            }
        }
        if self.l1_alpha < 0.0 || self.l2_lambda < 0.0 || self.min_gain_gamma < 0.0 {
            return Err(Error::Config("penalties must be non-negative".into()));
        }
        if self.max_depth == 0 || self.n_rounds_max == 0 || self.max_leaves < 2 {
            return Err(Error::Config("max_depth, n_rounds_max must be >= 1 and max_leaves >= 2".into()));
        }
        if !(2..=256).contains(&self.max_bins) {
            return Err(Error::Config(format!("max_bins {} outside 2..=256", self.max_bins)));
        }
        Ok(())
    }
}

/// Balanced class weights `n / (2 n_c)`.
pub fn class_weights(labels: &[u8]) -> Result<(f64, f64)> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("class weights need both classes"));
    }
    let n = labels.len() as f64;
    Ok((n / (2.0 * pos as f64), n / (2.0 * neg as f64)))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Gradient and hessian of weighted log-loss with respect to the margin.
pub fn logistic_grad_hess(prob: f64, label: u8, weight: f64) -> (f64, f64) {
    let p = clamp_prob(prob);
    (weight * (p - f64::from(label)), weight * p * (1.0 - p))
}

fn soft(g: f64, l1: f64) -> f64 {
    g.signum() * (g.abs() - l1).max(0.0)
}

fn score(g: f64, h: f64, l1: f64, l2: f64) -> f64 {
    let d = h + l2;
    if d > 0.0 {
        soft(g, l1).powi(2) / d
    } else {
        0.0
    }
}

pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, l1: f64, l2: f64, gamma: f64) -> f64 {
    0.5 * (score(gl, hl, l1, l2) + score(gr, hr, l1, l2) - score(gl + gr, hl + hr, l1, l2)) - gamma
}

pub fn leaf_weight(g: f64, h: f64, l1: f64, l2: f64) -> f64 {
    let d = h + l2;
    if d > 0.0 {
        -soft(g, l1) / d
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Default)]
pub struct BoostOutcome {
    pub base_margin: f64,
    pub trees: Vec<Tree>,
    /// Validation AUC after each round.
    pub trace: Vec<f64>,
    pub best_iteration: usize,
    pub rounds_trained: usize,
}

/// Per-bin sums of (gradient, hessian, count).
type Hist = Vec<[f64; 3]>;

struct Grower<'a> {
    binned: &'a Binned,
    g: &'a [f64],
    h: &'a [f64],
    cols: &'a [usize],
    p: &'a GbdtParams,
}

#[derive(Clone, Copy)]
struct Candidate {
    col: usize,
    bin: usize,
    gain: f64,
}

struct Open {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    g: f64,
    h: f64,
}

impl Grower<'_> {
    fn histograms(&self, rows: &[usize]) -> Vec<Hist> {
        self.cols
            .par_iter()
            .map(|&j| {
                let col = &self.binned.cols[j];
                let mut hist = vec![[0.0; 3]; self.binned.n_bins(j)];
                for &r in rows {
                    let b = &mut hist[usize::from(col[r])];
                    b[0] += self.g[r];
                    b[1] += self.h[r];
                    b[2] += 1.0;
                }
                hist
            })
            .collect()
    }

    fn best_split(&self, hists: &[Hist], g: f64, h: f64, n: usize) -> Option<Candidate> {
        let p = self.p;
        let min_n = p.min_child_samples as f64;
        let mut best: Option<Candidate> = None;
        for (k, hist) in hists.iter().enumerate() {
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0.0);
            for (t, b) in hist.iter().enumerate().take(hist.len() - 1) {
                gl += b[0];
                hl += b[1];
                nl += b[2];
                let (gr, hr, nr) = (g - gl, h - hl, n as f64 - nl);
                if hl < p.min_child_weight || hr < p.min_child_weight || nl < min_n || nr < min_n {
                    continue;
                }
                let gain = split_gain(gl, hl, gr, hr, p.l1_alpha, p.l2_lambda, p.min_gain_gamma);
                if gain > 0.0 && best.is_none_or(|c| gain > c.gain) {
                    best = Some(Candidate { col: self.cols[k], bin: t, gain });
                }
            }
        }
        best
    }

    fn totals(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(g, h), &r| (g + self.g[r], h + self.h[r]))
    }

    fn leaf(&self, g: f64, h: f64) -> Node {
        Node::Leaf { value: leaf_weight(g, h, self.p.l1_alpha, self.p.l2_lambda) }
    }

    fn split_node(&self, nodes: &mut Vec<Node>, o: Open, c: Candidate) -> (Open, Open) {
        let (lr, rr) = self.binned.partition(&o.rows, c.col, c.bin);
        let (lg, lh) = self.totals(&lr);
        let (rg, rh) = self.totals(&rr);
        let left = nodes.len();
        nodes.push(self.leaf(lg, lh));
        nodes.push(self.leaf(rg, rh));
        nodes[o.node] = Node::Split {
            feature: c.col,
            threshold: self.binned.threshold(c.col, c.bin),
            left,
            right: left + 1,
        };
        let d = o.depth + 1;
        (
            Open { node: left, rows: lr, depth: d, g: lg, h: lh },
            Open { node: left + 1, rows: rr, depth: d, g: rg, h: rh },
        )
    }

    fn grow(&self, rows: Vec<usize>) -> Tree {
        let (g, h) = self.totals(&rows);
        let mut nodes = vec![self.leaf(g, h)];
        let root = Open { node: 0, rows, depth: 0, g, h };
        match self.p.growth() {
            Growth::DepthWise => self.grow_depthwise(&mut nodes, root),
            Growth::LeafWise => self.grow_leafwise(&mut nodes, root),
            Growth::Oblivious => self.grow_oblivious(&mut nodes, root),
        }
        let mut tree = Tree { nodes, depth: 0 };
        tree.refresh_depth();
        tree
    }

    fn grow_depthwise(&self, nodes: &mut Vec<Node>, root: Open) {
        let mut level = vec![root];
        while !level.is_empty() {
            let mut next = Vec::new();
            for o in level {
                if o.depth >= self.p.max_depth {
                    continue;
                }
                let hists = self.histograms(&o.rows);
                if let Some(c) = self.best_split(&hists, o.g, o.h, o.rows.len()) {
                    let (l, r) = self.split_node(nodes, o, c);
                    next.push(l);
                    next.push(r);
                }
            }
            level = next;
        }
    }

    fn grow_leafwise(&self, nodes: &mut Vec<Node>, root: Open) {
        let mut open: Vec<(Open, Option<Candidate>)> = Vec::new();
        let eval = |o: &Open| {
            if o.depth >= self.p.max_depth {
                return None;
            }
            let hists = self.histograms(&o.rows);
            self.best_split(&hists, o.g, o.h, o.rows.len())
        };
        let c = eval(&root);
        open.push((root, c));
        let mut leaves = 1;
        while leaves < self.p.max_leaves {
            // Highest gain first; earlier leaves win ties.
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(i, (_, c))| c.map(|c| (i, c.gain)))
                .fold(None::<(usize, f64)>, |best, (i, g)| match best {
                    Some((_, bg)) if bg >= g => best,
                    _ => Some((i, g)),
                });
            let Some((i, _)) = pick else { break };
            let (o, c) = open.remove(i);
            let (l, r) = self.split_node(nodes, o, c.expect("picked candidate"));
            let cl = eval(&l);
            let cr = eval(&r);
            open.push((l, cl));
            open.push((r, cr));
            leaves += 1;
        }
    }

    /// Symmetric trees: every node of a level shares one split.
    fn grow_oblivious(&self, nodes: &mut Vec<Node>, root: Open) {
        let p = self.p;
        let mut level = vec![root];
        for _ in 0..p.max_depth {
            let hists: Vec<Vec<Hist>> = level.iter().map(|o| self.histograms(&o.rows)).collect();
            let mut best: Option<Candidate> = None;
            for (k, &col) in self.cols.iter().enumerate() {
                let mut gains = vec![-p.min_gain_gamma; self.binned.n_bins(col) - 1];
                for (o, hs) in level.iter().zip(&hists) {
                    let (mut gl, mut hl) = (0.0, 0.0);
                    for (t, slot) in gains.iter_mut().enumerate() {
                        gl += hs[k][t][0];
                        hl += hs[k][t][1];
                        *slot += split_gain(gl, hl, o.g - gl, o.h - hl, p.l1_alpha, p.l2_lambda, 0.0);
                    }
                }
                for (t, &gain) in gains.iter().enumerate() {
                    if gain > 0.0 && best.is_none_or(|c| gain > c.gain) {
                        best = Some(Candidate { col, bin: t, gain });
                    }
                }
            }
            let Some(c) = best else { break };
            let mut next = Vec::with_capacity(level.len() * 2);
            for o in level {
                let (l, r) = self.split_node(nodes, o, c);
                next.push(l);
                next.push(r);
            }
            level = next;
        }
    }
}

fn predict_margins(trees: &[Tree], base: f64, m: &FeatureMatrix) -> Vec<f64> {
    (0..m.n_rows)
        .into_par_iter()
        .map(|i| base + trees.iter().map(|t| t.predict_row(m.row(i))).sum::<f64>())
        .collect()
}

/// Rows used this round and any gradient multiplier (GOSS).
fn sample_rows(params: &GbdtParams, g: &[f64], rng: &mut impl Rng) -> (Vec<usize>, Vec<f64>) {
    let n = g.len();
    let mut mult = vec![1.0; n];
    if let Some(goss) = params.goss {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
        let top = ((goss.top * n as f64).round() as usize).min(n);
        let rest_n = ((goss.rest * n as f64).round() as usize).min(n - top);
        let mut rows: Vec<usize> = order[..top].to_vec();
        let rest = &order[top..];
        let factor = (1.0 - goss.top) / goss.rest;
        for k in sample(rng, rest.len(), rest_n).into_iter() {
            rows.push(rest[k]);
            mult[rest[k]] = factor;
        }
        rows.sort_unstable();
        return (rows, mult);
    }
    if params.row_subsample < 1.0 {
        let rows: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < params.row_subsample).collect();
        if !rows.is_empty() {
            return (rows, mult);
        }
    }
    ((0..n).collect(), mult)
}

fn sample_cols(params: &GbdtParams, p: usize, rng: &mut impl Rng) -> Vec<usize> {
    if params.col_subsample >= 1.0 {
        return (0..p).collect();
    }
    let k = ((params.col_subsample * p as f64).ceil() as usize).clamp(1, p);
    let mut cols = sample(rng, p, k).into_vec();
    cols.sort_unstable();
    cols
}

/// Boosts on `train`. With `valid`, stops early on validation AUC and keeps
/// the trees up to the best round; without it, trains exactly
/// `n_rounds_max` rounds.
pub fn boost(
    train: &FeatureMatrix,
    labels: &[u8],
    valid: Option<(&FeatureMatrix, &[u8])>,
    params: &GbdtParams,
    seed: u64,
) -> Result<BoostOutcome> {
    params.validate()?;
    if train.n_rows != labels.len() {
        return Err(Error::invalid("training matrix and labels differ in length"));
    }
    let (wp, wn) = if params.balanced { class_weights(labels)? } else { (1.0, 1.0) };
    let w: Vec<f64> = labels.iter().map(|&y| if y == 1 { wp } else { wn }).collect();
    let sw1: f64 = w.iter().zip(labels).filter(|(_, &y)| y == 1).map(|(w, _)| w).sum();
    let sw0: f64 = w.iter().sum::<f64>() - sw1;
    if sw1 <= 0.0 || sw0 <= 0.0 {
        return Err(Error::invalid("boosting needs both classes"));
    }
    let base = (sw1 / sw0).ln();
    let binned = Binned::new(train, params.max_bins);
    let mut margin = vec![base; train.n_rows];
    let mut vmargin = valid.map(|(m, _)| vec![base; m.n_rows]);
    let mut out = BoostOutcome { base_margin: base, ..Default::default() };
    let mut best_auc = f64::NEG_INFINITY;
    for round in 0..params.n_rounds_max {
        let mut rng = substream(seed, &[tag::FIT, round as u64]);
        let (mut g, mut h): (Vec<f64>, Vec<f64>) = margin
            .iter()
            .zip(labels)
            .zip(&w)
            .map(|((&f, &y), &wi)| logistic_grad_hess(sigmoid(f), y, wi))
            .unzip();
        let (rows, mult) = sample_rows(params, &g, &mut rng);
        if params.goss.is_some() {
            for i in 0..g.len() {
                g[i] *= mult[i];
                h[i] *= mult[i];
            }
        }
        let cols = sample_cols(params, train.n_cols, &mut rng);
        let grower = Grower { binned: &binned, g: &g, h: &h, cols: &cols, p: params };
        let mut tree = grower.grow(rows);
        tree.scale_leaves(params.learning_rate);
        for (i, m) in margin.iter_mut().enumerate() {
            *m += tree.predict_row(train.row(i));
        }
        out.trees.push(tree);
        out.rounds_trained = round + 1;
        if let (Some((vm, vy)), Some(vmargin)) = (valid, vmargin.as_mut()) {
            let t = out.trees.last().expect("just pushed");
            for (i, m) in vmargin.iter_mut().enumerate() {
                *m += t.predict_row(vm.row(i));
            }
            let auc = roc_auc(vmargin, vy)?;
            out.trace.push(auc);
            if auc > best_auc {
                best_auc = auc;
                out.best_iteration = round + 1;
            } else if round + 1 - out.best_iteration >= params.early_stopping_rounds {
                break;
            }
        } else {
            out.best_iteration = round + 1;
        }
    }
    out.trees.truncate(out.best_iteration);
    Ok(out)
}

pub fn predict_margin(base: f64, trees: &[Tree], m: &FeatureMatrix) -> Vec<f64> {
    predict_margins(trees, base, m)
}
