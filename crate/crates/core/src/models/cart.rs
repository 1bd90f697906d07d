//! Weighted Gini classification trees on histogram bins, with
//! cost-complexity pruning.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gbdt::clamp_prob;
use super::tree::{Binned, Node, Tree};
use crate::dataio::stratified_kfold;
use crate::encode::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Columns examined per node; `None` means all.
    pub max_features: Option<usize>,
    /// Laplace-style smoothing of leaf probabilities.
    pub smooth_leaves: bool,
    pub max_bins: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams {
            max_depth: 8,
            min_samples_leaf: 1,
            min_samples_split: 2,
            max_features: None,
            smooth_leaves: true,
            max_bins: 255,
        }
    }
}

pub fn gini(w0: f64, w1: f64) -> f64 {
    let w = w0 + w1;
    if w <= 0.0 {
        return 0.0;
    }
    let (p0, p1) = (w0 / w, w1 / w);
    1.0 - p0 * p0 - p1 * p1
}

/// Weighted class mass and row count of a node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct NodeStats {
    pub w0: f64,
    pub w1: f64,
    pub n: usize,
}

/// A grown tree together with per-node statistics, ready for pruning.
pub(crate) struct GrownTree {
    pub nodes: Vec<Node>,
    pub stats: Vec<NodeStats>,
    pub total_weight: f64,
    pub mean_weight: f64,
    pub smooth: bool,
}

struct Grow<'a> {
    binned: &'a Binned,
    y: &'a [u8],
    w: &'a [f64],
    p: &'a CartParams,
}

impl Grow<'_> {
    fn stats(&self, rows: &[usize]) -> NodeStats {
        let mut s = NodeStats::default();
        for &r in rows {
            if self.y[r] == 1 {
                s.w1 += self.w[r];
            } else {
                s.w0 += self.w[r];
            }
        }
        s.n = rows.len();
        s
    }

    /// Best (column, bin) by weighted Gini decrease; ties keep the lowest
    /// column, then the lowest bin.
    fn best_split(&self, rows: &[usize], s: NodeStats, cols: &[usize]) -> Option<(usize, usize)> {
        let parent = gini(s.w0, s.w1);
        let total = s.w0 + s.w1;
        let msl = self.p.min_samples_leaf.max(1);
        let mut best: Option<(usize, usize, f64)> = None;
        for &j in cols {
            let col = &self.binned.cols[j];
            let mut hist = vec![(0.0f64, 0.0f64, 0usize); self.binned.n_bins(j)];
            for &r in rows {
                let b = &mut hist[usize::from(col[r])];
                if self.y[r] == 1 {
                    b.1 += self.w[r];
                } else {
                    b.0 += self.w[r];
                }
                b.2 += 1;
            }
            let (mut l0, mut l1, mut ln) = (0.0, 0.0, 0usize);
            for (t, b) in hist.iter().enumerate().take(hist.len() - 1) {
                l0 += b.0;
                l1 += b.1;
                ln += b.2;
                let rn = s.n - ln;
                if ln < msl || rn < msl {
                    continue;
                }
                let (r0, r1) = (s.w0 - l0, s.w1 - l1);
                let gain = parent
                    - ((l0 + l1) / total) * gini(l0, l1)
                    - ((r0 + r1) / total) * gini(r0, r1);
                if best.is_none_or(|(_, _, g)| gain > g + 1e-15) {
                    best = Some((j, t, gain));
                }
            }
        }
        best.map(|(j, t, _)| (j, t))
    }

    fn grow(&self, rows: Vec<usize>, mut rng: Option<&mut RandomStream>) -> (Vec<Node>, Vec<NodeStats>) {
        let mut nodes = vec![Node::Leaf { value: 0.0 }];
        let mut stats = vec![self.stats(&rows)];
        let mut stack = vec![(0usize, rows, 0usize)];
        let p = self.binned.n_cols();
        while let Some((id, rows, depth)) = stack.pop() {
            let s = stats[id];
            if depth >= self.p.max_depth
                || s.n < self.p.min_samples_split.max(2)
                || gini(s.w0, s.w1) <= 0.0
            {
                continue;
            }
            let cols: Vec<usize> = match (self.p.max_features, rng.as_deref_mut()) {
                (Some(k), Some(rng)) if k < p => {
                    let mut c = sample(rng, p, k).into_vec();
                    c.sort_unstable();
                    c
                }
                _ => (0..p).collect(),
            };
            let Some((j, t)) = self.best_split(&rows, s, &cols) else { continue };
            let (lr, rr) = self.binned.partition(&rows, j, t);
            let left = nodes.len();
            nodes.push(Node::Leaf { value: 0.0 });
            nodes.push(Node::Leaf { value: 0.0 });
            stats.push(self.stats(&lr));
            stats.push(self.stats(&rr));
            nodes[id] = Node::Split { feature: j, threshold: self.binned.threshold(j, t), left, right: left + 1 };
            // Right first so the left subtree is expanded first.
            stack.push((left + 1, rr, depth + 1));
            stack.push((left, lr, depth + 1));
        }
        (nodes, stats)
    }
}

pub(crate) fn grow_tree(
    binned: &Binned,
    y: &[u8],
    w: &[f64],
    rows: Vec<usize>,
    params: &CartParams,
    rng: Option<&mut RandomStream>,
) -> GrownTree {
    let g = Grow { binned, y, w, p: params };
    let total_weight: f64 = rows.iter().map(|&r| w[r]).sum();
    let mean_weight = if rows.is_empty() { 1.0 } else { total_weight / rows.len() as f64 };
    let (nodes, stats) = g.grow(rows, rng);
    GrownTree { nodes, stats, total_weight, mean_weight, smooth: params.smooth_leaves }
}

impl GrownTree {
    fn leaf_value(&self, s: NodeStats) -> f64 {
        if self.smooth {
            let a = self.mean_weight;
            (s.w1 + a) / (s.w0 + s.w1 + 2.0 * a)
        } else if s.w0 + s.w1 > 0.0 {
            s.w1 / (s.w0 + s.w1)
        } else {
            0.5
        }
    }

    /// Resubstitution cost of a node as a leaf.
    fn risk(&self, i: usize) -> f64 {
        let s = self.stats[i];
        (s.w0 + s.w1) / self.total_weight * gini(s.w0, s.w1)
    }

    /// (subtree risk, leaf count) with `collapsed` nodes treated as leaves.
    fn subtree(&self, i: usize, collapsed: &[bool], memo: &mut [(f64, usize)]) -> (f64, usize) {
        let r = match self.nodes[i] {
            Node::Split { left, right, .. } if !collapsed[i] => {
                let a = self.subtree(left, collapsed, memo);
                let b = self.subtree(right, collapsed, memo);
                (a.0 + b.0, a.1 + b.1)
            }
            _ => (self.risk(i), 1),
        };
        memo[i] = r;
        r
    }

    /// Weakest link among live internal nodes: (node, g(t)).
    fn weakest_link(&self, collapsed: &[bool]) -> Option<(usize, f64)> {
        let mut memo = vec![(0.0, 0); self.nodes.len()];
        self.subtree(0, collapsed, &mut memo);
        let mut best: Option<(usize, f64)> = None;
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            if let Node::Split { left, right, .. } = self.nodes[i] {
                if collapsed[i] {
                    continue;
                }
                let (rt, leaves) = memo[i];
                let g = (self.risk(i) - rt) / (leaves as f64 - 1.0);
                if best.is_none_or(|(bi, bg)| g < bg - 1e-15 || (g <= bg + 1e-15 && i < bi)) {
                    best = Some((i, g));
                }
                stack.push(left);
                stack.push(right);
            }
        }
        best
    }

    /// Effective alphas of the minimal cost-complexity pruning path,
    /// starting with 0 for the full tree.
    pub fn pruning_path(&self) -> Vec<f64> {
        let mut collapsed = vec![false; self.nodes.len()];
        let mut path = vec![0.0];
        while let Some((i, g)) = self.weakest_link(&collapsed) {
            let last = *path.last().expect("non-empty");
            path.push(g.max(last));
            collapsed[i] = true;
        }
        path
    }

    /// Optimal subtree for `alpha`.
    pub fn prune(&self, alpha: f64) -> Tree {
        let mut collapsed = vec![false; self.nodes.len()];
        while let Some((i, g)) = self.weakest_link(&collapsed) {
            if g > alpha + 1e-12 {
                break;
            }
            collapsed[i] = true;
        }
        self.compact(&collapsed)
    }

    pub fn unpruned(&self) -> Tree {
        self.compact(&vec![false; self.nodes.len()])
    }

    fn compact(&self, collapsed: &[bool]) -> Tree {
        let mut out = Vec::new();
        fn copy(t: &GrownTree, i: usize, collapsed: &[bool], out: &mut Vec<Node>) -> usize {
            let id = out.len();
            match t.nodes[i] {
                Node::Split { feature, threshold, left, right } if !collapsed[i] => {
                    out.push(Node::Leaf { value: 0.0 });
                    let l = copy(t, left, collapsed, out);
                    let r = copy(t, right, collapsed, out);
                    out[id] = Node::Split { feature, threshold, left: l, right: r };
                }
                _ => out.push(Node::Leaf { value: t.leaf_value(t.stats[i]) }),
            }
            id
        }
        copy(self, 0, collapsed, &mut out);
        let mut tree = Tree { nodes: out, depth: 0 };
        tree.refresh_depth();
        tree
    }
}

fn weighted_log_loss(tree: &Tree, m: &FeatureMatrix, rows: &[usize], y: &[u8], w: &[f64]) -> f64 {
    rows.iter()
        .map(|&r| {
            let p = clamp_prob(tree.predict_row(m.row(r)));
            -w[r] * if y[r] == 1 { p.ln() } else { (1.0 - p).ln() }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedTree {
    pub tree: Tree,
    pub alpha: f64,
    pub candidate_alphas: Vec<f64>,
}

/// Grows a tree and prunes it at the alpha minimising `cv_folds`-fold
/// inner cross-validated log-loss. Too few rows per class for the inner
/// folds leaves the tree unpruned.
pub fn fit_pruned_tree(
    m: &FeatureMatrix,
    y: &[u8],
    w: &[f64],
    params: &CartParams,
    cv_folds: usize,
    seed: u64,
) -> Result<PrunedTree> {
    if m.n_rows != y.len() || y.len() != w.len() {
        return Err(Error::invalid("matrix, labels and weights differ in length"));
    }
    let pos = y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::invalid("decision tree needs both classes"));
    }
    let binned = Binned::new(m, params.max_bins);
    let full = grow_tree(&binned, y, w, (0..m.n_rows).collect(), params, None);
    let path = full.pruning_path();
    let mut candidates = vec![0.0];
    for pair in path.windows(2) {
        candidates.push((pair[0] * pair[1]).sqrt());
    }
    if let Some(&last) = path.last() {
        candidates.push(last);
    }
    candidates.dedup();
    if cv_folds < 2 || pos < cv_folds || y.len() - pos < cv_folds {
        return Ok(PrunedTree { tree: full.unpruned(), alpha: 0.0, candidate_alphas: candidates });
    }
    let plan = stratified_kfold(y, cv_folds, seed)?;
    let mut losses = vec![0.0; candidates.len()];
    for f in 0..cv_folds {
        let train = plan.train_indices(f);
        let test = plan.test_indices(f);
        let sub = m.select_rows(&train);
        let sy: Vec<u8> = train.iter().map(|&i| y[i]).collect();
        let sw: Vec<f64> = train.iter().map(|&i| w[i]).collect();
        let sb = Binned::new(&sub, params.max_bins);
        let grown = grow_tree(&sb, &sy, &sw, (0..sub.n_rows).collect(), params, None);
        for (k, &a) in candidates.iter().enumerate() {
            losses[k] += weighted_log_loss(&grown.prune(a), m, &test, y, w);
        }
    }
    // Ties go to the larger alpha, i.e. the smaller tree.
    let mut best = 0;
    for k in 1..candidates.len() {
        if losses[k] <= losses[best] + 1e-12 {
            best = k;
        }
    }
    let alpha = candidates[best];
    Ok(PrunedTree { tree: full.prune(alpha), alpha, candidate_alphas: candidates })
}

/// Class-balanced bootstrap: each draw picks a class by a fair coin, then a
/// row of that class uniformly.
pub(crate) fn balanced_bootstrap(pos: &[usize], neg: &[usize], rng: &mut RandomStream) -> Vec<usize> {
    let n = pos.len() + neg.len();
    (0..n)
        .map(|_| {
            let class = if rng.random_bool(0.5) { pos } else { neg };
            class[rng.random_range(0..class.len())]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> FeatureMatrix {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        FeatureMatrix::from_rows(&rows, vec!["x".into(), "z".into()]).unwrap()
    }

    #[test]
    fn gini_identities() {
        assert_eq!(gini(50.0, 50.0), 0.5);
        assert_eq!(gini(10.0, 0.0), 0.0);
    }

    #[test]
    fn pure_input_is_a_single_leaf() {
        let x = m(&[[1.0, 2.0], [2.0, 3.0], [3.0, 1.0]]);
        let y = [1, 1, 1];
        let b = Binned::new(&x, 255);
        let t = grow_tree(&b, &y, &[1.0; 3], vec![0, 1, 2], &CartParams::default(), None).unpruned();
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn xor_is_fit_exactly_at_depth_two() {
        let x = m(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]);
        let y = [0, 1, 1, 0];
        let params = CartParams { max_depth: 2, ..CartParams::default() };
        let fit = fit_pruned_tree(&x, &y, &[1.0; 4], &params, 5, 0).unwrap();
        for i in 0..4 {
            let p = fit.tree.predict_row(x.row(i));
            assert_eq!(u8::from(p > 0.5), y[i]);
        }
        assert!(fit.tree.depth <= 2);
    }

    #[test]
    fn pruning_path_is_monotone_and_ends_at_root() {
        let rows: Vec<[f64; 2]> = (0..60).map(|i| [f64::from(i), f64::from((i * 7) % 11)]).collect();
        let y: Vec<u8> = (0..60).map(|i| u8::from((i * 13) % 5 < 2)).collect();
        let x = m(&rows);
        let b = Binned::new(&x, 255);
        let g = grow_tree(&b, &y, &vec![1.0; 60], (0..60).collect(), &CartParams::default(), None);
        let path = g.pruning_path();
        assert!(path.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(g.prune(*path.last().unwrap() + 1.0).nodes.len(), 1);
        let full = g.unpruned();
        let pruned = g.prune(path[path.len() / 2]);
        assert!(pruned.n_leaves() <= full.n_leaves());
        assert!(full.depth <= 8);
    }

    #[test]
    fn cross_validated_pruning_stays_within_depth() {
        let rows: Vec<[f64; 2]> = (0..200).map(|i| [f64::from(i % 17), f64::from((i * 7) % 29)]).collect();
        let y: Vec<u8> = rows.iter().map(|r| u8::from(r[0] > 8.0)).collect();
        let x = m(&rows);
        let fit = fit_pruned_tree(&x, &y, &vec![1.0; 200], &CartParams::default(), 5, 1).unwrap();
        assert!(fit.tree.depth <= 8);
        // A clean one-split rule survives pruning with a perfect ranking.
        let correct = (0..200).filter(|&i| u8::from(fit.tree.predict_row(x.row(i)) > 0.5) == y[i]).count();
        assert_eq!(correct, 200);
    }
}
