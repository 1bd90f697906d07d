use serde::{Deserialize, Serialize};

use crate::encode::{bin_index, build_histogram_bins, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub depth: usize,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value }], depth: 0 }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }

    /// Recomputes `depth` from the node links.
    pub(crate) fn refresh_depth(&mut self) {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        self.depth = walk(&self.nodes, 0);
    }
}

/// Column-major bin codes of a training matrix.
pub(crate) struct Binned {
    pub cols: Vec<Vec<u8>>,
    pub edges: Vec<Vec<f64>>,
}

impl Binned {
    pub fn new(matrix: &FeatureMatrix, max_bins: usize) -> Self {
        assert!((2..=256).contains(&max_bins), "max_bins must be in 2..=256");
        let edges = build_histogram_bins(matrix, max_bins);
        let cols = edges
            .iter()
            .enumerate()
            .map(|(j, e)| (0..matrix.n_rows).map(|i| bin_index(e, matrix.get(i, j)) as u8).collect())
            .collect();
        Binned { cols, edges }
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn n_bins(&self, j: usize) -> usize {
        self.edges[j].len() + 1
    }

    /// Float threshold equivalent to "bin <= t" for column `j`.
    pub fn threshold(&self, j: usize, t: usize) -> f64 {
        self.edges[j][t]
    }

    /// Splits `rows` into (bin <= t, bin > t), preserving order.
    pub fn partition(&self, rows: &[usize], j: usize, t: usize) -> (Vec<usize>, Vec<usize>) {
        let col = &self.cols[j];
        rows.iter().copied().partition(|&r| usize::from(col[r]) <= t)
    }
}
