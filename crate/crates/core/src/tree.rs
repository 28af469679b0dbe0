//! Exact greedy CART regression tree (squared error), used as a reference
//! regressor and as an independent signal probe for generated tasks.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    /// Fit with at most `max_depth` levels of splits and at least
    /// `min_leaf` rows per leaf. Rows go left when `x < threshold`.
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, max_depth: usize, min_leaf: usize) -> Self {
        assert_eq!(x.nrows(), y.len());
        let mut tree = RegressionTree { nodes: Vec::new() };
        let rows: Vec<usize> = (0..x.nrows()).collect();
        tree.grow(x, y, rows, max_depth, min_leaf.max(1));
        tree
    }

    fn grow(
        &mut self,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        rows: Vec<usize>,
        depth_left: usize,
        min_leaf: usize,
    ) -> usize {
        let id = self.nodes.len();
        let n = rows.len();
        let mean = if n == 0 { 0.0 } else { rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64 };
        self.nodes.push(TreeNode::Leaf(mean));
        if depth_left == 0 || n < 2 * min_leaf {
            return id;
        }
        let total: f64 = rows.iter().map(|&r| y[r]).sum();
        let base = total * total / n as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = rows.clone();
        for feature in 0..x.ncols() {
            sorted.sort_by(|&a, &b| x[[a, feature]].total_cmp(&x[[b, feature]]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += y[sorted[i]];
                let nl = i + 1;
                let (v, v_next) = (x[[sorted[i], feature]], x[[sorted[i + 1], feature]]);
                if nl < min_leaf || n - nl < min_leaf || v == v_next {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64
                    + right_sum * right_sum / (n - nl) as f64
                    - base;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, 0.5 * (v + v_next)));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&row| x[[row, feature]] < threshold);
        let left = self.grow(x, y, l, depth_left - 1, min_leaf);
        let right = self.grow(x, y, r, depth_left - 1, min_leaf);
        self.nodes[id] = TreeNode::Split { feature, threshold, left, right };
        id
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf(v) => return *v,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf(_) => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// In-sample coefficient of determination of `pred` against `y`.
pub fn r_squared(y: ArrayView1<f64>, pred: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.sum() / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - ss_res / ss_tot
}
