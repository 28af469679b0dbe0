//! Second-order gradient boosting with histogram splits and a softmax
//! objective, one tree per class per round.

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{stream, sub_rng};
use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

pub const MAX_BINS: usize = 256;
const HESSIAN_EPS: f64 = 1e-16;
/// Below this many `rows * features`, split search stays on one thread.
const PAR_WORK: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub colsample_bytree: f64,
    pub min_child_weight: f64,
    pub reg_lambda: f64,
    pub gamma: f64,
    pub reg_alpha: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    /// The best configuration found by the original search.
    fn default() -> Self {
        GbtConfig {
            n_estimators: 1700,
            learning_rate: 0.0158,
            max_depth: 7,
            subsample: 0.903,
            colsample_bytree: 0.622,
            min_child_weight: 3.84,
            reg_lambda: 3.12,
            gamma: 0.630,
            reg_alpha: 0.00406,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.max_depth >= 1
            && self.subsample > 0.0
            && self.subsample <= 1.0
            && self.colsample_bytree > 0.0
            && self.colsample_bytree <= 1.0
            && self.min_child_weight >= 0.0
            && self.reg_lambda >= 0.0
            && self.gamma >= 0.0
            && self.reg_alpha >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid boosting config {self:?}")))
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GbtNode {
    Leaf { value: f64 },
    /// Rows with `x[feature] < threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtTree {
    /// Node 0 is the root.
    pub nodes: Vec<GbtNode>,
}

impl GbtTree {
    pub fn predict(&self, x: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                GbtNode::Leaf { value } => return value,
                GbtNode::Split { feature, threshold, left, right } => {
                    i = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[GbtNode], i: usize) -> usize {
            match nodes[i] {
                GbtNode::Leaf { .. } => 0,
                GbtNode::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    /// `trees[round][class]`.
    pub trees: Vec<Vec<GbtTree>>,
    pub n_classes: usize,
    pub n_features: usize,
    pub base_score: f64,
    pub config: GbtConfig,
}

impl GbtEnsemble {
    pub fn margins(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let mut m = vec![self.base_score; self.n_classes];
        for round in &self.trees {
            for (k, t) in round.iter().enumerate() {
                m[k] += t.predict(x);
            }
        }
        m
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::Shape(format!("embedding width {} but model expects {}", x.len(), self.n_features)));
        }
        Ok(softmax(&self.margins(ArrayView1::from(x))))
    }

    /// Class probabilities for every row of `x`.
    pub fn predict_proba_rows(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::Shape(format!("width {} but model expects {}", x.ncols(), self.n_features)));
        }
        let rows = par::map_range(x.nrows(), |i| softmax(&self.margins(x.row(i))));
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (mut r, p) in out.rows_mut().into_iter().zip(rows) {
            r.assign(&ArrayView1::from(&p[..]));
        }
        Ok(out)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        let p = self.predict_proba(x)?;
        Ok(argmax(&p))
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

fn softmax(m: &[f64]) -> Vec<f64> {
    let max = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = m.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Per-feature cut points: at most `MAX_BINS - 1` ascending thresholds placed
/// between distinct values, at quantiles when there are too many.
fn cut_points(col: ArrayView1<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = col.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mids: Vec<f64> = v.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if mids.len() < MAX_BINS {
        return mids;
    }
    let m = MAX_BINS - 1;
    let mut cuts: Vec<f64> = (1..=m).map(|j| mids[(j * mids.len()) / (m + 1)]).collect();
    cuts.dedup();
    cuts
}

struct Binned {
    /// Row-major `n x f` bin codes.
    codes: Vec<u8>,
    n_features: usize,
    cuts: Vec<Vec<f64>>,
}

impl Binned {
    fn new(x: ArrayView2<f64>) -> Self {
        let cuts: Vec<Vec<f64>> = (0..x.ncols()).map(|j| cut_points(x.column(j))).collect();
        let mut codes = Vec::with_capacity(x.len());
        for row in x.rows() {
            for (j, &v) in row.iter().enumerate() {
                codes.push(cuts[j].partition_point(|&c| c <= v) as u8);
            }
        }
        Binned { codes, n_features: x.ncols(), cuts }
    }

    #[inline]
    fn code(&self, row: usize, feature: usize) -> usize {
        self.codes[row * self.n_features + feature] as usize
    }
}

#[inline]
fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

struct Builder<'a> {
    data: &'a Binned,
    grad: &'a [f64],
    hess: &'a [f64],
    features: Vec<usize>,
    config: &'a GbtConfig,
    nodes: Vec<GbtNode>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    bin: usize,
}

impl Builder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let t = soft_threshold(g, self.config.reg_alpha);
        t * t / (h + self.config.reg_lambda)
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.config.reg_lambda;
        if denom <= 0.0 {
            return 0.0;
        }
        -self.config.learning_rate * soft_threshold(g, self.config.reg_alpha) / denom
    }

    fn best_for_feature(&self, rows: &[usize], feature: usize, g: f64, h: f64) -> Option<Candidate> {
        let n_bins = self.data.cuts[feature].len() + 1;
        if n_bins < 2 {
            return None;
        }
        let mut hg = vec![0.0; n_bins];
        let mut hh = vec![0.0; n_bins];
        let mut hc = vec![0usize; n_bins];
        for &r in rows {
            let b = self.data.code(r, feature);
            hg[b] += self.grad[r];
            hh[b] += self.hess[r];
            hc[b] += 1;
        }
        let parent = self.score(g, h);
        let mcw = self.config.min_child_weight;
        let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0);
        let mut best: Option<Candidate> = None;
        // Split "bin < b" for b in 1..n_bins.
        for b in 1..n_bins {
            gl += hg[b - 1];
            hl += hh[b - 1];
            cl += hc[b - 1];
            let (gr, hr) = (g - gl, h - hl);
            if cl == 0 || cl == rows.len() || hl < mcw || hr < mcw {
                continue;
            }
            let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent) - self.config.gamma;
            if gain > 0.0 && best.is_none_or(|c| gain > c.gain) {
                best = Some(Candidate { gain, feature, bin: b });
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        let id = self.nodes.len();
        self.nodes.push(GbtNode::Leaf { value: self.leaf_value(g, h) });
        if depth >= self.config.max_depth || rows.len() < 2 {
            return id;
        }
        let this = &*self;
        let per_feature = if rows.len() * this.features.len() >= PAR_WORK {
            par::map_slice(&this.features, |&f| this.best_for_feature(&rows, f, g, h))
        } else {
            this.features.iter().map(|&f| this.best_for_feature(&rows, f, g, h)).collect()
        };
        // Reduce in feature order so ties resolve the same way on any schedule.
        let mut best: Option<Candidate> = None;
        for c in per_feature.into_iter().flatten() {
            if best.is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
        let Some(best) = best else { return id };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.data.code(r, best.feature) < best.bin);
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[id] = GbtNode::Split {
            feature: best.feature,
            threshold: self.data.cuts[best.feature][best.bin - 1],
            left,
            right,
        };
        id
    }
}

fn check_inputs(x: ArrayView2<f64>, labels: &[usize]) -> Result<usize> {
    if x.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), labels.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature value".into()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let present = (0..n_classes).filter(|c| labels.contains(c)).count();
    if present < 2 {
        return Err(Error::InvalidArgument("need at least two classes".into()));
    }
    Ok(n_classes)
}

/// Fit a boosted ensemble on rows of `x` with class indices `labels`.
pub fn train_gbt(x: ArrayView2<f64>, labels: &[usize], config: &GbtConfig) -> Result<GbtEnsemble> {
    config.validate()?;
    let n_classes = check_inputs(x, labels)?;
    let n = x.nrows();
    let data = Binned::new(x);
    // Constant columns never split; keeping them out of column sampling makes
    // the model independent of them.
    let usable: Vec<usize> = (0..x.ncols()).filter(|&j| !data.cuts[j].is_empty()).collect();
    let n_rows = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let n_cols = ((config.colsample_bytree * usable.len() as f64).round() as usize).clamp(1, usable.len().max(1));

    let mut margins = vec![0.0; n * n_classes];
    let mut trees = Vec::with_capacity(config.n_estimators);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for round in 0..config.n_estimators {
        let probs: Vec<Vec<f64>> = (0..n).map(|i| softmax(&margins[i * n_classes..(i + 1) * n_classes])).collect();
        let mut round_trees = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            for i in 0..n {
                let p = probs[i][k];
                grad[i] = p - f64::from(u8::from(labels[i] == k));
                hess[i] = (2.0 * p * (1.0 - p)).max(HESSIAN_EPS);
            }
            let tree_index = (round * n_classes + k) as u64;
            let mut rows =
                sample_indices(&mut sub_rng(config.seed, stream::GBT_ROWS, tree_index), n, n_rows).into_vec();
            rows.sort_unstable();
            let features = if usable.is_empty() {
                Vec::new()
            } else {
                let mut r = sub_rng(config.seed, stream::GBT_COLS, tree_index);
                let mut f: Vec<usize> =
                    sample_indices(&mut r, usable.len(), n_cols).into_iter().map(|i| usable[i]).collect();
                f.sort_unstable();
                f
            };
            let mut b = Builder { data: &data, grad: &grad, hess: &hess, features, config, nodes: Vec::new() };
            b.build(rows, 0);
            round_trees.push(GbtTree { nodes: b.nodes });
        }
        for (i, row) in x.rows().into_iter().enumerate() {
            for (k, t) in round_trees.iter().enumerate() {
                margins[i * n_classes + k] += t.predict(row);
            }
        }
        trees.push(round_trees);
    }
    Ok(GbtEnsemble { trees, n_classes, n_features: x.ncols(), base_score: 0.0, config: config.clone() })
}
