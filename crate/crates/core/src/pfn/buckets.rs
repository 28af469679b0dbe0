use serde::{Deserialize, Serialize};

/// Categorical distribution over target intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    /// `B + 1` strictly ascending edges.
    pub bucket_edges: Vec<f64>,
    /// `B` probabilities summing to one.
    pub probabilities: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.bucket_edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }

    /// Expectation under bucket midpoints.
    pub fn point_estimate(&self) -> f64 {
        point_estimate(self)
    }
}

pub fn point_estimate(dist: &PredictiveDistribution) -> f64 {
    dist.probabilities
        .iter()
        .zip(dist.midpoints())
        .map(|(p, m)| p * m)
        .sum()
}

/// Bucket edges at the empirical quantiles `0, 1/B, ..., 1` of the context
/// targets (linear interpolation), nudged apart to be strictly ascending.
pub fn quantile_edges(context_targets: &[f64], buckets: usize) -> Vec<f64> {
    let mut sorted = context_targets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let span = (sorted[n - 1] - sorted[0]).abs().max(1.0);
    let eps = 1e-6 * span;
    let mut edges: Vec<f64> = (0..=buckets)
        .map(|j| {
            let pos = j as f64 / buckets as f64 * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + frac * (sorted[hi] - sorted[lo])
        })
        .collect();
    for j in 1..edges.len() {
        if edges[j] <= edges[j - 1] {
            edges[j] = edges[j - 1] + eps;
        }
    }
    edges
}

/// Index of the bucket containing `y`; values outside the edges are clamped
/// to the first or last bucket.
pub fn bucket_index(edges: &[f64], y: f64) -> usize {
    let b = edges.len() - 1;
    edges[..b].partition_point(|&e| e <= y).saturating_sub(1).min(b - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(edges: Vec<f64>, probabilities: Vec<f64>) -> PredictiveDistribution {
        PredictiveDistribution { bucket_edges: edges, probabilities }
    }

    #[test]
    fn point_estimates() {
        assert_eq!(dist(vec![0.0, 1.0, 2.0], vec![1.0, 0.0]).point_estimate(), 0.5);
        let sym = dist(vec![-2.0, -1.0, 1.0, 2.0], vec![0.3, 0.4, 0.3]);
        assert!(sym.point_estimate().abs() < 1e-15);
        let d = dist(vec![-1.5, -0.5, 1.5], vec![0.25, 0.75]);
        // midpoints -1 and 0.5: weights give -0.25 + 0.375
        assert!((d.point_estimate() - 0.125).abs() < 1e-15);
        let d = dist(vec![-2.0, 0.0, 2.0], vec![0.25, 0.75]);
        assert!((d.point_estimate() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn edges_are_strictly_ascending_with_ties() {
        let y = [1.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        let e = quantile_edges(&y, 8);
        assert_eq!(e.len(), 9);
        assert!(e.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(e[0], 1.0);
    }

    #[test]
    fn bucket_lookup() {
        let e = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(bucket_index(&e, -5.0), 0);
        assert_eq!(bucket_index(&e, 0.0), 0);
        assert_eq!(bucket_index(&e, 1.0), 1);
        assert_eq!(bucket_index(&e, 2.5), 2);
        assert_eq!(bucket_index(&e, 3.0), 2);
        assert_eq!(bucket_index(&e, 9.0), 2);
    }
}
