use crate::error::{Error, Result};
use crate::tabular::MAX_FEATURES;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sine,
    Absolute,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Tanh,
        Activation::Relu,
        Activation::Sine,
        Activation::Absolute,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sine => x.sin(),
            Activation::Absolute => x.abs(),
        }
    }
}

/// Ranges the task generator samples from. Integer ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub feature_count_range: [usize; 2],
    pub rows: usize,
    /// Nodes beyond the feature count; the target is one of them, so the node
    /// count is `F + extra` with `extra` drawn from this range.
    pub extra_node_range: [usize; 2],
    pub mlp_width_range: [usize; 2],
    /// Number of hidden layers in each node MLP.
    pub mlp_depth_range: [usize; 2],
    pub activations: Vec<Activation>,
    /// Log-uniform range of per-node noise scales (relative to a standardized signal).
    pub noise_scale_range: [f64; 2],
    pub warp_probability: f64,
    /// Probability that a node after the first is an extra root.
    pub root_probability: f64,
    pub max_parents: usize,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            feature_count_range: [2, 100],
            rows: 1024,
            extra_node_range: [1, 8],
            mlp_width_range: [4, 16],
            mlp_depth_range: [1, 3],
            activations: Activation::ALL.to_vec(),
            noise_scale_range: [0.01, 0.5],
            warp_probability: 0.3,
            root_probability: 0.2,
            max_parents: 3,
            seed: 0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let ranges = [
            ("feature_count_range", self.feature_count_range),
            ("extra_node_range", self.extra_node_range),
            ("mlp_width_range", self.mlp_width_range),
            ("mlp_depth_range", self.mlp_depth_range),
        ];
        for (name, [lo, hi]) in ranges {
            if lo > hi {
                return bad(format!("{name}: empty range [{lo}, {hi}]"));
            }
        }
        let [flo, fhi] = self.feature_count_range;
        if flo < 2 || fhi > MAX_FEATURES {
            return bad(format!("feature_count_range [{flo}, {fhi}] not within [2, {MAX_FEATURES}]"));
        }
        if self.rows < 2 {
            return bad(format!("rows {} < 2", self.rows));
        }
        if self.extra_node_range[0] < 1 {
            return bad("extra_node_range must start at 1 or more (the target needs a node)".into());
        }
        if self.mlp_width_range[0] < 1 || self.mlp_depth_range[0] < 1 {
            return bad("mlp width and depth must be at least 1".into());
        }
        let [nlo, nhi] = self.noise_scale_range;
        if !(nlo > 0.0 && nlo <= nhi && nhi.is_finite()) {
            return bad(format!("noise_scale_range [{nlo}, {nhi}] must be positive and ordered"));
        }
        if !(0.0..=1.0).contains(&self.warp_probability) || !(0.0..=1.0).contains(&self.root_probability) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if self.activations.is_empty() {
            return bad("activation set is empty".into());
        }
        if self.max_parents < 1 {
            return bad("max_parents must be at least 1".into());
        }
        Ok(())
    }

    pub fn with_rows(mut self, rows: usize) -> Self {
        self.rows = rows;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_bad_ranges_are_caught() {
        PriorConfig::default().validate().unwrap();
        let mut c = PriorConfig::default();
        c.feature_count_range = [1, 5];
        assert!(c.validate().is_err());
        let mut c = PriorConfig::default();
        c.mlp_width_range = [8, 4];
        assert!(c.validate().is_err());
        let mut c = PriorConfig::default();
        c.rows = 1;
        assert!(c.validate().is_err());
        let mut c = PriorConfig::default();
        c.activations.clear();
        assert!(c.validate().is_err());
    }
}
