use crate::error::{Error, Result};
use crate::tabular::MAX_ROWS;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfnConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    /// Number of output buckets.
    pub buckets: usize,
    /// Features are zero-padded to this width.
    pub max_features: usize,
    pub context_rows: usize,
    pub query_rows: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_tasks: usize,
    pub warmup_steps: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for PfnConfig {
    fn default() -> Self {
        PfnConfig {
            d_model: 192,
            layers: 2,
            heads: 4,
            ffn_mult: 2,
            buckets: 32,
            max_features: 100,
            context_rows: 256,
            query_rows: 128,
            learning_rate: 1e-3,
            steps: 2000,
            batch_tasks: 2,
            warmup_steps: 100,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

impl PfnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return bad(format!("d_model {} not divisible by heads {}", self.d_model, self.heads));
        }
        if self.layers == 0 || self.ffn_mult == 0 || self.max_features == 0 {
            return bad("layers, ffn_mult and max_features must be positive".into());
        }
        if self.buckets < 2 {
            return bad(format!("buckets {} < 2", self.buckets));
        }
        if self.context_rows == 0 || self.query_rows == 0 {
            return bad("context_rows and query_rows must be positive".into());
        }
        if self.context_rows + self.query_rows > MAX_ROWS {
            return bad(format!(
                "context_rows + query_rows = {} exceeds {MAX_ROWS}",
                self.context_rows + self.query_rows
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if self.batch_tasks == 0 {
            return bad("batch_tasks must be positive".into());
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be nonnegative".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn ffn_width(&self) -> usize {
        self.d_model * self.ffn_mult
    }

    /// Configuration used by the gradient check.
    pub fn tiny() -> Self {
        PfnConfig {
            d_model: 8,
            layers: 2,
            heads: 2,
            ffn_mult: 2,
            buckets: 4,
            max_features: 4,
            context_rows: 5,
            query_rows: 3,
            learning_rate: 1e-3,
            steps: 0,
            batch_tasks: 1,
            warmup_steps: 0,
            grad_clip: 0.0,
            seed: 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heads_must_divide_width() {
        PfnConfig::default().validate().unwrap();
        let c = PfnConfig { heads: 5, ..PfnConfig::default() };
        assert!(c.validate().is_err());
        let c = PfnConfig { buckets: 1, ..PfnConfig::default() };
        assert!(c.validate().is_err());
        let c = PfnConfig { context_rows: 1000, query_rows: 100, ..PfnConfig::default() };
        assert!(c.validate().is_err());
    }
}
