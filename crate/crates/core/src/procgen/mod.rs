//! Synthetic regression tasks from a structural-causal-model prior.
//!
//! A task is a random DAG whose non-root nodes are random-weight MLPs of
//! their parents plus Gaussian noise. Some nodes are exposed as features, one
//! as the target, and feature columns may be warped (quantized or
//! rank-gaussianized) to mimic ordinal and skewed real-world columns.

mod config;
mod materialize;
mod spec;

pub use config::{Activation, PriorConfig};
pub use materialize::materialize;
pub use spec::{sample_spec, DenseLayer, NodeFunction, RootDistribution, ScmNode, ScmSpec, Warp};

use crate::error::{Error, Result};
use crate::par;
use crate::rng::{derive, stream};
use crate::tabular::Dataset;

/// A generated dataset together with the spec that regenerates it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub dataset: Dataset,
    pub spec: ScmSpec,
}

/// Seed of task `index` in a batch generated from `seed`.
pub fn task_seed(seed: u64, index: usize) -> u64 {
    derive(seed, stream::BATCH_TASK, index as u64)
}

/// Generate `count` tasks. Task `i` depends only on `(config, seed, i)`, so a
/// longer batch extends a shorter one and scheduling never changes results.
pub fn generate_batch(config: &PriorConfig, count: usize, seed: u64) -> Result<Vec<SyntheticTask>> {
    if count == 0 {
        return Err(Error::InvalidArgument("batch count must be at least 1".into()));
    }
    generate_range(config, 0..count, seed)
}

/// Generate tasks `range` of the batch defined by `(config, seed)`.
pub fn generate_range(
    config: &PriorConfig,
    range: std::ops::Range<usize>,
    seed: u64,
) -> Result<Vec<SyntheticTask>> {
    config.validate()?;
    let start = range.start;
    par::try_map_range(range.len(), |k| {
        let index = start + k;
        let spec = sample_spec(config, task_seed(seed, index));
        materialize(&spec).map_err(|e| Error::Task { index, source: Box::new(e) })
    })
}
