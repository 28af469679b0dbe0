//! Miniature prior-data-fitted network for in-context tabular regression.

mod buckets;
pub mod checkpoint;
mod config;
mod embed;
mod gradcheck;
pub(crate) mod net;
mod train;
mod weights;

pub use buckets::{bucket_index, point_estimate, quantile_edges, PredictiveDistribution};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, CHECKPOINT_FORMAT};
pub use config::PfnConfig;
pub use embed::{embed_all, embed_dataset, embed_rows, read_embeddings, write_embeddings, DatasetEmbedding};
pub use gradcheck::{grad_check, loss_gradient, GradCheckReport};
pub use net::TaskView;
pub use train::{continued_pretrain, pretrain, split_mse, ContinuedOutcome, PretrainOutcome, CONTINUED_LR_FACTOR};
pub use weights::{LayerWeights, TensorRef, Weights};

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingStage {
    Init,
    BasePretrain,
    ContinuedPretrain,
}

/// How a set of weights came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: TrainingStage,
    /// Optimizer steps taken in this stage.
    pub steps: usize,
    /// Seed of this stage.
    pub seed: u64,
    /// Seed of the prior the tasks were drawn from, when pretraining.
    pub prior_seed: Option<u64>,
    /// Task visits in a continued-pretraining stage.
    pub task_visits: usize,
    /// Always false: only synthetic tasks are accepted for training.
    pub real_data_used: bool,
    /// Provenance of the starting weights.
    pub parent: Option<Box<Provenance>>,
}

impl Provenance {
    fn init(seed: u64) -> Self {
        Provenance {
            stage: TrainingStage::Init,
            steps: 0,
            seed,
            prior_seed: None,
            task_visits: 0,
            real_data_used: false,
            parent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfnModel {
    pub config: PfnConfig,
    pub weights: Weights,
    pub provenance: Provenance,
}

impl PfnModel {
    pub fn init(config: &PfnConfig) -> Result<Self> {
        config.validate()?;
        Ok(PfnModel {
            config: config.clone(),
            weights: Weights::init(config),
            provenance: Provenance::init(config.seed),
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.parameter_count()
    }

    /// Stable identifier: hex of the first 8 bytes of a SHA-256 over the
    /// 32-bit parameter values.
    pub fn id(&self) -> String {
        let mut h = Sha256::new();
        for (name, _, values) in self.weights.tensors() {
            h.update(name.as_bytes());
            for &v in values {
                h.update((v as f32).to_le_bytes());
            }
        }
        format!("pfn-{}", hex::encode(&h.finalize()[..8]))
    }

    fn check_task(&self, task: &TaskView<'_>) -> Result<()> {
        let f = task.context_x.ncols();
        if task.n_context() == 0 {
            return Err(Error::InvalidArgument("empty context".into()));
        }
        if f > self.config.max_features {
            return Err(Error::TooManyFeatures(f));
        }
        if task.query_x.nrows() > 0 && task.query_x.ncols() != f {
            return Err(Error::Shape(format!(
                "query width {} differs from context width {f}",
                task.query_x.ncols()
            )));
        }
        if task.context_y.len() != task.n_context() {
            return Err(Error::Shape(format!(
                "{} context targets for {} context rows",
                task.context_y.len(),
                task.n_context()
            )));
        }
        Ok(())
    }

    /// Predictive distributions for the queries and final representations of
    /// all rows (context first).
    pub fn forward<'a>(
        &self,
        context_x: ArrayView2<'a, f64>,
        context_y: ArrayView1<'a, f64>,
        query_x: ArrayView2<'a, f64>,
    ) -> Result<(Vec<PredictiveDistribution>, Array2<f64>)> {
        let task = TaskView { context_x, context_y, query_x };
        self.check_task(&task)?;
        let fwd = net::forward(&self.weights, &self.config, task, false);
        let edges = quantile_edges(&context_y.to_vec(), self.config.buckets);
        let probs = net::softmax_rows(&fwd.logits);
        let dists = probs
            .rows()
            .into_iter()
            .map(|p| PredictiveDistribution {
                bucket_edges: edges.clone(),
                probabilities: p.to_vec(),
            })
            .collect();
        Ok((dists, fwd.row_embeddings))
    }

    /// Point predictions for the queries.
    pub fn predict<'a>(
        &self,
        context_x: ArrayView2<'a, f64>,
        context_y: ArrayView1<'a, f64>,
        query_x: ArrayView2<'a, f64>,
    ) -> Result<Array1<f64>> {
        let (dists, _) = self.forward(context_x, context_y, query_x)?;
        Ok(dists.iter().map(point_estimate).collect())
    }

    /// Mean bucket cross-entropy of `query_y`.
    pub fn query_loss<'a>(
        &self,
        context_x: ArrayView2<'a, f64>,
        context_y: ArrayView1<'a, f64>,
        query_x: ArrayView2<'a, f64>,
        query_y: ArrayView1<f64>,
    ) -> Result<f64> {
        let task = TaskView { context_x, context_y, query_x };
        self.check_task(&task)?;
        Ok(net::loss(&self.weights, &self.config, task, query_y, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;
    use ndarray::{Array, Axis};
    use rand_distr::{Distribution, StandardNormal};

    fn random(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng(seed);
        Array::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut r))
    }

    fn small() -> PfnConfig {
        PfnConfig { d_model: 16, heads: 2, buckets: 8, max_features: 6, ..PfnConfig::default() }
    }

    #[test]
    fn default_parameter_count_matches_shape_arithmetic() {
        let c = PfnConfig::default();
        let (f, d, m, b, l) = (100, 192, 384, 32, 2);
        let encoder = f * d + d + d * d + d;
        let tokens = 3 * d;
        let layer = 2 * d + 4 * d * d + d + 2 * d + d * m + m + m * d + d;
        let expected = encoder + tokens + l * layer + 2 * d + d * b + b;
        assert_eq!(expected, 656_480);
        assert_eq!(PfnModel::init(&c).unwrap().parameter_count(), expected);
    }

    #[test]
    fn init_is_seeded() {
        let a = PfnModel::init(&small()).unwrap();
        let b = PfnModel::init(&small()).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.id(), b.id());
        let c = PfnModel::init(&PfnConfig { seed: 9, ..small() }).unwrap();
        assert_ne!(a.id(), c.id());
    }

    #[test]
    fn forward_rejects_bad_inputs() {
        let m = PfnModel::init(&small()).unwrap();
        let x = random(4, 7, 1);
        let y = Array1::zeros(4);
        assert!(matches!(m.forward(x.view(), y.view(), x.view()), Err(Error::TooManyFeatures(7))));
        let e = Array2::<f64>::zeros((0, 3));
        let ey = Array1::<f64>::zeros(0);
        assert!(m.forward(e.view(), ey.view(), random(2, 3, 1).view()).is_err());
    }

    #[test]
    fn query_outputs_are_independent_and_permutation_invariant() {
        let m = PfnModel::init(&small()).unwrap();
        let cx = random(20, 4, 2);
        let cy = random(20, 1, 3).column(0).to_owned();
        let qx = random(6, 4, 4);
        let (base, _) = m.forward(cx.view(), cy.view(), qx.view()).unwrap();
        for d in &base {
            assert!((d.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        // Reverse the context and the queries.
        let rc: Vec<usize> = (0..20).rev().collect();
        let rq: Vec<usize> = (0..6).rev().collect();
        let cx2 = cx.select(Axis(0), &rc);
        let cy2 = cy.select(Axis(0), &rc);
        let qx2 = qx.select(Axis(0), &rq);
        let (perm, _) = m.forward(cx2.view(), cy2.view(), qx2.view()).unwrap();
        for (i, d) in perm.iter().enumerate() {
            let o = &base[5 - i];
            for (a, b) in d.probabilities.iter().zip(&o.probabilities) {
                assert!((a - b).abs() < 1e-5);
            }
        }
        // A single query alone gives the same output.
        let (one, _) = m.forward(cx.view(), cy.view(), qx.slice(ndarray::s![2..3, ..])).unwrap();
        for (a, b) in one[0].probabilities.iter().zip(&base[2].probabilities) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
