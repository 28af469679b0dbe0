//! Pretraining on fresh prior tasks and continued pretraining on a fixed task
//! list, both with Adam on the bucket cross-entropy.

use crate::error::{Error, Result};
use crate::par;
use crate::pfn::net::{self, TaskView};
use crate::pfn::{PfnConfig, PfnModel, Provenance, TrainingStage, Weights};
use crate::procgen::{materialize, sample_spec, PriorConfig, SyntheticTask};
use crate::rng::{derive, stream, sub_rng};
use crate::tabular::{Dataset, DomainLabel};
use ndarray::s;
use rand::seq::{index::sample as sample_indices, SliceRandom};

/// Continued pretraining runs at this fraction of the base learning rate.
pub const CONTINUED_LR_FACTOR: f64 = 0.1;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
/// The cosine schedule decays to this fraction of the peak rate.
const FINAL_LR_FRACTION: f64 = 0.1;
const MAX_TASK_ATTEMPTS: u64 = 16;

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: PfnModel,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ContinuedOutcome {
    pub model: PfnModel,
    pub losses: Vec<f64>,
    pub task_visits: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            *p = *p as f32 as f64;
        }
    }
}

/// Linear warmup then cosine decay.
fn schedule(config: &PfnConfig, step: usize) -> f64 {
    let lr = config.learning_rate;
    if step < config.warmup_steps {
        return lr * (step + 1) as f64 / config.warmup_steps as f64;
    }
    let span = config.steps.saturating_sub(config.warmup_steps).max(1) as f64;
    let progress = ((step - config.warmup_steps) as f64 / span).min(1.0);
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    lr * (FINAL_LR_FRACTION + (1.0 - FINAL_LR_FRACTION) * cos)
}

fn clip(grads: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
}

/// Split a dataset's rows `[0, ctx)` and `[ctx, ctx + query)` into a task and
/// return the query loss and gradient.
fn task_grad(weights: &Weights, config: &PfnConfig, data: &Dataset, rows: &[usize]) -> (f64, Vec<f64>) {
    let (x, y) = data.select_rows(rows);
    let c = config.context_rows;
    let task = TaskView {
        context_x: x.slice(s![..c, ..]),
        context_y: y.slice(s![..c]),
        query_x: x.slice(s![c.., ..]),
    };
    let (loss, grad) = net::loss_and_grad(weights, config, task, y.slice(s![c..]), 1.0);
    (loss, grad.to_flat())
}

/// One optimizer step over a batch of per-task gradients. Gradients are summed
/// in batch order so results do not depend on thread scheduling.
fn apply_batch(
    weights: &mut Weights,
    adam: &mut Adam,
    results: Vec<(f64, Vec<f64>)>,
    config: &PfnConfig,
    lr: f64,
    step: usize,
) -> Result<f64> {
    let b = results.len() as f64;
    let mut loss = 0.0;
    let mut grads = vec![0.0; adam.m.len()];
    for (l, g) in &results {
        loss += l / b;
        for (acc, gi) in grads.iter_mut().zip(g) {
            *acc += gi / b;
        }
    }
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { step });
    }
    clip(&mut grads, config.grad_clip);
    let mut params = weights.to_flat();
    adam.step(&mut params, &grads, lr);
    weights.load_flat(&params);
    Ok(loss)
}

/// A fresh prior task with exactly `context_rows + query_rows` rows. Rare
/// degenerate draws are replaced by reseeding.
fn step_task(prior: &PriorConfig, base_seed: u64, index: u64) -> Result<SyntheticTask> {
    let seed = derive(base_seed, stream::PFN_STEP_TASK, index);
    let mut last = None;
    for attempt in 0..MAX_TASK_ATTEMPTS {
        let spec = sample_spec(prior, derive(seed, stream::PFN_STEP_TASK, attempt));
        match materialize(&spec) {
            Ok(t) => return Ok(t),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::Task { index: index as usize, source: Box::new(last.expect("at least one attempt")) })
}

/// Train from initialization on `steps` batches of fresh prior tasks.
pub fn pretrain(config: &PfnConfig, prior: &PriorConfig) -> Result<PretrainOutcome> {
    config.validate()?;
    prior.validate()?;
    if prior.feature_count_range[1] > config.max_features {
        return Err(Error::InvalidConfig(format!(
            "prior yields up to {} features but the network accepts {}",
            prior.feature_count_range[1], config.max_features
        )));
    }
    let prior = prior.clone().with_rows(config.context_rows + config.query_rows);
    let rows: Vec<usize> = (0..prior.rows).collect();
    let base_seed = derive(config.seed, stream::PFN_STEP_TASK, prior.seed);
    let mut model = PfnModel::init(config)?;
    let mut adam = Adam::new(model.parameter_count());
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let weights = &model.weights;
        let results = par::try_map_range(config.batch_tasks, |b| {
            let task = step_task(&prior, base_seed, (step * config.batch_tasks + b) as u64)?;
            Ok::<_, Error>(task_grad(weights, config, &task.dataset, &rows))
        })?;
        let lr = schedule(config, step);
        let loss = apply_batch(&mut model.weights, &mut adam, results, config, lr, step)?;
        if step % 100 == 0 {
            log::debug!("pretrain step {step} loss {loss:.4} lr {lr:.2e}");
        }
        losses.push(loss);
    }
    model.provenance = Provenance {
        stage: TrainingStage::BasePretrain,
        steps: config.steps,
        seed: config.seed,
        prior_seed: Some(prior.seed),
        task_visits: config.steps * config.batch_tasks,
        real_data_used: false,
        parent: None,
    };
    Ok(PretrainOutcome { model, losses })
}

/// Continue training `model` for `epochs` passes over `tasks`, shuffled per
/// epoch, at [`CONTINUED_LR_FACTOR`] times the base rate. Each visit draws a
/// fresh context/query row split from the task. Only synthetic tasks are
/// accepted.
pub fn continued_pretrain(
    model: &PfnModel,
    tasks: &[SyntheticTask],
    epochs: usize,
    seed: u64,
) -> Result<ContinuedOutcome> {
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("empty task list".into()));
    }
    let config = &model.config;
    let need = config.context_rows + config.query_rows;
    for (i, t) in tasks.iter().enumerate() {
        if t.dataset.meta.label != DomainLabel::Synthetic {
            return Err(Error::InvalidArgument(format!(
                "task {i} ({}) is labelled {}, only synthetic tasks may be used",
                t.dataset.meta.name, t.dataset.meta.label
            )));
        }
        if t.dataset.rows() < need {
            return Err(Error::InvalidArgument(format!(
                "task {i} has {} rows, {need} needed",
                t.dataset.rows()
            )));
        }
        if t.dataset.feature_count() > config.max_features {
            return Err(Error::TooManyFeatures(t.dataset.feature_count()));
        }
    }
    let mut out = model.clone();
    let mut adam = Adam::new(out.parameter_count());
    let lr = config.learning_rate * CONTINUED_LR_FACTOR;
    let mut order = Vec::with_capacity(tasks.len() * epochs);
    for epoch in 0..epochs {
        let mut perm: Vec<usize> = (0..tasks.len()).collect();
        perm.shuffle(&mut sub_rng(seed, stream::PFN_EPOCH_SHUFFLE, epoch as u64));
        order.extend(perm);
    }
    let mut losses = Vec::new();
    for (step, chunk) in order.chunks(config.batch_tasks).enumerate() {
        let weights = &out.weights;
        let first_visit = step * config.batch_tasks;
        let results = par::map_range(chunk.len(), |k| {
            let data = &tasks[chunk[k]].dataset;
            let mut rng = sub_rng(seed, stream::PFN_VISIT_ROWS, (first_visit + k) as u64);
            let rows = sample_indices(&mut rng, data.rows(), need).into_vec();
            task_grad(weights, config, data, &rows)
        });
        losses.push(apply_batch(&mut out.weights, &mut adam, results, config, lr, step)?);
    }
    out.provenance = Provenance {
        stage: TrainingStage::ContinuedPretrain,
        steps: losses.len(),
        seed,
        prior_seed: None,
        task_visits: order.len(),
        real_data_used: false,
        parent: Some(Box::new(model.provenance.clone())),
    };
    Ok(ContinuedOutcome { model: out, losses, task_visits: order.len() })
}

/// Mean squared error of point predictions on the last `query` rows of a
/// dataset given the first `context` rows.
pub fn split_mse(model: &PfnModel, data: &Dataset, context: usize) -> Result<f64> {
    let x = &data.features;
    let y = &data.target;
    let pred = model.predict(
        x.slice(s![..context, ..]),
        y.slice(s![..context]),
        x.slice(s![context.., ..]),
    )?;
    let truth = y.slice(s![context..]);
    Ok((&pred - &truth).mapv(|e| e * e).mean().unwrap_or(f64::NAN))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procgen::generate_batch;

    fn small() -> PfnConfig {
        PfnConfig {
            d_model: 16,
            heads: 2,
            buckets: 8,
            max_features: 6,
            context_rows: 24,
            query_rows: 8,
            steps: 6,
            warmup_steps: 2,
            ..PfnConfig::default()
        }
    }

    fn prior() -> PriorConfig {
        PriorConfig { feature_count_range: [2, 6], ..PriorConfig::default() }
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let c = PfnConfig { steps: 0, ..small() };
        let out = pretrain(&c, &prior()).unwrap();
        assert_eq!(out.model.weights, PfnModel::init(&c).unwrap().weights);
        assert!(out.losses.is_empty());
    }

    #[test]
    fn pretrain_is_deterministic() {
        let a = pretrain(&small(), &prior()).unwrap();
        let b = pretrain(&small(), &prior()).unwrap();
        assert_eq!(a.model.weights, b.model.weights);
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.losses.len(), 6);
        assert_ne!(a.model.weights, PfnModel::init(&small()).unwrap().weights);
    }

    #[test]
    fn prior_wider_than_network_is_rejected() {
        assert!(pretrain(&small(), &PriorConfig::default()).is_err());
    }

    #[test]
    fn schedule_warms_up_then_decays() {
        let c = PfnConfig { steps: 100, warmup_steps: 10, learning_rate: 1.0, ..small() };
        assert!((schedule(&c, 0) - 0.1).abs() < 1e-12);
        assert!((schedule(&c, 10) - 1.0).abs() < 1e-12);
        assert!((schedule(&c, 99) - FINAL_LR_FRACTION).abs() < 0.01);
        assert!(schedule(&c, 50) < schedule(&c, 20));
    }

    #[test]
    fn continued_visits_and_provenance() {
        let base = PfnModel::init(&small()).unwrap();
        let tasks = generate_batch(&prior().with_rows(64), 3, 5).unwrap();
        let out = continued_pretrain(&base, &tasks, 2, 7).unwrap();
        assert_eq!(out.task_visits, 6);
        assert_eq!(out.losses.len(), 3);
        assert!(!out.model.provenance.real_data_used);
        assert_eq!(out.model.provenance.stage, TrainingStage::ContinuedPretrain);
        let none = continued_pretrain(&base, &tasks, 0, 7).unwrap();
        assert_eq!(none.model.weights, base.weights);
        assert_eq!(none.task_visits, 0);
        assert!(continued_pretrain(&base, &[], 1, 7).is_err());
    }

    #[test]
    fn real_data_is_refused() {
        let base = PfnModel::init(&small()).unwrap();
        let mut tasks = generate_batch(&prior().with_rows(64), 1, 5).unwrap();
        tasks[0].dataset.meta.label = DomainLabel::Engineering;
        assert!(continued_pretrain(&base, &tasks, 1, 7).is_err());
    }
}
