//! Selection of the synthetic tasks a classifier finds most target-like.

use crate::curation::gbt::{train_gbt, GbtConfig};
use crate::error::{Error, Result};
use crate::rng::{stream, sub_rng};
use ndarray::Array2;
use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub k: usize,
    pub n_syn_train: usize,
    pub target_train_fraction: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams { k: 200, n_syn_train: 250, target_train_fraction: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTask {
    pub id: String,
    /// Target-class probability.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainComposition {
    pub synthetic_train: usize,
    pub target_train: usize,
    pub target_train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Every synthetic task not used for training, best first.
    pub scored: Vec<ScoredTask>,
    pub selected_ids: Vec<String>,
    pub training_synthetic_ids: Vec<String>,
    pub train_composition: TrainComposition,
    pub config: GbtConfig,
    pub seed: u64,
}

/// Train a synthetic-vs-target classifier on `n_syn_train` random synthetic
/// embeddings and a `target_train_fraction` share of the target embeddings,
/// score the remaining synthetic tasks and keep the `k` most target-like.
/// Ties go to the smaller id.
pub fn select_engineering_like(
    synthetic: &[(String, Vec<f64>)],
    target: &[Vec<f64>],
    params: &SelectionParams,
    config: &GbtConfig,
    seed: u64,
) -> Result<SelectionReport> {
    let n = synthetic.len();
    if n <= params.n_syn_train {
        return Err(Error::InvalidArgument(format!(
            "{n} synthetic embeddings, more than {} needed",
            params.n_syn_train
        )));
    }
    if target.len() < 2 {
        return Err(Error::InvalidArgument("at least two target embeddings needed".into()));
    }
    if params.k > n - params.n_syn_train {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the {} scorable synthetic tasks",
            params.k,
            n - params.n_syn_train
        )));
    }
    if !(params.target_train_fraction > 0.0 && params.target_train_fraction <= 1.0) {
        return Err(Error::InvalidArgument("target_train_fraction must be in (0, 1]".into()));
    }
    let ids: BTreeSet<&str> = synthetic.iter().map(|(id, _)| id.as_str()).collect();
    if ids.len() != n {
        return Err(Error::InvalidArgument("duplicate synthetic ids".into()));
    }
    let d = synthetic[0].1.len();
    if synthetic.iter().map(|(_, v)| v).chain(target).any(|v| v.len() != d) {
        return Err(Error::Shape("embeddings of different lengths".into()));
    }

    let mut syn_train = sample_indices(&mut sub_rng(seed, stream::SELECT_SYN, 0), n, params.n_syn_train).into_vec();
    syn_train.sort_unstable();
    let n_target = ((params.target_train_fraction * target.len() as f64).ceil() as usize).min(target.len());
    let mut tgt_train = sample_indices(&mut sub_rng(seed, stream::SELECT_TARGET, 0), target.len(), n_target).into_vec();
    tgt_train.sort_unstable();

    let rows: Vec<&Vec<f64>> =
        syn_train.iter().map(|&i| &synthetic[i].1).chain(tgt_train.iter().map(|&i| &target[i])).collect();
    let x = Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]);
    let labels: Vec<usize> = (0..rows.len()).map(|i| usize::from(i >= syn_train.len())).collect();
    let model = train_gbt(x.view(), &labels, config)?;

    let in_train: BTreeSet<usize> = syn_train.iter().copied().collect();
    let rest: Vec<usize> = (0..n).filter(|i| !in_train.contains(i)).collect();
    let xr = Array2::from_shape_fn((rest.len(), d), |(i, j)| synthetic[rest[i]].1[j]);
    let probs = model.predict_proba_rows(xr.view())?;
    let mut scored: Vec<ScoredTask> = rest
        .iter()
        .zip(probs.column(1))
        .map(|(&i, &p)| ScoredTask { id: synthetic[i].0.clone(), probability: p })
        .collect();
    scored.sort_by(|a, b| b.probability.total_cmp(&a.probability).then_with(|| a.id.cmp(&b.id)));
    let selected_ids = scored.iter().take(params.k).map(|s| s.id.clone()).collect();
    Ok(SelectionReport {
        scored,
        selected_ids,
        training_synthetic_ids: syn_train.iter().map(|&i| synthetic[i].0.clone()).collect(),
        train_composition: TrainComposition {
            synthetic_train: syn_train.len(),
            target_train: n_target,
            target_train_fraction: params.target_train_fraction,
        },
        config: config.clone(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn embeddings(n: usize, d: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng(seed);
        (0..n).map(|_| (0..d).map(|_| { let z: f64 = StandardNormal.sample(&mut r); shift + z }).collect()).collect()
    }

    fn fast() -> GbtConfig {
        GbtConfig { n_estimators: 30, learning_rate: 0.2, ..GbtConfig::default() }
    }

    fn pool(n: usize) -> Vec<(String, Vec<f64>)> {
        embeddings(n, 4, 0.0, 1).into_iter().enumerate().map(|(i, v)| (format!("t{i:05}"), v)).collect()
    }

    #[test]
    fn counts_and_disjointness() {
        let syn = pool(120);
        let target = embeddings(20, 4, 1.0, 2);
        let p = SelectionParams { k: 10, n_syn_train: 30, target_train_fraction: 0.7 };
        let r = select_engineering_like(&syn, &target, &p, &fast(), 3).unwrap();
        assert_eq!(r.scored.len(), 90);
        assert_eq!(r.selected_ids.len(), 10);
        assert_eq!(r.train_composition.target_train, 14);
        let train: BTreeSet<_> = r.training_synthetic_ids.iter().collect();
        assert!(r.selected_ids.iter().all(|id| !train.contains(id)));
        assert!(r.scored.windows(2).all(|w| w[0].probability > w[1].probability
            || w[0].probability == w[1].probability && w[0].id < w[1].id));
        assert_eq!(r, select_engineering_like(&syn, &target, &p, &fast(), 3).unwrap());
        let none = select_engineering_like(&syn, &target, &SelectionParams { k: 0, ..p.clone() }, &fast(), 3).unwrap();
        assert!(none.selected_ids.is_empty());
        assert!(select_engineering_like(&syn, &target, &SelectionParams { k: 91, ..p }, &fast(), 3).is_err());
    }
}
