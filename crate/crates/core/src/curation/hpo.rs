//! Seeded random search over the boosting hyperparameter space, with the
//! known-good configuration as trial 0.

use crate::curation::cv::{cross_val_predict, ConfusionMatrix};
use crate::curation::gbt::GbtConfig;
use crate::error::{Error, Result};
use crate::rng::{derive, stream, sub_rng, Rng};
use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Search domains. Integer ranges are inclusive.
pub mod space {
    pub const N_ESTIMATORS: (usize, usize, usize) = (300, 2000, 100);
    pub const LEARNING_RATE: (f64, f64) = (0.01, 0.2);
    pub const MAX_DEPTH: (usize, usize) = (3, 10);
    pub const SUBSAMPLE: (f64, f64) = (0.6, 1.0);
    pub const COLSAMPLE_BYTREE: (f64, f64) = (0.6, 1.0);
    pub const MIN_CHILD_WEIGHT: (f64, f64) = (1.0, 20.0);
    pub const REG_LAMBDA: (f64, f64) = (1e-3, 50.0);
    pub const GAMMA: (f64, f64) = (0.0, 2.0);
    pub const REG_ALPHA: (f64, f64) = (1e-4, 10.0);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoTrial {
    pub trial: usize,
    pub config: GbtConfig,
    /// Mean balanced accuracy over folds.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpoOutcome {
    pub best: GbtConfig,
    pub best_score: f64,
    pub trials: Vec<HpoTrial>,
}

impl HpoOutcome {
    /// `trial,<params...>,cv_score` CSV.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from(
            "trial,n_estimators,learning_rate,max_depth,subsample,colsample_bytree,min_child_weight,reg_lambda,gamma,reg_alpha,cv_score\n",
        );
        for t in &self.trials {
            let c = &t.config;
            s.push_str(&format!(
                "{},{},{:?},{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                t.trial,
                c.n_estimators,
                c.learning_rate,
                c.max_depth,
                c.subsample,
                c.colsample_bytree,
                c.min_child_weight,
                c.reg_lambda,
                c.gamma,
                c.reg_alpha,
                t.score
            ));
        }
        s
    }
}

fn log_uniform(r: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    (r.random_range(lo.ln()..=hi.ln())).exp()
}

/// Draw one configuration from the search space.
pub fn sample_config(r: &mut Rng, seed: u64) -> GbtConfig {
    let (lo, hi, step) = space::N_ESTIMATORS;
    GbtConfig {
        n_estimators: lo + step * r.random_range(0..=(hi - lo) / step),
        learning_rate: log_uniform(r, space::LEARNING_RATE),
        max_depth: r.random_range(space::MAX_DEPTH.0..=space::MAX_DEPTH.1),
        subsample: r.random_range(space::SUBSAMPLE.0..=space::SUBSAMPLE.1),
        colsample_bytree: r.random_range(space::COLSAMPLE_BYTREE.0..=space::COLSAMPLE_BYTREE.1),
        min_child_weight: log_uniform(r, space::MIN_CHILD_WEIGHT),
        reg_lambda: log_uniform(r, space::REG_LAMBDA),
        gamma: r.random_range(space::GAMMA.0..=space::GAMMA.1),
        reg_alpha: log_uniform(r, space::REG_ALPHA),
        seed,
    }
}

/// Mean per-fold balanced accuracy.
pub fn cv_score(x: &Array2<f64>, labels: &[usize], folds: usize, config: &GbtConfig, seed: u64) -> Result<f64> {
    let predicted = cross_val_predict(x, labels, folds, config, seed)?;
    let assignment = crate::curation::stratified_folds(labels, folds, seed)?;
    let classes: Vec<String> = (0..=*labels.iter().max().unwrap_or(&0)).map(|c| c.to_string()).collect();
    let mut total = 0.0;
    for f in 0..folds {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == f).collect();
        let t: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let p: Vec<usize> = idx.iter().map(|&i| predicted[i]).collect();
        let cm = ConfusionMatrix::from_predictions(classes.clone(), &t, &p);
        let present: Vec<f64> = cm
            .recalls()
            .into_iter()
            .enumerate()
            .filter(|&(c, _)| t.contains(&c))
            .map(|(_, r)| r)
            .collect();
        total += present.iter().sum::<f64>() / present.len() as f64;
    }
    Ok(total / folds as f64)
}

/// Random search over the space; trial 0 is [`GbtConfig::default`]. The
/// returned configuration maximizes the cross-validated score, earliest
/// trial winning ties. Trials run concurrently with per-trial seeds.
pub fn hpo_search(x: &Array2<f64>, labels: &[usize], trials: usize, folds: usize, seed: u64) -> Result<HpoOutcome> {
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    crate::curation::stratified_folds(labels, folds, seed)?;
    let configs: Vec<GbtConfig> = (0..trials)
        .map(|t| {
            let trial_seed = derive(seed, stream::HPO_TRIAL, t as u64);
            if t == 0 {
                GbtConfig::default().with_seed(trial_seed)
            } else {
                sample_config(&mut sub_rng(seed, stream::HPO_TRIAL, t as u64), trial_seed)
            }
        })
        .collect();
    // A single trial needs no scoring: the warm start is returned as is.
    let scores = if trials == 1 {
        vec![f64::NAN]
    } else {
        crate::par::try_map_range(trials, |t| cv_score(x, labels, folds, &configs[t], seed))?
    };
    let mut best = 0;
    for t in 1..trials {
        if scores[t] > scores[best] {
            best = t;
        }
    }
    let trials: Vec<HpoTrial> = configs
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(trial, (config, score))| HpoTrial { trial, config, score })
        .collect();
    Ok(HpoOutcome { best: trials[best].config.clone(), best_score: trials[best].score, trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_stay_in_the_space() {
        let mut r = sub_rng(1, stream::HPO_TRIAL, 0);
        for _ in 0..500 {
            let c = sample_config(&mut r, 0);
            assert!((300..=2000).contains(&c.n_estimators) && c.n_estimators.is_multiple_of(100));
            assert!((0.01..=0.2).contains(&c.learning_rate));
            assert!((3..=10).contains(&c.max_depth));
            assert!((0.6..=1.0).contains(&c.subsample) && (0.6..=1.0).contains(&c.colsample_bytree));
            assert!((1.0..=20.0).contains(&c.min_child_weight));
            assert!((1e-3..=50.0).contains(&c.reg_lambda));
            assert!((0.0..=2.0).contains(&c.gamma));
            assert!((1e-4..=10.0).contains(&c.reg_alpha));
            c.validate().unwrap();
        }
    }

    #[test]
    fn one_trial_returns_warm_start() {
        let x = Array2::from_shape_fn((20, 2), |(i, j)| (i * (j + 1)) as f64);
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let out = hpo_search(&x, &labels, 1, 5, 9).unwrap();
        let w = GbtConfig::default();
        assert_eq!(out.best, w.clone().with_seed(out.best.seed));
        assert_eq!(
            (out.best.n_estimators, out.best.learning_rate, out.best.max_depth, out.best.subsample),
            (1700, 0.0158, 7, 0.903)
        );
        assert!(out.trace_csv().lines().count() == 2);
    }
}
