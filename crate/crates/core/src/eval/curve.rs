//! Learning curves by cross-validation inside the training partition.

use crate::error::{Error, Result};
use crate::eval::RegressorAdapter;
use crate::par;
use crate::rng::{derive, stream, sub_rng};
use crate::tabular::{Dataset, SplitIndex};
use ndarray::Axis;
use rand::seq::{index::sample as sample_indices, SliceRandom};
use serde::{Deserialize, Serialize};

pub const DEFAULT_FRACTIONS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub train_size: usize,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceCurve {
    pub dataset: String,
    pub model: String,
    pub points: Vec<CurvePoint>,
}

impl PerformanceCurve {
    pub fn point_at(&self, fraction: f64) -> Option<&CurvePoint> {
        self.points.iter().find(|p| (p.fraction - fraction).abs() < 1e-9)
    }
}

pub(crate) fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / truth.len() as f64
}

/// Mean and sample standard deviation.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fit_predict(
    adapter: &dyn RegressorAdapter,
    data: &Dataset,
    train: &[usize],
    test: &[usize],
    seed: u64,
) -> Result<f64> {
    let x = &data.features;
    let y = &data.target;
    let fitted = adapter.fit(x.select(Axis(0), train).view(), y.select(Axis(0), train).view(), seed)?;
    let pred = fitted.predict(x.select(Axis(0), test).view())?;
    if pred.len() != test.len() || pred.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{} returned invalid predictions", adapter.name())));
    }
    let truth: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    Ok(mse(pred.as_slice().expect("contiguous"), &truth))
}

/// For each fraction `f` and each of `folds` folds of the training
/// partition, fit on a seeded `f`-share of the fold's complement and score
/// MSE on the fold. Test rows of `split` are never read.
pub fn sweep_curve(
    adapter: &dyn RegressorAdapter,
    dataset: &Dataset,
    split: &SplitIndex,
    fractions: &[f64],
    folds: usize,
    seed: u64,
) -> Result<PerformanceCurve> {
    if dataset.meta.duplicated_for_embedding {
        return Err(Error::InvalidArgument("learning curves need a non-duplicated dataset".into()));
    }
    let n = split.train_rows.len();
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("{folds} folds for {n} training rows")));
    }
    if fractions.windows(2).any(|w| w[0] >= w[1]) || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::InvalidArgument("fractions must be ascending within (0, 1]".into()));
    }
    let mut order = split.train_rows.clone();
    order.shuffle(&mut sub_rng(seed, stream::CV_FOLDS, 0));
    let fold_of = |pos: usize| pos % folds;
    let fold_rows: Vec<(Vec<usize>, Vec<usize>)> = (0..folds)
        .map(|k| {
            let mut test = Vec::new();
            let mut rest = Vec::new();
            for (pos, &r) in order.iter().enumerate() {
                if fold_of(pos) == k {
                    test.push(r)
                } else {
                    rest.push(r)
                }
            }
            rest.sort_unstable();
            test.sort_unstable();
            (rest, test)
        })
        .collect();
    for &f in fractions {
        let smallest = fold_rows.iter().map(|(rest, _)| rest.len()).min().unwrap_or(0);
        if ((f * smallest as f64).round() as usize) < 2 {
            return Err(Error::InvalidArgument(format!("fraction {f} leaves fewer than 2 training rows")));
        }
    }
    let jobs = fractions.len() * folds;
    let scores = par::try_map_range(jobs, |j| {
        let (fi, k) = (j / folds, j % folds);
        let (rest, test) = &fold_rows[k];
        let m = (fractions[fi] * rest.len() as f64).round() as usize;
        let mut pick = sample_indices(&mut sub_rng(seed, stream::CV_SUBSAMPLE, j as u64), rest.len(), m).into_vec();
        pick.sort_unstable();
        let train: Vec<usize> = pick.into_iter().map(|i| rest[i]).collect();
        fit_predict(adapter, dataset, &train, test, derive(seed, stream::ADAPTER, j as u64))
    })?;
    let fold_train = n as f64 * (folds - 1) as f64 / folds as f64;
    let points = fractions
        .iter()
        .enumerate()
        .map(|(fi, &f)| {
            let (mse_mean, mse_std) = mean_std(&scores[fi * folds..(fi + 1) * folds]);
            CurvePoint { fraction: f, train_size: (f * fold_train).round() as usize, mse_mean, mse_std, folds }
        })
        .collect();
    Ok(PerformanceCurve { dataset: dataset.meta.name.clone(), model: adapter.name(), points })
}

/// Test MSE after fitting on the whole training partition.
pub fn holdout_mse(adapter: &dyn RegressorAdapter, dataset: &Dataset, split: &SplitIndex, seed: u64) -> Result<f64> {
    fit_predict(adapter, dataset, &split.train_rows, &split.test_rows, derive(seed, stream::ADAPTER, u64::MAX))
}
