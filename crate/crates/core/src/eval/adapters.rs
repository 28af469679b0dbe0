//! Regressors behind a common fit/predict contract.

use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::pfn::PfnModel;
use crate::rng::{stream, sub_rng};
use crate::tabular::MAX_ROWS;
use crate::tree::RegressionTree;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample as sample_indices;
use std::sync::Arc;

/// A regressor that can be fitted (or conditioned) on training rows. Fitting
/// never mutates the adapter, so one adapter serves many datasets and threads.
pub trait RegressorAdapter: Send + Sync {
    fn name(&self) -> String;
    fn fit(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, seed: u64) -> Result<Box<dyn FittedRegressor>>;
}

pub trait FittedRegressor: Send + Sync {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>>;
}

fn check_fit(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    Ok(())
}

fn check_width(expected: usize, x: ArrayView2<f64>) -> Result<()> {
    if x.ncols() == expected {
        Ok(())
    } else {
        Err(Error::Shape(format!("{} features, {expected} expected", x.ncols())))
    }
}

/// Predicts the training mean.
#[derive(Debug, Clone, Default)]
pub struct MeanRegressor;

struct Constant(f64);

impl FittedRegressor for Constant {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(Array1::from_elem(x.nrows(), self.0))
    }
}

impl RegressorAdapter for MeanRegressor {
    fn name(&self) -> String {
        "mean".into()
    }
    fn fit(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, _seed: u64) -> Result<Box<dyn FittedRegressor>> {
        check_fit(x, y)?;
        Ok(Box::new(Constant(y.mean().unwrap_or(0.0))))
    }
}

/// k-nearest neighbours with inverse-distance weights. Exact matches share
/// all the weight.
#[derive(Debug, Clone)]
pub struct KnnRegressor {
    pub k: usize,
}

impl Default for KnnRegressor {
    fn default() -> Self {
        KnnRegressor { k: 5 }
    }
}

struct FittedKnn {
    k: usize,
    x: Array2<f64>,
    y: Array1<f64>,
}

impl FittedRegressor for FittedKnn {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(self.x.ncols(), x)?;
        let k = self.k.min(self.x.nrows());
        Ok(x.rows()
            .into_iter()
            .map(|q| {
                let mut d: Vec<(f64, usize)> = self
                    .x
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(i, r)| ((&r - &q).mapv(|v| v * v).sum().sqrt(), i))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let near = &d[..k];
                let exact: Vec<f64> = near.iter().filter(|(dist, _)| *dist == 0.0).map(|&(_, i)| self.y[i]).collect();
                if !exact.is_empty() {
                    return exact.iter().sum::<f64>() / exact.len() as f64;
                }
                let (num, den) = near
                    .iter()
                    .fold((0.0, 0.0), |(n, w), &(dist, i)| (n + self.y[i] / dist, w + 1.0 / dist));
                num / den
            })
            .collect())
    }
}

impl RegressorAdapter for KnnRegressor {
    fn name(&self) -> String {
        format!("knn{}", self.k)
    }
    fn fit(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, _seed: u64) -> Result<Box<dyn FittedRegressor>> {
        check_fit(x, y)?;
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        Ok(Box::new(FittedKnn { k: self.k, x: x.to_owned(), y: y.to_owned() }))
    }
}

/// Ridge regression with an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct RidgeRegressor {
    pub lambda: f64,
}

impl Default for RidgeRegressor {
    fn default() -> Self {
        RidgeRegressor { lambda: 1.0 }
    }
}

struct Linear {
    w: Array1<f64>,
    b: f64,
}

impl FittedRegressor for Linear {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(self.w.len(), x)?;
        Ok(x.dot(&self.w) + self.b)
    }
}

impl RegressorAdapter for RidgeRegressor {
    fn name(&self) -> String {
        "ridge".into()
    }
    fn fit(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, _seed: u64) -> Result<Box<dyn FittedRegressor>> {
        check_fit(x, y)?;
        let xm = x.mean_axis(Axis(0)).expect("rows");
        let ym = y.mean().expect("rows");
        let xc = &x - &xm;
        let yc = &y - ym;
        let mut a = xc.t().dot(&xc);
        a.diag_mut().mapv_inplace(|v| v + self.lambda.max(1e-12));
        let w = cholesky_solve(&a, &xc.t().dot(&yc))
            .ok_or_else(|| Error::InvalidArgument("ridge system not positive definite".into()))?;
        let b = ym - xm.dot(&w);
        Ok(Box::new(Linear { w, b }))
    }
}

/// Depth-limited least-squares regression tree.
#[derive(Debug, Clone)]
pub struct TreeRegressor {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeRegressor {
    fn default() -> Self {
        TreeRegressor { max_depth: 4, min_leaf: 5 }
    }
}

struct FittedTree(RegressionTree, usize);

impl FittedRegressor for FittedTree {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(self.1, x)?;
        Ok(Array1::from(self.0.predict(x)))
    }
}

impl RegressorAdapter for TreeRegressor {
    fn name(&self) -> String {
        format!("tree{}", self.max_depth)
    }
    fn fit(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, _seed: u64) -> Result<Box<dyn FittedRegressor>> {
        check_fit(x, y)?;
        Ok(Box::new(FittedTree(RegressionTree::fit(x, y, self.max_depth, self.min_leaf.max(1)), x.ncols())))
    }
}

/// In-context prediction with a PFN: training rows become the context.
/// Contexts beyond `max_context` rows are subsampled with the fit seed.
#[derive(Debug, Clone)]
pub struct PfnRegressor {
    pub label: String,
    pub model: Arc<PfnModel>,
    pub max_context: usize,
}

impl PfnRegressor {
    pub fn new(label: impl Into<String>, model: Arc<PfnModel>) -> Self {
        PfnRegressor { label: label.into(), model, max_context: MAX_ROWS }
    }
}

struct FittedPfn {
    model: Arc<PfnModel>,
    x: Array2<f64>,
    y: Array1<f64>,
}

impl FittedRegressor for FittedPfn {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(self.x.ncols(), x)?;
        let chunk = self.model.config.query_rows.max(1);
        let mut out = Vec::with_capacity(x.nrows());
        for start in (0..x.nrows()).step_by(chunk) {
            let end = (start + chunk).min(x.nrows());
            let p = self.model.predict(self.x.view(), self.y.view(), x.slice(s![start..end, ..]))?;
            out.extend(p);
        }
        Ok(Array1::from(out))
    }
}

impl RegressorAdapter for PfnRegressor {
    fn name(&self) -> String {
        self.label.clone()
    }
    fn fit(&self, x: ArrayView2<f64>, y: ArrayView1<f64>, seed: u64) -> Result<Box<dyn FittedRegressor>> {
        check_fit(x, y)?;
        if x.ncols() > self.model.config.max_features {
            return Err(Error::TooManyFeatures(x.ncols()));
        }
        let (x, y) = if x.nrows() > self.max_context {
            let mut rows =
                sample_indices(&mut sub_rng(seed, stream::ADAPTER, 0), x.nrows(), self.max_context).into_vec();
            rows.sort_unstable();
            (x.select(Axis(0), &rows), y.select(Axis(0), &rows))
        } else {
            (x.to_owned(), y.to_owned())
        };
        Ok(Box::new(FittedPfn { model: Arc::clone(&self.model), x, y }))
    }
}

/// k-NN (k = 5, inverse distance), ridge (lambda = 1) and a depth-4 tree.
pub fn reference_regressors() -> Vec<Box<dyn RegressorAdapter>> {
    vec![
        Box::new(KnnRegressor::default()),
        Box::new(RidgeRegressor::default()),
        Box::new(TreeRegressor::default()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn mse(a: &Array1<f64>, b: ArrayView1<f64>) -> f64 {
        (a - &b).mapv(|v| v * v).mean().unwrap()
    }

    #[test]
    fn ridge_recovers_linear_map() {
        let x = Array::from_shape_fn((200, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64 / 4.0 - 2.0);
        let y = x.column(0).mapv(|v| 2.0 * v) - &x.column(2) + 0.5;
        let m = RidgeRegressor::default().fit(x.view(), y.view(), 0).unwrap();
        assert!(mse(&m.predict(x.view()).unwrap(), y.view()) <= 1e-4);
    }

    #[test]
    fn one_nn_memorizes() {
        let x = Array::from_shape_fn((30, 2), |(i, j)| (i * (j + 2)) as f64);
        let y = x.column(0).mapv(f64::sin);
        let m = KnnRegressor { k: 1 }.fit(x.view(), y.view(), 0).unwrap();
        assert_eq!(mse(&m.predict(x.view()).unwrap(), y.view()), 0.0);
    }

    #[test]
    fn knn_weights_by_inverse_distance() {
        let x = ndarray::arr2(&[[0.0], [1.0], [3.0]]);
        let y = ndarray::arr1(&[0.0, 1.0, 3.0]);
        let m = KnnRegressor { k: 2 }.fit(x.view(), y.view(), 0).unwrap();
        // Query 0.5: neighbours 0 and 1 at distance 0.5 each.
        let p = m.predict(ndarray::arr2(&[[0.5], [2.0]]).view()).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
        // Query 2.0: neighbours 1 (d 1) and 3 (d 1).
        assert!((p[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stump_cannot_fit_xor() {
        // XOR on signs; the z-scored target is +-1.
        let x = Array::from_shape_fn((400, 2), |(i, j)| if (i >> j) & 1 == 1 { 1.0 } else { -1.0 } + (i % 10) as f64 * 0.01);
        let y = Array1::from_iter((0..400).map(|i| if (i & 1) ^ ((i >> 1) & 1) == 1 { 1.0 } else { -1.0 }));
        let m = TreeRegressor { max_depth: 1, min_leaf: 1 }.fit(x.view(), y.view(), 0).unwrap();
        assert!(mse(&m.predict(x.view()).unwrap(), y.view()) >= 0.5);
    }

    #[test]
    fn mean_predicts_mean() {
        let x = Array2::zeros((4, 1));
        let y = ndarray::arr1(&[1.0, 2.0, 3.0, 6.0]);
        let m = MeanRegressor.fit(x.view(), y.view(), 0).unwrap();
        assert_eq!(m.predict(Array2::zeros((2, 1)).view()).unwrap().to_vec(), vec![3.0, 3.0]);
    }
}
