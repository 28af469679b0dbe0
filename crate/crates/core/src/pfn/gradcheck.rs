//! Analytic gradients against central finite differences.

use crate::error::{Error, Result};
use crate::pfn::net::{self, TaskView};
use crate::pfn::{PfnConfig, PfnModel, Weights};
use crate::rng::{rng, stream, sub_rng};
use ndarray::{s, Array1, Array2, ArrayView1};
use rand_distr::{Distribution, StandardNormal};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error, so entries whose true gradient is
/// essentially zero are judged by absolute error.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub parameters: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    /// Tensor holding the worst entry.
    pub worst_tensor: String,
    /// `(tensor, max relative error)` in canonical order.
    pub per_tensor: Vec<(String, f64)>,
}

/// Loss and analytic gradient of the query cross-entropy times `loss_scale`.
pub fn loss_gradient(model: &PfnModel, task: TaskView<'_>, query_y: ArrayView1<f64>, loss_scale: f64) -> (f64, Weights) {
    net::loss_and_grad(&model.weights, &model.config, task, query_y, loss_scale)
}

/// Compare analytic and finite-difference gradients on every parameter of a
/// randomly perturbed model over one random task. Only small configurations
/// (`d_model <= 16`, at most 8 rows) are accepted.
pub fn grad_check(config: &PfnConfig) -> Result<GradCheckReport> {
    config.validate()?;
    if config.d_model > 16 || config.context_rows + config.query_rows > 8 {
        return Err(Error::InvalidConfig("grad_check needs d_model <= 16 and at most 8 rows".into()));
    }
    let mut model = PfnModel::init(config)?;
    // Move every parameter off its initial value so biases and gains are
    // exercised away from 0 and 1.
    let mut r = sub_rng(config.seed, stream::PFN_INIT, 1);
    let mut flat = model.weights.to_flat();
    for v in flat.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut r);
        *v += 0.1 * z;
    }
    model.weights.load_flat(&flat);

    let f = config.max_features.saturating_sub(1).max(1);
    let n = config.context_rows + config.query_rows;
    let mut r = rng(config.seed ^ 0x6772_6164);
    let x = Array2::from_shape_fn((n, f), |_| StandardNormal.sample(&mut r));
    let y: Array1<f64> = (0..n).map(|_| StandardNormal.sample(&mut r)).collect();
    let c = config.context_rows;
    let task = TaskView { context_x: x.slice(s![..c, ..]), context_y: y.slice(s![..c]), query_x: x.slice(s![c.., ..]) };
    let qy = y.slice(s![c..]);

    let (_, grad) = loss_gradient(&model, task, qy, 1.0);
    let analytic = grad.to_flat();
    let names: Vec<(String, usize)> = model.weights.tensors().into_iter().map(|(n, _, v)| (n, v.len())).collect();
    let mut w = model.weights.clone();
    let mut flat = w.to_flat();
    let mut per_tensor = Vec::new();
    let (mut max_rel, mut max_abs, mut worst) = (0.0f64, 0.0f64, String::new());
    let mut i = 0;
    for (name, len) in names {
        let mut tensor_max = 0.0f64;
        for _ in 0..len {
            let orig = flat[i];
            flat[i] = orig + FD_STEP;
            w.load_flat(&flat);
            let up = net::loss(&w, config, task, qy, 1.0);
            flat[i] = orig - FD_STEP;
            w.load_flat(&flat);
            let down = net::loss(&w, config, task, qy, 1.0);
            flat[i] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let a = analytic[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            tensor_max = tensor_max.max(rel);
            max_abs = max_abs.max(abs);
            if rel > max_rel {
                max_rel = rel;
                worst = name.clone();
            }
            i += 1;
        }
        per_tensor.push((name, tensor_max));
    }
    Ok(GradCheckReport { parameters: i, max_relative_error: max_rel, max_abs_error: max_abs, worst_tensor: worst, per_tensor })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_config_passes() {
        let report = grad_check(&PfnConfig::tiny()).unwrap();
        assert!(report.max_relative_error <= 1e-4, "{report:?}");
        assert_eq!(report.parameters, PfnModel::init(&PfnConfig::tiny()).unwrap().parameter_count());
    }

    #[test]
    fn rejects_large_configs() {
        assert!(grad_check(&PfnConfig::default()).is_err());
    }

    #[test]
    fn loss_scale_scales_gradients() {
        let cfg = PfnConfig::tiny();
        let model = PfnModel::init(&cfg).unwrap();
        let mut r = rng(11);
        let x = Array2::from_shape_fn((8, 3), |_| StandardNormal.sample(&mut r));
        let y: Array1<f64> = (0..8).map(|_| StandardNormal.sample(&mut r)).collect();
        let task = TaskView { context_x: x.slice(s![..5, ..]), context_y: y.slice(s![..5]), query_x: x.slice(s![5.., ..]) };
        let (l1, g1) = loss_gradient(&model, task, y.slice(s![5..]), 1.0);
        let (l2, g2) = loss_gradient(&model, task, y.slice(s![5..]), 2.0);
        assert!((l2 - 2.0 * l1).abs() <= 1e-12 * l1.abs().max(1.0));
        for (a, b) in g1.to_flat().iter().zip(g2.to_flat()) {
            assert!((b - 2.0 * a).abs() <= 1e-12 * a.abs().max(1e-12), "{a} {b}");
        }
    }
}
