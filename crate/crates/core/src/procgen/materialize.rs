use crate::error::{Error, Result};
use crate::procgen::{NodeFunction, RootDistribution, ScmSpec, SyntheticTask, Warp};
use crate::rng::{stream, sub_rng, Rng};
use crate::tabular::{zscore_in_place, Dataset, DomainLabel};
use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sample_root(dist: &RootDistribution, rows: usize, rng: &mut Rng) -> Vec<f64> {
    match dist {
        RootDistribution::Normal => (0..rows).map(|_| normal(rng)).collect(),
        RootDistribution::Uniform => {
            let a = 3f64.sqrt();
            (0..rows).map(|_| rng.random_range(-a..a)).collect()
        }
        RootDistribution::Mixture { weights, means, sds } => (0..rows)
            .map(|_| {
                let u: f64 = rng.random();
                let k = if u < weights[0] {
                    0
                } else if u < weights[0] + weights[1] {
                    1
                } else {
                    2
                };
                means[k] + sds[k] * normal(rng)
            })
            .collect(),
    }
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 1e-12 * mean.abs().max(1.0) && sd.is_finite() {
        v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Values of every node, in node order.
fn propagate(spec: &ScmSpec, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    let rows = spec.rows;
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(spec.nodes.len());
    for (i, node) in spec.nodes.iter().enumerate() {
        let v = match &node.function {
            NodeFunction::Root { distribution } => sample_root(distribution, rows, rng),
            NodeFunction::Mlp { layers, activation } => {
                let mut h = Array2::<f64>::zeros((rows, node.parents.len()));
                for (c, &p) in node.parents.iter().enumerate() {
                    h.column_mut(c).assign(&ndarray::ArrayView1::from(&values[p]));
                }
                for (l, layer) in layers.iter().enumerate() {
                    let w = ndarray::ArrayView2::from_shape((layer.outputs, layer.inputs), &layer.weights)
                        .map_err(|e| Error::DegenerateSpec(e.to_string()))?;
                    let mut next = h.dot(&w.t());
                    next += &ndarray::ArrayView1::from(&layer.bias);
                    if l + 1 < layers.len() {
                        next.mapv_inplace(|x| activation.apply(x));
                    }
                    h = next;
                }
                let mut out = h.column(0).to_vec();
                standardize(&mut out);
                if node.noise_scale > 0.0 {
                    for x in out.iter_mut() {
                        *x += node.noise_scale * normal(rng);
                    }
                }
                out
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateSpec(format!("node {i} produced non-finite values")));
        }
        values.push(v);
    }
    Ok(values)
}

fn apply_warp(warp: Warp, col: &mut [f64]) {
    let n = col.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
    match warp {
        Warp::Quantize { bins } => {
            let sorted: Vec<f64> = order.iter().map(|&i| col[i]).collect();
            let edges: Vec<f64> = (1..bins)
                .map(|k| sorted[((k * n) / bins).min(n - 1)])
                .collect();
            for x in col.iter_mut() {
                *x = edges.partition_point(|&e| e <= *x) as f64;
            }
        }
        Warp::RankGaussianize => {
            let unit = Normal::new(0.0, 1.0).expect("unit normal");
            for (rank, &i) in order.iter().enumerate() {
                col[i] = unit.inverse_cdf((rank as f64 + 0.5) / n as f64);
            }
        }
    }
}

/// Generate the dataset described by `spec`. Bit-identical for equal specs.
///
/// A numerically degenerate propagation is retried once with a fresh noise
/// stream before failing.
pub fn materialize(spec: &ScmSpec) -> Result<SyntheticTask> {
    spec.validate().map_err(Error::DegenerateSpec)?;
    let values = match propagate(spec, &mut sub_rng(spec.seed, stream::MATERIALIZE, 0)) {
        Ok(v) => v,
        Err(_) => propagate(spec, &mut sub_rng(spec.seed, stream::MATERIALIZE_RETRY, 0))?,
    };
    let rows = spec.rows;
    let f = spec.feature_nodes.len();
    let mut features = Array2::<f64>::zeros((rows, f));
    for (j, (&node, warp)) in spec.feature_nodes.iter().zip(&spec.warps).enumerate() {
        let mut col = values[node].clone();
        if let Some(w) = warp {
            apply_warp(*w, &mut col);
        }
        let mut c = Array1::from(col);
        zscore_in_place(c.view_mut());
        features.column_mut(j).assign(&c);
    }
    let mut target = Array1::from(values[spec.target_node].clone());
    if !zscore_in_place(target.view_mut()) {
        return Err(Error::DegenerateSpec("target column is constant".into()));
    }
    let names = (0..f).map(|j| format!("x{j}")).collect();
    let dataset = Dataset::new(
        features,
        target,
        names,
        format!("syn-{:016x}", spec.seed),
        DomainLabel::Synthetic,
        rows,
        false,
        spec.seed,
    );
    Ok(SyntheticTask { dataset, spec: spec.clone() })
}
