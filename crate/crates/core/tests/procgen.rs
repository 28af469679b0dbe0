use nalgebra::{DMatrix, DVector};
use tabcurate_core::procgen::{
    generate_batch, materialize, Activation, DenseLayer, NodeFunction, PriorConfig, RootDistribution, ScmNode, ScmSpec,
};
use tabcurate_core::tabular::Dataset;

/// In-sample R² of an ordinary least squares fit with intercept.
fn ols_r2(d: &Dataset) -> f64 {
    let (n, f) = d.features.dim();
    let x = DMatrix::from_fn(n, f + 1, |i, j| if j == 0 { 1.0 } else { d.features[[i, j - 1]] });
    let y = DVector::from_iterator(n, d.target.iter().copied());
    let beta = (x.transpose() * &x).cholesky().expect("full rank").solve(&(x.transpose() * &y));
    let resid = &y - &x * beta;
    let mean = y.mean();
    1.0 - resid.norm_squared() / y.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
}

fn sum_spec(noise: f64) -> ScmSpec {
    let root = |distribution| ScmNode { parents: vec![], function: NodeFunction::Root { distribution }, noise_scale: 0.0 };
    ScmSpec {
        nodes: vec![
            root(RootDistribution::Normal),
            root(RootDistribution::Uniform),
            ScmNode {
                parents: vec![0, 1],
                function: NodeFunction::Mlp {
                    layers: vec![DenseLayer { inputs: 2, outputs: 1, weights: vec![1.0, 1.0], bias: vec![0.0] }],
                    activation: Activation::Identity,
                },
                noise_scale: noise,
            },
        ],
        feature_nodes: vec![0, 1],
        target_node: 2,
        warps: vec![None, None],
        rows: 1024,
        seed: 3,
    }
}

#[test]
fn noiseless_sum_is_linear() {
    let d = materialize(&sum_spec(0.0)).unwrap().dataset;
    let r2 = ols_r2(&d);
    assert!(r2 >= 0.999, "R² {r2}");
}

#[test]
fn overwhelming_noise_hides_the_signal() {
    let d = materialize(&sum_spec(1e4)).unwrap().dataset;
    let r2 = ols_r2(&d);
    assert!(r2 <= 0.05, "R² {r2}");
}

#[test]
fn longer_batches_extend_shorter_ones() {
    let prior = PriorConfig { feature_count_range: [2, 10], ..PriorConfig::default().with_rows(64) };
    let short = generate_batch(&prior, 100, 42).unwrap();
    let long = generate_batch(&prior, 200, 42).unwrap();
    assert_eq!(long.len(), 200);
    for (a, b) in short.iter().zip(&long) {
        assert_eq!(a.dataset.meta.content_hash, b.dataset.meta.content_hash);
        assert_eq!(a.spec, b.spec);
    }
    let other = generate_batch(&prior, 100, 43).unwrap();
    let same = short.iter().zip(&other).filter(|(a, b)| a.dataset.meta.content_hash == b.dataset.meta.content_hash).count();
    assert_eq!(same, 0);
}

#[test]
fn every_task_satisfies_the_dataset_invariants() {
    let prior = PriorConfig::default().with_rows(128);
    for t in generate_batch(&prior, 60, 9).unwrap() {
        t.dataset.check_invariants().unwrap();
        assert_eq!(t.dataset.rows(), 128);
        assert!(!t.spec.feature_nodes.contains(&t.spec.target_node));
    }
}
