use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use std::collections::HashSet;
use tabcurate_core::curation::{select_engineering_like, train_gbt, GbtConfig, SelectionParams};
use tabcurate_core::rng::rng;

fn fast() -> GbtConfig {
    GbtConfig { n_estimators: 30, learning_rate: 0.2, ..GbtConfig::default() }
}

#[test]
fn full_scale_counts() {
    let mut r = rng(1);
    let mut v = |shift: f64| -> Vec<f64> {
        (0..4)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut r);
                shift + z
            })
            .collect()
    };
    let synthetic: Vec<(String, Vec<f64>)> = (0..10_000).map(|i| (format!("t{i:05}"), v(0.5))).collect();
    let target: Vec<Vec<f64>> = (0..35).map(|_| v(0.0)).collect();
    let rep = select_engineering_like(&synthetic, &target, &SelectionParams::default(), &fast(), 4).unwrap();
    assert_eq!(rep.scored.len(), 9750);
    assert_eq!(rep.selected_ids.len(), 200);
    assert_eq!(rep.training_synthetic_ids.len(), 250);
    assert_eq!(rep.train_composition.target_train, 25);
    let train: HashSet<&String> = rep.training_synthetic_ids.iter().collect();
    assert!(rep.selected_ids.iter().all(|id| !train.contains(id)));
    assert!(rep.scored.windows(2).all(|w| w[0].probability >= w[1].probability));
    let top: Vec<&String> = rep.scored.iter().take(200).map(|s| &s.id).collect();
    assert_eq!(top, rep.selected_ids.iter().collect::<Vec<_>>());
}

#[test]
fn deep_interior_points_are_confident() {
    let mut r = rng(2);
    let n = 200;
    let mut x = Array2::zeros((n, 2));
    let mut labels = Vec::new();
    for i in 0..n {
        let c = i % 2;
        let centre = if c == 0 { -3.0 } else { 3.0 };
        let z: f64 = StandardNormal.sample(&mut r);
        x[[i, 0]] = centre + z;
        x[[i, 1]] = StandardNormal.sample(&mut r);
        labels.push(c);
    }
    let model = train_gbt(x.view(), &labels, &GbtConfig::default()).unwrap();
    assert!(model.predict_proba(&[-3.0, 0.0]).unwrap()[0] >= 0.9);
    assert!(model.predict_proba(&[3.0, 0.0]).unwrap()[1] >= 0.9);
}
