//! Stratified cross-validation, confusion matrices and the
//! distinguishability analysis.

use crate::curation::gbt::{argmax, train_gbt, GbtConfig};
use crate::error::{Error, Result};
use crate::rng::{stream, sub_rng};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<u64>>,
    pub balanced_accuracy: f64,
    pub accuracy: f64,
}

impl ConfusionMatrix {
    pub fn from_predictions(classes: Vec<String>, truth: &[usize], predicted: &[usize]) -> Self {
        let k = classes.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            counts[t][p] += 1;
        }
        let mut cm = ConfusionMatrix { classes, counts, balanced_accuracy: 0.0, accuracy: 0.0 };
        cm.balanced_accuracy = cm.recalls().iter().sum::<f64>() / k as f64;
        let total: u64 = cm.counts.iter().flatten().sum();
        let diag: u64 = (0..k).map(|i| cm.counts[i][i]).sum();
        cm.accuracy = if total == 0 { 0.0 } else { diag as f64 / total as f64 };
        cm
    }

    /// Per-class recall; a class with no members counts as 0.
    pub fn recalls(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[i] as f64 / n as f64
                }
            })
            .collect()
    }

    /// CSV with header `true\predicted,<classes...>`.
    pub fn to_csv(&self) -> String {
        let mut s = format!("true\\predicted,{}\n", self.classes.join(","));
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            s.push_str(&format!("{c},{}\n", cells.join(",")));
        }
        s
    }
}

/// Fold index per row: within each class the members are shuffled with a
/// seeded generator and dealt round-robin.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut out = vec![0; labels.len()];
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < folds {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} members, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut sub_rng(seed, stream::FOLDS, class as u64));
        for (j, &i) in members.iter().enumerate() {
            out[i] = j % folds;
        }
    }
    Ok(out)
}

/// Out-of-fold predicted classes of a boosted classifier.
pub fn cross_val_predict(
    x: &Array2<f64>,
    labels: &[usize],
    folds: usize,
    config: &GbtConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    let assignment = stratified_folds(labels, folds, seed)?;
    let per_fold = crate::par::try_map_range(folds, |f| {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == f).collect();
        let xt = x.select(Axis(0), &train);
        let yt: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let model = train_gbt(xt.view(), &yt, &config.clone().with_seed(crate::rng::derive(config.seed, stream::FOLDS, f as u64)))?;
        let probs = model.predict_proba_rows(x.select(Axis(0), &test).view())?;
        Ok::<_, Error>(test.into_iter().zip(probs.rows().into_iter().map(|p| argmax(p.as_slice().unwrap()))).collect::<Vec<_>>())
    })?;
    let mut predicted = vec![0; labels.len()];
    for (i, p) in per_fold.into_iter().flatten() {
        predicted[i] = p;
    }
    Ok(predicted)
}

fn stack(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(Array2<f64>, Vec<usize>)> {
    let d = a.first().or(b.first()).map_or(0, Vec::len);
    let rows: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("embeddings of different lengths".into()));
    }
    let x = Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j]);
    let labels = (0..rows.len()).map(|i| usize::from(i >= a.len())).collect();
    Ok((x, labels))
}

/// How well a boosted classifier tells two embedding sets apart, by
/// stratified `folds`-fold cross-validation. Class 0 is `a`, class 1 is `b`.
pub fn distinguishability(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    folds: usize,
    config: &GbtConfig,
    seed: u64,
) -> Result<ConfusionMatrix> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("both embedding sets must be non-empty".into()));
    }
    let (x, labels) = stack(a, b)?;
    let predicted = cross_val_predict(&x, &labels, folds, config, seed)?;
    Ok(ConfusionMatrix::from_predictions(vec!["a".into(), "b".into()], &labels, &predicted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(n: usize, d: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng(seed);
        (0..n)
            .map(|_| (0..d).map(|_| { let z: f64 = StandardNormal.sample(&mut r); shift + z }).collect())
            .collect()
    }

    fn fast() -> GbtConfig {
        GbtConfig { n_estimators: 40, learning_rate: 0.2, ..GbtConfig::default() }
    }

    #[test]
    fn balanced_accuracy_is_mean_recall() {
        let cm = ConfusionMatrix::from_predictions(vec!["x".into(), "y".into()], &[0, 0, 0, 1], &[0, 0, 1, 1]);
        assert_eq!(cm.counts, vec![vec![2, 1], vec![0, 1]]);
        assert!((cm.balanced_accuracy - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
        assert!((cm.accuracy - 0.75).abs() < 1e-12);
        assert!(cm.to_csv().starts_with("true\\predicted,x,y\nx,2,1\n"));
    }

    #[test]
    fn folds_are_stratified_and_seeded() {
        let labels: Vec<usize> = (0..53).map(|i| usize::from(i % 3 == 0)).collect();
        let f = stratified_folds(&labels, 5, 1).unwrap();
        for class in 0..2 {
            let mut sizes = [0; 5];
            for (i, &l) in labels.iter().enumerate() {
                if l == class {
                    sizes[f[i]] += 1;
                }
            }
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        assert_eq!(f, stratified_folds(&labels, 5, 1).unwrap());
        assert_ne!(f, stratified_folds(&labels, 5, 2).unwrap());
        assert!(stratified_folds(&[0, 0, 0, 1, 1], 3, 0).is_err());
    }

    #[test]
    fn disjoint_support_is_distinguishable() {
        let a = cloud(40, 5, 0.0, 1);
        let b = cloud(40, 5, 8.0, 2);
        let cm = distinguishability(&a, &b, 5, &fast(), 3).unwrap();
        assert!(cm.balanced_accuracy >= 0.99);
    }

    #[test]
    fn empty_side_is_an_error() {
        assert!(distinguishability(&[], &cloud(10, 2, 0.0, 1), 5, &fast(), 0).is_err());
    }
}
