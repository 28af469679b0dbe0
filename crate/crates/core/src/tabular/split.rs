use crate::error::{Error, Result};
use crate::rng::{stream, sub_rng};
use crate::tabular::Dataset;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Disjoint, exhaustive train/test row indices (each sorted ascending).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Seeded 70/30 split with `|train| = round(0.7 n)`.
pub fn split_70_30(dataset: &Dataset, seed: u64) -> Result<SplitIndex> {
    if dataset.meta.duplicated_for_embedding {
        return Err(Error::InvalidArgument(
            "cannot split a dataset duplicated for embedding".into(),
        ));
    }
    split_rows(dataset.rows(), 0.7, seed)
}

/// Split `n` rows with the given train fraction.
pub fn split_rows(n: usize, train_fraction: f64, seed: u64) -> Result<SplitIndex> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 rows to split, found {n}")));
    }
    if !(0.0..1.0).contains(&train_fraction) || train_fraction <= 0.0 {
        return Err(Error::InvalidArgument(format!("train fraction {train_fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut sub_rng(seed, stream::SPLIT, 0));
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut train_rows = order[..n_train].to_vec();
    let mut test_rows = order[n_train..].to_vec();
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok(SplitIndex { train_rows, test_rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::generate_control;

    #[test]
    fn sizes_and_disjointness() {
        let s = split_rows(1000, 0.7, 1).unwrap();
        assert_eq!((s.train_rows.len(), s.test_rows.len()), (700, 300));
        let mut all: Vec<usize> = s.train_rows.iter().chain(&s.test_rows).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());

        let s = split_rows(10, 0.7, 1).unwrap();
        assert_eq!((s.train_rows.len(), s.test_rows.len()), (7, 3));
        assert!(split_rows(9, 0.7, 1).is_err());
    }

    #[test]
    fn seeded() {
        let d = generate_control(3, 100, 0).unwrap();
        assert_eq!(split_70_30(&d, 4).unwrap(), split_70_30(&d, 4).unwrap());
        assert_ne!(split_70_30(&d, 4).unwrap(), split_70_30(&d, 5).unwrap());
        let mut dup = d.clone();
        dup.meta.duplicated_for_embedding = true;
        assert!(split_70_30(&dup, 4).is_err());
    }
}
