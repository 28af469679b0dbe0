//! Tabular regression data: ingestion, the fixed preprocessing pipeline,
//! pure-noise control datasets, train/test splits and the canonical on-disk
//! dataset format.

mod control;
mod io;
mod load;
mod preprocess;
mod split;

pub use control::generate_control;
pub use io::{read_dataset, write_atomic, write_dataset, BlobRange, DatasetManifest, DATASET_FORMAT};
pub(crate) use io::{f32_le_bytes, read_f32_le};
pub use load::{load_csv, ColumnData, ColumnKind, RawColumn, RawTable, SchemaSidecar};
pub use preprocess::{dedupe, preprocess, PreprocessOptions, MAX_FEATURES, MAX_ROWS};
pub use split::{split_70_30, split_rows, SplitIndex};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

/// Domain label attached to every dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainLabel {
    Engineering,
    NonEngineering,
    Synthetic,
    Control,
}

impl fmt::Display for DomainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainLabel::Engineering => "engineering",
            DomainLabel::NonEngineering => "non_engineering",
            DomainLabel::Synthetic => "synthetic",
            DomainLabel::Control => "control",
        })
    }
}

/// 128-bit content digest (truncated SHA-256 of the f32 little-endian values).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 16]);

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("content hash must be 16 bytes"))?;
        Ok(ContentHash(arr))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub label: DomainLabel,
    pub original_rows: usize,
    pub duplicated_for_embedding: bool,
    pub seed: u64,
    pub content_hash: ContentHash,
}

/// A standardized numeric table: `features` is rows × features, `target` has
/// one entry per row. Values live in memory as f64 and are persisted as f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub target: Array1<f64>,
    pub feature_names: Vec<String>,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Assemble a dataset from already-standardized columns and compute its hash.
    pub fn new(
        features: Array2<f64>,
        target: Array1<f64>,
        feature_names: Vec<String>,
        name: impl Into<String>,
        label: DomainLabel,
        original_rows: usize,
        duplicated_for_embedding: bool,
        seed: u64,
    ) -> Self {
        let content_hash = content_hash(&features, &target);
        Dataset {
            features,
            target,
            feature_names,
            meta: DatasetMeta {
                name: name.into(),
                label,
                original_rows,
                duplicated_for_embedding,
                seed,
                content_hash,
            },
        }
    }

    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    /// Select rows (in the given order) into a new dataset, keeping metadata.
    /// The result is not re-standardized.
    pub fn select_rows(&self, rows: &[usize]) -> (Array2<f64>, Array1<f64>) {
        (
            self.features.select(Axis(0), rows),
            self.target.select(Axis(0), rows),
        )
    }

    /// View the dataset as a raw numeric table whose last column is `target`.
    pub fn to_raw(&self) -> RawTable {
        let mut columns: Vec<RawColumn> = self
            .features
            .columns()
            .into_iter()
            .zip(&self.feature_names)
            .map(|(c, name)| RawColumn {
                name: name.clone(),
                data: ColumnData::Numeric(c.to_vec()),
            })
            .collect();
        columns.push(RawColumn {
            name: "target".into(),
            data: ColumnData::Numeric(self.target.to_vec()),
        });
        RawTable {
            name: self.meta.name.clone(),
            row_count: self.rows(),
            dropped_rows: 0,
            columns,
        }
    }

    /// Check the emitted-dataset invariants. Returns a description of the first
    /// violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let f = self.feature_count();
        if !(2..=MAX_FEATURES).contains(&f) {
            return Err(format!("feature count {f} outside [2, {MAX_FEATURES}]"));
        }
        if self.target.len() != self.rows() {
            return Err("target length differs from row count".into());
        }
        if self.features.iter().chain(self.target.iter()).any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        let check = |col: ArrayView1<f64>, what: &str| -> std::result::Result<(), String> {
            let (mean, var) = mean_var(col);
            if var == 0.0 && mean == 0.0 {
                return Ok(());
            }
            if mean.abs() > 1e-6 || (var - 1.0).abs() > 1e-5 {
                return Err(format!("{what}: mean {mean:e}, variance {var}"));
            }
            Ok(())
        };
        for (j, c) in self.features.columns().into_iter().enumerate() {
            check(c, &format!("feature {j}"))?;
        }
        check(self.target.view(), "target")
    }
}

/// Population mean and variance, accumulated in f64.
pub fn mean_var(col: ArrayView1<f64>) -> (f64, f64) {
    let n = col.len() as f64;
    if col.is_empty() {
        return (0.0, 0.0);
    }
    let mean = col.sum() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Z-score a column in place (population variance). Constant columns become
/// all zeros. Returns `false` for constant columns.
pub fn zscore_in_place(mut col: ndarray::ArrayViewMut1<f64>) -> bool {
    let (mean, var) = mean_var(col.view());
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        col.fill(0.0);
        return false;
    }
    col.mapv_inplace(|v| (v - mean) / sd);
    true
}

/// Z-score every column of a matrix; returns the indices of constant columns.
pub fn zscore_columns(m: &mut Array2<f64>) -> Vec<usize> {
    let mut constant = Vec::new();
    for (j, col) in m.columns_mut().into_iter().enumerate() {
        if !zscore_in_place(col) {
            constant.push(j);
        }
    }
    constant
}

pub fn content_hash(features: &Array2<f64>, target: &Array1<f64>) -> ContentHash {
    let mut h = Sha256::new();
    h.update((features.nrows() as u64).to_le_bytes());
    h.update((features.ncols() as u64).to_le_bytes());
    for v in features.iter() {
        h.update((*v as f32).to_le_bytes());
    }
    for v in target.iter() {
        h.update((*v as f32).to_le_bytes());
    }
    let digest = h.finalize();
    let mut out = [0u8; 16];
    out.copy_from_slice(&digest[..16]);
    ContentHash(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zscore_matches_population_convention() {
        let mut a = array![1.0, 2.0, 3.0];
        assert!(zscore_in_place(a.view_mut()));
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (x, e) in a.iter().zip(expected) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_becomes_zero() {
        let mut a = array![4.0, 4.0, 4.0];
        assert!(!zscore_in_place(a.view_mut()));
        assert_eq!(a, array![0.0, 0.0, 0.0]);
    }

    #[test]
    fn hash_sees_single_cell_changes() {
        let f = Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f64);
        let t = array![0.0, 1.0, 2.0, 3.0];
        let mut f2 = f.clone();
        f2[[3, 1]] += 0.5;
        assert_eq!(content_hash(&f, &t), content_hash(&f.clone(), &t));
        assert_ne!(content_hash(&f, &t), content_hash(&f2, &t));
    }
}
