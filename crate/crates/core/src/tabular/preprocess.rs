use crate::error::{Error, Result};
use crate::rng::{stream, sub_rng};
use crate::tabular::{zscore_in_place, ColumnData, Dataset, DomainLabel, RawTable};
use ndarray::{Array1, Array2};
use rand::Rng;
use std::collections::HashSet;

/// Row cap applied to every dataset.
pub const MAX_ROWS: usize = 1024;
/// Datasets with more encoded features than this are rejected.
pub const MAX_FEATURES: usize = 100;

#[derive(Debug, Clone)]
pub struct PreprocessOptions {
    /// Explicit target; when `None` a candidate is chosen at random.
    pub target_column: Option<String>,
    /// Restrict the random target choice to these columns (all numeric columns when empty).
    pub target_candidates: Vec<String>,
    pub seed: u64,
    /// Duplicate rows up to [`MAX_ROWS`] for embedding generation.
    pub for_embedding: bool,
    pub label: DomainLabel,
}

impl PreprocessOptions {
    pub fn new(seed: u64, for_embedding: bool) -> Self {
        PreprocessOptions {
            target_column: None,
            target_candidates: Vec::new(),
            seed,
            for_embedding,
            label: DomainLabel::Engineering,
        }
    }

    pub fn with_target(mut self, target: impl Into<String>) -> Self {
        self.target_column = Some(target.into());
        self
    }

    pub fn with_label(mut self, label: DomainLabel) -> Self {
        self.label = label;
        self
    }
}

/// Turn a raw table into a standardized [`Dataset`].
///
/// In order: pick the target, one-hot encode categorical features, reject
/// tables with more than [`MAX_FEATURES`] encoded features, keep a seeded
/// subset of [`MAX_ROWS`] rows, duplicate rows up to [`MAX_ROWS`] when
/// preparing for embedding, then z-score every column independently.
pub fn preprocess(raw: &RawTable, opts: &PreprocessOptions) -> Result<Dataset> {
    raw.validate()?;
    let target_idx = choose_target(raw, opts)?;
    let n = raw.row_count;

    // One-hot encoding of all non-target columns.
    let mut feature_cols: Vec<Vec<f64>> = Vec::new();
    let mut feature_names = Vec::new();
    for (j, col) in raw.columns.iter().enumerate() {
        if j == target_idx {
            continue;
        }
        match &col.data {
            ColumnData::Numeric(v) => {
                feature_cols.push(v.clone());
                feature_names.push(col.name.clone());
            }
            ColumnData::Categorical { levels, codes } => {
                for (level_idx, level) in levels.iter().enumerate() {
                    feature_cols.push(
                        codes
                            .iter()
                            .map(|&c| if c as usize == level_idx { 1.0 } else { 0.0 })
                            .collect(),
                    );
                    feature_names.push(format!("{}={}", col.name, level));
                }
            }
        }
    }
    let f = feature_cols.len();
    if f > MAX_FEATURES {
        return Err(Error::TooManyFeatures(f));
    }
    if f < 2 {
        return Err(Error::TooFewFeatures(f));
    }

    let rows = select_rows(n, opts.seed, opts.for_embedding);
    let duplicated = rows.len() > n;

    let mut features = Array2::<f64>::zeros((rows.len(), f));
    for (j, col) in feature_cols.iter().enumerate() {
        for (i, &r) in rows.iter().enumerate() {
            features[[i, j]] = col[r];
        }
    }
    let target_values = match &raw.columns[target_idx].data {
        ColumnData::Numeric(v) => v,
        ColumnData::Categorical { .. } => unreachable!("checked in choose_target"),
    };
    let mut target: Array1<f64> = rows.iter().map(|&r| target_values[r]).collect();

    for col in features.columns_mut() {
        zscore_in_place(col);
    }
    if !zscore_in_place(target.view_mut()) {
        return Err(Error::ConstantTarget(raw.columns[target_idx].name.clone()));
    }

    Ok(Dataset::new(
        features,
        target,
        feature_names,
        raw.name.clone(),
        opts.label,
        n,
        duplicated,
        opts.seed,
    ))
}

fn choose_target(raw: &RawTable, opts: &PreprocessOptions) -> Result<usize> {
    let index_of = |name: &str| {
        raw.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let idx = if let Some(t) = &opts.target_column {
        index_of(t)?
    } else {
        let candidates: Vec<usize> = if opts.target_candidates.is_empty() {
            raw.columns
                .iter()
                .enumerate()
                .filter(|(_, c)| matches!(c.data, ColumnData::Numeric(_)))
                .map(|(j, _)| j)
                .collect()
        } else {
            opts.target_candidates
                .iter()
                .map(|c| index_of(c))
                .collect::<Result<_>>()?
        };
        match candidates.len() {
            0 => return Err(Error::InvalidTable("no numeric target candidate".into())),
            1 => candidates[0],
            k => {
                let mut rng = sub_rng(opts.seed, stream::TARGET_CHOICE, 0);
                candidates[rng.random_range(0..k)]
            }
        }
    };
    if !matches!(raw.columns[idx].data, ColumnData::Numeric(_)) {
        return Err(Error::CategoricalTarget(raw.columns[idx].name.clone()));
    }
    Ok(idx)
}

/// Row indices after capping and (optionally) duplication.
fn select_rows(n: usize, seed: u64, for_embedding: bool) -> Vec<usize> {
    if n > MAX_ROWS {
        let mut rng = sub_rng(seed, stream::ROW_SUBSET, 0);
        let mut idx = rand::seq::index::sample(&mut rng, n, MAX_ROWS).into_vec();
        idx.sort_unstable();
        return idx;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if for_embedding && n < MAX_ROWS {
        let mut rng = sub_rng(seed, stream::ROW_DUPLICATE, 0);
        idx.extend((n..MAX_ROWS).map(|_| rng.random_range(0..n)));
    }
    idx
}

/// Keep the first dataset for each content hash.
pub fn dedupe(datasets: Vec<Dataset>) -> Vec<Dataset> {
    let mut seen = HashSet::new();
    datasets
        .into_iter()
        .filter(|d| seen.insert(d.meta.content_hash))
        .collect()
}
