//! Dataset embeddings: the mean final-layer representation of every row with
//! all rows presented as labelled context.

use crate::error::{Error, Result};
use crate::par;
use crate::pfn::{net, PfnModel, TaskView};
use crate::tabular::{write_atomic, ContentHash, Dataset, MAX_ROWS};
use ndarray::{Array1, Array2, Axis};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEmbedding {
    /// Dataset name.
    pub dataset: String,
    pub vector: Vec<f64>,
    pub dataset_hash: ContentHash,
    pub model_id: String,
}

/// Mean row representation with every row as context. Rows need not number 1024.
pub fn embed_rows(model: &PfnModel, features: &Array2<f64>, target: &Array1<f64>) -> Result<Array1<f64>> {
    let empty = Array2::<f64>::zeros((0, features.ncols()));
    let task = TaskView { context_x: features.view(), context_y: target.view(), query_x: empty.view() };
    if features.nrows() == 0 {
        return Err(Error::InvalidArgument("empty context".into()));
    }
    if features.ncols() > model.config.max_features {
        return Err(Error::TooManyFeatures(features.ncols()));
    }
    let fwd = net::forward(&model.weights, &model.config, task, false);
    Ok(fwd.row_embeddings.mean_axis(Axis(0)).expect("non-empty"))
}

/// Embed a dataset preprocessed for embedding (exactly 1024 rows).
pub fn embed_dataset(model: &PfnModel, dataset: &Dataset) -> Result<DatasetEmbedding> {
    if dataset.rows() != MAX_ROWS {
        return Err(Error::InvalidArgument(format!(
            "dataset {} has {} rows, embedding needs exactly {MAX_ROWS}",
            dataset.meta.name,
            dataset.rows()
        )));
    }
    let v = embed_rows(model, &dataset.features, &dataset.target)?;
    Ok(DatasetEmbedding {
        dataset: dataset.meta.name.clone(),
        vector: v.to_vec(),
        dataset_hash: dataset.meta.content_hash,
        model_id: model.id(),
    })
}

/// Embed many datasets in parallel; output order follows input order.
pub fn embed_all(model: &PfnModel, datasets: &[&Dataset]) -> Result<Vec<DatasetEmbedding>> {
    par::try_map_range(datasets.len(), |i| embed_dataset(model, datasets[i]))
}

/// Write `dataset,model_id,e0..e{d-1}` CSV.
pub fn write_embeddings(path: &Path, embeddings: &[DatasetEmbedding]) -> Result<()> {
    let d = embeddings.first().map_or(0, |e| e.vector.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["dataset".to_string(), "model_id".to_string()];
    header.extend((0..d).map(|i| format!("e{i}")));
    w.write_record(&header)?;
    for e in embeddings {
        if e.vector.len() != d {
            return Err(Error::Shape(format!("embedding {} has length {}, expected {d}", e.dataset, e.vector.len())));
        }
        let mut rec = vec![e.dataset.clone(), e.model_id.clone()];
        rec.extend(e.vector.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Read an embedding CSV. Dataset hashes are not stored and come back zeroed.
pub fn read_embeddings(path: &Path) -> Result<Vec<DatasetEmbedding>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vector = rec
            .iter()
            .skip(2)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Corrupt { path: path.to_path_buf(), reason: format!("bad value {s:?}") })
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(DatasetEmbedding {
            dataset: rec[0].to_string(),
            model_id: rec[1].to_string(),
            vector,
            dataset_hash: ContentHash([0; 16]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfn::PfnConfig;
    use crate::tabular::generate_control;

    fn small() -> PfnModel {
        PfnModel::init(&PfnConfig { d_model: 16, heads: 2, buckets: 8, max_features: 8, ..PfnConfig::default() })
            .unwrap()
    }

    #[test]
    fn embedding_needs_full_rows_and_is_order_free() {
        let m = small();
        let d = generate_control(5, 1024, 1).unwrap();
        let e = embed_dataset(&m, &d).unwrap();
        assert_eq!(e.vector.len(), 16);
        let rev: Vec<usize> = (0..1024).rev().collect();
        let (x, y) = d.select_rows(&rev);
        let p = embed_rows(&m, &x, &y).unwrap();
        for (a, b) in e.vector.iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let short = generate_control(5, 100, 1).unwrap();
        assert!(embed_dataset(&m, &short).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let e = DatasetEmbedding {
            dataset: "a".into(),
            vector: vec![0.1, -2.5, 1.0 / 3.0],
            dataset_hash: ContentHash([0; 16]),
            model_id: "pfn-x".into(),
        };
        write_embeddings(&path, std::slice::from_ref(&e)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("dataset,model_id,e0,e1,e2\n"));
        assert_eq!(read_embeddings(&path).unwrap(), vec![e]);
    }
}
