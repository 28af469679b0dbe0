//! Checkpoints: a JSON manifest plus a little-endian f32 blob. Parameters are
//! always held at f32 precision, so a round trip is bit-exact.

use crate::error::{Error, Result};
use crate::pfn::{PfnConfig, PfnModel, Provenance, Weights};
use crate::tabular::{read_f32_le, write_atomic, BlobRange};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT: &str = "tabcurate-pfn/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: BlobRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub model_id: String,
    pub config: PfnConfig,
    pub provenance: Provenance,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

/// Write `model` to `manifest_path` and a `.bin` sibling.
pub fn save_checkpoint(model: &PfnModel, manifest_path: &Path) -> Result<CheckpointManifest> {
    let mut blob = Vec::with_capacity(4 * model.parameter_count());
    let mut tensors = Vec::new();
    for (name, shape, values) in model.weights.tensors() {
        let offset = blob.len() as u64;
        crate::tabular::f32_le_bytes(values.iter(), &mut blob);
        tensors.push(TensorEntry {
            name,
            shape,
            range: BlobRange { offset, length: blob.len() as u64 - offset },
        });
    }
    let bin = manifest_path.with_extension("bin");
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        model_id: model.id(),
        config: model.config.clone(),
        provenance: model.provenance.clone(),
        blob: bin.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        tensors,
    };
    write_atomic(&bin, &blob)?;
    write_atomic(manifest_path, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<PfnModel> {
    let corrupt = |reason: String| Error::Corrupt { path: manifest_path.to_path_buf(), reason };
    let text = std::fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_slice(&text)?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(corrupt(format!("unknown format {:?}", manifest.format)));
    }
    manifest.config.validate()?;
    let bin = manifest_path.with_file_name(&manifest.blob);
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let mut weights = Weights::zeros(&manifest.config);
    let expected = weights.tensors();
    if expected.len() != manifest.tensors.len() {
        return Err(corrupt(format!("{} tensors, expected {}", manifest.tensors.len(), expected.len())));
    }
    let mut flat = Vec::with_capacity(weights.parameter_count());
    for ((name, shape, _), entry) in expected.iter().zip(&manifest.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(corrupt(format!("tensor {} {:?} where {name} {shape:?} expected", entry.name, entry.shape)));
        }
        let start = entry.range.offset as usize;
        let end = start + entry.range.length as usize;
        let count: usize = shape.iter().product();
        if end > bytes.len() || entry.range.length as usize != 4 * count {
            return Err(corrupt(format!("tensor {name} range out of bounds")));
        }
        flat.extend(read_f32_le(&bytes[start..end]));
    }
    weights.load_flat(&flat);
    if !weights.all_finite() {
        return Err(corrupt("non-finite parameter".into()));
    }
    let model = PfnModel { config: manifest.config, weights, provenance: manifest.provenance };
    if model.id() != manifest.model_id {
        return Err(corrupt(format!("model id {} does not match manifest {}", model.id(), manifest.model_id)));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_exact_round_trip() {
        let c = PfnConfig { d_model: 16, heads: 4, buckets: 8, max_features: 10, ..PfnConfig::default() };
        let m = PfnModel::init(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&m, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        let a: Vec<u64> = m.weights.to_flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.weights.to_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn tampered_blob_is_detected() {
        let c = PfnConfig { d_model: 8, heads: 2, buckets: 4, max_features: 4, ..PfnConfig::default() };
        let m = PfnModel::init(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&m, &path).unwrap();
        let bin = path.with_extension("bin");
        let mut bytes = std::fs::read(&bin).unwrap();
        bytes[10] ^= 0x40;
        std::fs::write(&bin, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Corrupt { .. })));
    }
}
