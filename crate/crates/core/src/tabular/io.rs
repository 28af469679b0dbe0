//! Canonical dataset file: a JSON manifest next to a little-endian f32 blob
//! holding the row-major feature matrix followed by the target vector.

use crate::error::{Error, Result};
use crate::tabular::{content_hash, Dataset, DatasetMeta};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DATASET_FORMAT: &str = "tabcurate-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobRange {
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub meta: DatasetMeta,
    pub row_count: usize,
    pub feature_count: usize,
    pub feature_names: Vec<String>,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub features: BlobRange,
    pub target: BlobRange,
}

fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

/// Write bytes to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn f32_le_bytes<'a>(values: impl Iterator<Item = &'a f64>, out: &mut Vec<u8>) {
    for v in values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
}

pub(crate) fn read_f32_le(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect()
}

/// Write `dataset` to `manifest_path` (JSON) and its `.bin` sibling.
pub fn write_dataset(dataset: &Dataset, manifest_path: &Path) -> Result<DatasetManifest> {
    let n = dataset.rows();
    let f = dataset.feature_count();
    let mut blob = Vec::with_capacity(4 * n * (f + 1));
    f32_le_bytes(dataset.features.iter(), &mut blob);
    let target_offset = blob.len() as u64;
    f32_le_bytes(dataset.target.iter(), &mut blob);
    let bin = blob_path(manifest_path);
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.to_string(),
        meta: dataset.meta.clone(),
        row_count: n,
        feature_count: f,
        feature_names: dataset.feature_names.clone(),
        blob: bin
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        features: BlobRange { offset: 0, length: target_offset },
        target: BlobRange { offset: target_offset, length: 4 * n as u64 },
    };
    write_atomic(&bin, &blob)?;
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(manifest_path, &json)?;
    Ok(manifest)
}

pub fn read_dataset(manifest_path: &Path) -> Result<Dataset> {
    let corrupt = |reason: String| Error::Corrupt { path: manifest_path.to_path_buf(), reason };
    let text = std::fs::read(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_slice(&text)?;
    if manifest.format != DATASET_FORMAT {
        return Err(corrupt(format!("unknown format `{}`", manifest.format)));
    }
    let bin = manifest_path.with_file_name(&manifest.blob);
    let blob = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let (n, f) = (manifest.row_count, manifest.feature_count);
    let slice = |r: &BlobRange, expected: usize| -> Result<&[u8]> {
        let (start, len) = (r.offset as usize, r.length as usize);
        if len != 4 * expected || start + len > blob.len() {
            return Err(corrupt(format!("bad blob range {r:?}")));
        }
        Ok(&blob[start..start + len])
    };
    let features = Array2::from_shape_vec((n, f), read_f32_le(slice(&manifest.features, n * f)?))
        .map_err(|e| corrupt(e.to_string()))?;
    let target = Array1::from(read_f32_le(slice(&manifest.target, n)?));
    if content_hash(&features, &target) != manifest.meta.content_hash {
        return Err(corrupt("content hash mismatch".into()));
    }
    Ok(Dataset {
        features,
        target,
        feature_names: manifest.feature_names,
        meta: manifest.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::generate_control;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_control(5, 64, 3).unwrap();
        let p = dir.path().join("d.json");
        write_dataset(&d, &p).unwrap();
        let back = read_dataset(&p).unwrap();
        assert_eq!(back.meta, d.meta);
        for (a, b) in back.features.iter().zip(d.features.iter()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        let blob1 = std::fs::read(dir.path().join("d.bin")).unwrap();
        let p2 = dir.path().join("e.json");
        write_dataset(&back, &p2).unwrap();
        let blob2 = std::fs::read(dir.path().join("e.bin")).unwrap();
        assert_eq!(blob1, blob2);
        assert_eq!(blob1.len(), 4 * 64 * 6);
        // Little-endian f32 layout: first value is features[0][0].
        assert_eq!(
            f32::from_le_bytes(blob1[..4].try_into().unwrap()),
            d.features[[0, 0]] as f32
        );
    }

    #[test]
    fn tampered_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_control(3, 16, 1).unwrap();
        let p = dir.path().join("d.json");
        write_dataset(&d, &p).unwrap();
        let bin = dir.path().join("d.bin");
        let mut blob = std::fs::read(&bin).unwrap();
        blob[0] ^= 0x40;
        std::fs::write(&bin, blob).unwrap();
        assert!(matches!(read_dataset(&p), Err(Error::Corrupt { .. })));
    }
}
