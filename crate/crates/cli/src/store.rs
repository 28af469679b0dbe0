//! Artifact directory: lock file, per-stage run manifests and file hashing.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use tabcurate_core::tabular::write_atomic;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const LOCK_FILE: &str = ".lock";

/// Hex SHA-256 of a file's bytes.
pub fn hash_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn hash_str(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

/// Record of one completed stage. `key` hashes everything the stage's outputs
/// depend on; a stage whose key and output hashes still match is skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub id: String,
    pub command: String,
    pub key: String,
    pub config: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub wall_time_secs: f64,
    pub tool_version: String,
    /// Every file the stage opened for reading, relative to the store root or
    /// absolute for files under the data directory.
    pub files_read: Vec<String>,
    /// Whether any real (non-synthetic) dataset was read.
    pub real_data_read: bool,
}

/// Exclusive handle on an artifact directory. The lock file is removed on drop.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    lock: PathBuf,
}

impl Store {
    pub fn open(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root.join("manifests")).map_err(|e| CliError::io(root, e))?;
        let lock = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(Store { root: root.to_path_buf(), lock }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(CliError::Locked(root.to_path_buf()))
            }
            Err(e) => Err(CliError::io(&lock, e)),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn ensure_dir(&self, rel: &str) -> CliResult<PathBuf> {
        let p = self.path(rel);
        std::fs::create_dir_all(&p).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{stage}.json"))
    }

    pub fn manifest(&self, stage: &str) -> CliResult<Option<RunManifest>> {
        let p = self.manifest_path(stage);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    /// Require a completed stage, for stages that consume its outputs.
    pub fn require(&self, stage: &str) -> CliResult<RunManifest> {
        self.manifest(stage)?
            .ok_or_else(|| CliError::MissingArtifact(format!("stage `{stage}` has not run")))
    }

    pub fn write_manifest(&self, m: &RunManifest) -> CliResult<()> {
        let text = serde_json::to_string_pretty(m)?;
        write_atomic(&self.manifest_path(&m.command), text.as_bytes())?;
        Ok(())
    }

    /// True when `stage` completed with `key` and every recorded output still
    /// hashes to its recorded value.
    pub fn is_current(&self, stage: &str, key: &str) -> CliResult<bool> {
        let Some(m) = self.manifest(stage)? else {
            return Ok(false);
        };
        if m.key != key {
            return Ok(false);
        }
        for (rel, h) in &m.outputs {
            let p = self.path(rel);
            if !p.exists() || &hash_file(&p)? != h {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Hash the given outputs (relative paths) into a map.
    pub fn hash_outputs(&self, rels: &[String]) -> CliResult<BTreeMap<String, String>> {
        rels.iter().map(|r| Ok((r.clone(), hash_file(&self.path(r))?))).collect()
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        write_atomic(&p, bytes)?;
        Ok(())
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, rel: &str) -> CliResult<T> {
        let p = self.path(rel);
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = Store::open(dir.path()).unwrap();
        assert!(matches!(Store::open(dir.path()), Err(CliError::Locked(_))));
        drop(a);
        Store::open(dir.path()).unwrap();
    }

    #[test]
    fn currency_tracks_key_and_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let s = Store::open(dir.path()).unwrap();
        s.write_bytes("x/out.txt", b"hello").unwrap();
        let m = RunManifest {
            id: "m".into(),
            command: "demo".into(),
            key: "k1".into(),
            config: String::new(),
            inputs: BTreeMap::new(),
            outputs: s.hash_outputs(&["x/out.txt".into()]).unwrap(),
            wall_time_secs: 0.0,
            tool_version: TOOL_VERSION.into(),
            files_read: vec![],
            real_data_read: false,
        };
        s.write_manifest(&m).unwrap();
        assert!(s.is_current("demo", "k1").unwrap());
        assert!(!s.is_current("demo", "k2").unwrap());
        s.write_bytes("x/out.txt", b"changed").unwrap();
        assert!(!s.is_current("demo", "k1").unwrap());
    }
}
