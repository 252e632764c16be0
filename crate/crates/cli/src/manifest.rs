//! Staged outputs and the run manifest.
//!
//! Outputs are held in memory until the run succeeds, then each file and
//! finally the manifest are written through a temporary name and renamed into
//! place. A failed run writes nothing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::sha256;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_sha256: String,
    pub library_version: String,
    pub seed: u64,
    pub workers: usize,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputEntry>,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("manifest_{command}.json")
    }
}

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
        bytes.push(b'\n');
        self.add(name, bytes);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> Vec<OutputEntry> {
        self.files
            .iter()
            .map(|(name, bytes)| OutputEntry {
                file: name.clone(),
                sha256: hex::encode(sha256(bytes)),
                bytes: bytes.len() as u64,
            })
            .collect()
    }

    /// Writes every staged file, then `manifest`, into `dir`.
    pub fn commit(self, dir: &Path, manifest: &RunManifest) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::with_capacity(self.files.len() + 1);
        for (name, bytes) in &self.files {
            written.push(write_atomic(dir, name, bytes)?);
        }
        let mut m = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
        m.push(b'\n');
        written.push(write_atomic(dir, &RunManifest::file_name(&manifest.command), &m)?);
        Ok(written)
    }
}

pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let io = |source| CliError::Io {
        path: target.clone(),
        source,
    };
    std::fs::write(&tmp, bytes).map_err(io)?;
    std::fs::rename(&tmp, &target).map_err(io)?;
    Ok(target)
}
