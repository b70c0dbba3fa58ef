use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{read_file, sha256_hex, write_atomic};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    /// Inputs are recorded by file name only, so manifests do not depend on
    /// where a run happened.
    pub fn input(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        Ok(FileRecord {
            path: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub config: Value,
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileRecord>,
    /// Wall-clock seconds; only recorded when timing is requested, because it
    /// would make otherwise identical runs differ.
    pub duration_seconds: Option<f64>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Collects the files a command writes into one output directory.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    records: Vec<FileRecord>,
}

impl OutputSet {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutputSet {
            dir: dir.into(),
            records: Vec::new(),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.dir.join(relative)
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(relative);
        write_atomic(&path, bytes)?;
        let record = FileRecord {
            path: relative.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        };
        match self.records.iter_mut().find(|r| r.path == relative) {
            Some(r) => *r = record,
            None => self.records.push(record),
        }
        Ok(path)
    }

    pub fn records(&self) -> &[FileRecord] {
        &self.records
    }

    /// Writes `manifest.json` last. The run id hashes the command, the
    /// resolved config and the input digests.
    pub fn finish(
        self,
        command: &str,
        master_seed: u64,
        config: Value,
        inputs: Vec<FileRecord>,
        duration_seconds: Option<f64>,
    ) -> Result<RunManifest> {
        let id_source = serde_json::to_vec(&(command, &config, &inputs)).expect("serializable");
        let manifest = RunManifest {
            run_id: sha256_hex(&id_source)[..16].to_string(),
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            config,
            inputs,
            outputs: self.records,
            duration_seconds,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
        text.push('\n');
        write_atomic(&self.dir.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(manifest)
    }
}
