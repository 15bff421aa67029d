//! Run manifests written next to every artifact a command produces.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Full argument vector, enough to replay the run.
    pub argv: Vec<String>,
    /// Effective values after merging flags, config file and defaults.
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub threads: usize,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Collects what a run reads and writes, then fingerprints everything.
#[derive(Debug)]
pub struct RunRecorder {
    command: String,
    argv: Vec<String>,
    threads: usize,
    started_at: u64,
    config: BTreeMap<String, String>,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl RunRecorder {
    pub fn new(command: &str, threads: usize) -> Self {
        RunRecorder {
            command: command.to_string(),
            argv: std::env::args().collect(),
            threads,
            started_at: now(),
            config: BTreeMap::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }

    pub fn seed(&mut self, key: &str, value: u64) -> &mut Self {
        self.seeds.insert(key.to_string(), value);
        self
    }

    pub fn input(&mut self, p: &Path) -> &mut Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(&mut self, p: &Path) -> &mut Self {
        self.outputs.push(p.to_path_buf());
        self
    }

    /// Writes `<first output>.manifest.json`, or `manifest_path` if given.
    pub fn finish(&self, manifest_path: Option<&Path>) -> Result<PathBuf, CliError> {
        let records = |paths: &[PathBuf]| -> Result<Vec<FileRecord>, CliError> {
            paths
                .iter()
                .map(|p| {
                    Ok(FileRecord {
                        path: p.display().to_string(),
                        sha256: sha256_file(p)?,
                    })
                })
                .collect()
        };
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            argv: self.argv.clone(),
            config: self.config.clone(),
            seeds: self.seeds.clone(),
            threads: self.threads,
            inputs: records(&self.inputs)?,
            outputs: records(&self.outputs)?,
            started_at: self.started_at,
            finished_at: now(),
        };
        let path = match manifest_path {
            Some(p) => p.to_path_buf(),
            None => {
                let first = self
                    .outputs
                    .first()
                    .ok_or_else(|| CliError::Usage("run produced no outputs".into()))?;
                let mut name = first.as_os_str().to_owned();
                name.push(".manifest.json");
                PathBuf::from(name)
            }
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
