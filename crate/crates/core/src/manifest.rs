//! Run manifests: what was run, with which config, and what it wrote.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    /// path relative to the run directory
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub version: String,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub outputs: Vec<OutputEntry>,
    pub checks: Vec<CheckSummary>,
    pub diverged: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    /// `config_text` is the serialized config the run used.
    pub fn start(command: &str, config_text: &str) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: unix_now(),
            finished_unix: None,
            outputs: Vec::new(),
            checks: Vec::new(),
            diverged: false,
        }
    }

    /// Records a file already written under `dir`.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let bytes = std::fs::read(dir.join(name))?;
        self.outputs.push(OutputEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn add_check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(CheckSummary {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    /// Stamps the finish time, verifies the outputs and writes `manifest.json`.
    pub fn finish(&mut self, dir: &Path) -> Result<PathBuf> {
        self.finished_unix = Some(unix_now());
        self.verify(dir)?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }

    /// Every listed output exists, is non-empty and still has its recorded hash.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for out in &self.outputs {
            let p = dir.join(&out.path);
            let bytes = std::fs::read(&p).map_err(|_| Error::Format(format!("missing output {}", p.display())))?;
            if bytes.is_empty() {
                return Err(Error::Format(format!("empty output {}", p.display())));
            }
            if sha256_hex(&bytes) != out.sha256 {
                return Err(Error::Format(format!("output {} changed after it was recorded", p.display())));
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}
