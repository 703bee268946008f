use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use saloss_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// What a command produced and with which settings. Artifact paths are
/// relative to the output directory so manifests compare equal across
/// output locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seeds: Vec<u64>) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config_hash(&config)?,
            config,
            seeds,
            artifacts: BTreeMap::new(),
        })
    }

    pub fn add(&mut self, key: impl Into<String>, file: impl Into<String>) {
        self.artifacts.insert(key.into(), file.into());
    }

    /// Writes the manifest into `out` after checking every artifact exists.
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        for (key, file) in &self.artifacts {
            if !out.join(file).is_file() {
                return Err(Error::data(format!(
                    "artifact `{key}` missing at {}",
                    out.join(file).display()
                )));
            }
        }
        let path = out.join(MANIFEST_FILE);
        write_json(&path, self)?;
        Ok(path)
    }
}

/// SHA-256 of the compact JSON encoding. JSON values keep object keys
/// sorted, so the hash is stable for a given config.
pub fn config_hash(config: &serde_json::Value) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
