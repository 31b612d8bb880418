//! `MANIFEST.json`, written at the start of every run and rewritten at the end.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "MANIFEST.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// SHA-256 of the raw config file bytes.
    pub config_hash: String,
    pub master_seed: u64,
    pub artifact_version: String,
    /// Milliseconds since the Unix epoch.
    pub started_ms: u64,
    pub finished_ms: Option<u64>,
    pub complete: bool,
    pub error: Option<String>,
    pub outputs: Vec<String>,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn config_hash(raw: &[u8]) -> String {
    hex::encode(Sha256::digest(raw))
}

impl Manifest {
    pub fn start(command: &str, raw_config: &[u8], master_seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(raw_config),
            master_seed,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            started_ms: now_ms(),
            finished_ms: None,
            complete: false,
            error: None,
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self, outputs: Vec<String>, error: Option<String>) {
        self.finished_ms = Some(now_ms());
        self.complete = error.is_none();
        self.error = error;
        self.outputs = outputs;
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(MANIFEST_NAME), crate::io::json_bytes(self)?)
    }
}
