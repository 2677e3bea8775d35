//! Run manifest: config hash, per-file checksums, timings.

use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hash of the canonical (JSON) serialization of the resolved config, so
/// flag overrides change the hash exactly like config edits would.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    hex(&hasher.finalize())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex(&hasher.finalize())
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub files: Vec<FileRecord>,
    /// Wall-clock seconds per stage; the one field that varies between
    /// otherwise identical runs.
    pub timings: Vec<(String, f64)>,
}

pub struct Timings {
    start: Instant,
    last: Instant,
    entries: Vec<(String, f64)>,
}

impl Timings {
    pub fn new() -> Self {
        let now = Instant::now();
        Timings { start: now, last: now, entries: Vec::new() }
    }

    pub fn mark(&mut self, stage: &str) {
        let now = Instant::now();
        self.entries.push((stage.to_string(), now.duration_since(self.last).as_secs_f64()));
        self.last = now;
    }

    pub fn finish(mut self) -> Vec<(String, f64)> {
        let now = Instant::now();
        self.entries
            .push(("total".to_string(), now.duration_since(self.start).as_secs_f64()));
        self.entries
    }
}

impl Default for Timings {
    fn default() -> Self {
        Self::new()
    }
}
