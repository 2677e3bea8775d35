//! Output directory management: every file carries the config hash and seed
//! in leading comment lines, and every write is recorded for the manifest.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::config::{ConfigError, ConfigResult};
use crate::manifest::{sha256_hex, FileRecord, RunManifest, Timings, TOOL_VERSION};

pub struct OutputDir {
    dir: PathBuf,
    config_hash: String,
    seed: u64,
    records: Vec<FileRecord>,
}

impl OutputDir {
    pub fn create(dir: &Path, config_hash: String, seed: u64) -> ConfigResult<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| ConfigError::Io { path: dir.to_path_buf(), source: e })?;
        // fail now, not after minutes of sampling
        let probe = dir.join(".write_probe");
        fs::write(&probe, b"")
            .map_err(|e| ConfigError::Io { path: dir.to_path_buf(), source: e })?;
        let _ = fs::remove_file(&probe);
        Ok(OutputDir { dir: dir.to_path_buf(), config_hash, seed, records: Vec::new() })
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn header(&self) -> String {
        format!("# config_hash {}\n# seed {}\n", self.config_hash, self.seed)
    }

    /// Writes a commented CSV: header lines, then whatever `emit` produces.
    pub fn write_csv<F>(&mut self, name: &str, emit: F) -> ConfigResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
    {
        let mut buf = self.header().into_bytes();
        emit(&mut buf).map_err(|e| ConfigError::Io { path: self.dir.join(name), source: e })?;
        self.put(name, buf)
    }

    /// Writes a JSON report under a wrapper that carries the hash and seed.
    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> ConfigResult<()> {
        #[derive(serde::Serialize)]
        struct Wrapper<'a, T> {
            config_hash: &'a str,
            seed: u64,
            #[serde(flatten)]
            body: &'a T,
        }
        let text = serde_json::to_string_pretty(&Wrapper {
            config_hash: &self.config_hash,
            seed: self.seed,
            body: value,
        })
        .map_err(|e| ConfigError::Invalid(format!("serialization failed: {e}")))?;
        self.put(name, text.into_bytes())
    }

    /// Writes an SVG (already self-describing; hash goes in an XML comment).
    pub fn write_svg(&mut self, name: &str, svg: &str) -> ConfigResult<()> {
        let body = format!("<!-- config_hash {} seed {} -->\n{svg}", self.config_hash, self.seed);
        self.put(name, body.into_bytes())
    }

    pub fn write_marker(&mut self, name: &str, text: &str) -> ConfigResult<()> {
        let body = format!("{}{text}\n", self.header());
        self.put(name, body.into_bytes())
    }

    fn put(&mut self, name: &str, bytes: Vec<u8>) -> ConfigResult<()> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes).map_err(|e| ConfigError::Io { path, source: e })?;
        self.records
            .push(FileRecord { name: name.to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() });
        Ok(())
    }

    /// Writes the manifest last; its own checksum is not recorded.
    pub fn finish(mut self, command: &str, timings: Timings) -> ConfigResult<()> {
        self.records.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            files: self.records.clone(),
            timings: timings.finish(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| ConfigError::Invalid(format!("manifest serialization failed: {e}")))?;
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| ConfigError::Io { path, source: e })?;
        Ok(())
    }
}
