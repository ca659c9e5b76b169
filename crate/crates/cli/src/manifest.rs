//! Run manifests written next to every command's outputs.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::formats::write_json;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let digest = Sha256::digest(&bytes);
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { path: path.to_path_buf(), sha256 })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub rng: Option<String>,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// Collects what a command read and wrote, then writes `<command>.manifest.json`.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    rng: Option<String>,
    started_at: String,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl ManifestBuilder {
    pub fn new<C: Serialize>(command: &str, config: &C) -> CliResult<Self> {
        let config = serde_json::to_value(config).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Self {
            command: command.to_string(),
            config,
            seed: None,
            rng: None,
            started_at: now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn seed(&mut self, seed: u64, rng: &str) {
        self.seed = Some(seed);
        self.rng = Some(rng.to_string());
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Hashes every recorded file and writes the manifest into `out_dir`.
    pub fn finish(self, out_dir: &Path) -> CliResult<PathBuf> {
        let digest = |paths: &[PathBuf]| paths.iter().map(|p| FileDigest::of(p)).collect::<CliResult<Vec<_>>>();
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            config: self.config,
            seed: self.seed,
            rng: self.rng,
            started_at: self.started_at,
            finished_at: now(),
            inputs: digest(&self.inputs)?,
            outputs: digest(&self.outputs)?,
        };
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        write_json(&path, &manifest)?;
        Ok(path)
    }
}
