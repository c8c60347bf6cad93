//! Run manifests and guarded artifact writes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, Kind};

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a Value,
    config_hash: String,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    durations_ms: Vec<(String, u128)>,
    #[serde(skip_serializing_if = "Value::is_null")]
    summary: Value,
}

/// Tracks one stage: what it read, what it wrote and how long each step took.
pub struct Stage {
    command: &'static str,
    force: bool,
    seed: u64,
    config: Value,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    durations: Vec<(String, u128)>,
    clock: Instant,
    pub summary: Value,
}

impl Stage {
    /// Fails up front if any output (or the manifest) exists and `force` is
    /// off.
    pub fn start(
        command: &'static str,
        config: &impl Serialize,
        seed: u64,
        force: bool,
        outputs: &[&Path],
    ) -> CliResult<Self> {
        if !force {
            let manifest = outputs.first().map(|p| manifest_path(p));
            for path in outputs.iter().map(|p| p.to_path_buf()).chain(manifest) {
                if path.exists() {
                    return Err(CliError::new(
                        Kind::OutputExists,
                        format!("{} exists; pass --force to overwrite", path.display()),
                    ));
                }
            }
        }
        Ok(Self {
            command,
            force,
            seed,
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            durations: Vec::new(),
            clock: Instant::now(),
            summary: Value::Null,
        })
    }

    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::missing(path),
            _ => CliError::new(Kind::Failure, format!("{}: {e}", path.display())),
        })?;
        self.inputs.push(FileEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn read_string(&mut self, path: &Path) -> CliResult<String> {
        String::from_utf8(self.read(path)?)
            .map_err(|_| CliError::new(Kind::Schema, format!("{} is not UTF-8", path.display())))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        if path.exists() && !self.force {
            return Err(CliError::new(
                Kind::OutputExists,
                format!("{} exists; pass --force to overwrite", path.display()),
            ));
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, bytes).map_err(|e| CliError::new(Kind::Failure, format!("{}: {e}", path.display())))?;
        self.outputs.push(FileEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Records the time since the previous lap under `name`.
    pub fn lap(&mut self, name: &str) {
        self.durations.push((name.to_string(), self.clock.elapsed().as_millis()));
        self.clock = Instant::now();
    }

    /// Writes `<primary>.manifest.json`.
    pub fn finish(mut self, primary: &Path) -> CliResult<()> {
        self.lap("finish");
        let config_text = serde_json::to_string(&self.config)?;
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            config: &self.config,
            config_hash: sha256_hex(config_text.as_bytes()),
            inputs: self.inputs,
            outputs: self.outputs,
            durations_ms: self.durations,
            summary: self.summary,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let path = manifest_path(primary);
        fs::write(&path, text).map_err(|e| CliError::new(Kind::Failure, format!("{}: {e}", path.display())))?;
        Ok(())
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}
