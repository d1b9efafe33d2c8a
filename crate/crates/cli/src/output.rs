use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub input_config: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub version: String,
    /// sha256 of `config.json` as written.
    pub config_sha256: String,
    pub timestamp: String,
    pub outputs: Vec<OutputFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files for one command and writes them with the manifest.
pub struct Run {
    command: String,
    input_config: Option<PathBuf>,
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Run {
    pub fn new(command: &str, input_config: Option<&Path>, dir: &Path) -> Self {
        Run {
            command: command.into(),
            input_config: input_config.map(Path::to_path_buf),
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    /// Writes the effective config, every output and the manifest.
    pub fn finish<T: Serialize>(self, config: &T) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir)?;
        let mut cfg =
            serde_json::to_string_pretty(config).map_err(|e| CliError::Numeric(e.to_string()))?;
        cfg.push('\n');
        fs::write(self.dir.join(CONFIG), &cfg)?;
        let mut outputs = Vec::new();
        for (name, bytes) in &self.files {
            fs::write(self.dir.join(name), bytes)?;
            outputs.push(OutputFile {
                file: name.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        let manifest = RunManifest {
            command: self.command,
            input_config: self.input_config,
            output_dir: self.dir.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(cfg.as_bytes()),
            timestamp: chrono::Utc::now().to_rfc3339(),
            outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(())
    }
}
