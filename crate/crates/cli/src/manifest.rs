use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_data, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to the primary output of every run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Digest of the effective (merged) configuration.
    pub config_sha256: String,
    pub config_files: Vec<FileDigest>,
    pub started: String,
    pub finished: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> CliResult<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| io_data(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub struct ManifestBuilder {
    command: String,
    config_sha256: String,
    config_files: Vec<PathBuf>,
    started: String,
    inputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn start(command: &str, config_text: &str, config_files: &[PathBuf], inputs: &[PathBuf]) -> Self {
        Self {
            command: command.into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            config_files: config_files.to_vec(),
            started: now(),
            inputs: inputs.to_vec(),
        }
    }

    /// Write the manifest for `outputs` next to the first of them.
    pub fn finish(self, outputs: &[PathBuf]) -> CliResult<PathBuf> {
        let digests = |v: &[PathBuf]| v.iter().map(|p| digest_file(p)).collect::<CliResult<Vec<_>>>();
        let m = RunManifest {
            tool: "extruder".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_sha256: self.config_sha256,
            config_files: digests(&self.config_files)?,
            started: self.started,
            finished: now(),
            inputs: digests(&self.inputs)?,
            outputs: digests(outputs)?,
        };
        let path = manifest_path(&outputs[0]);
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| io_data(&path, e))?;
        Ok(path)
    }
}
