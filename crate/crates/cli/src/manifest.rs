use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

#[derive(Debug, Serialize)]
pub struct OutputFile {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run: the command, the fully resolved settings, and the
/// files written. `hash` covers the deterministic outputs in order; reports
/// carrying wall-clock times are listed separately and not hashed.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub settings: Settings,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub params: Value,
    pub outputs: Vec<OutputFile>,
    pub reports: Vec<PathBuf>,
    pub hash: String,
}

pub struct ManifestBuilder {
    command: String,
    settings: Settings,
    params: Value,
    outputs: Vec<(PathBuf, Vec<u8>)>,
    reports: Vec<PathBuf>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ManifestBuilder {
    pub fn new(command: &str, settings: &Settings) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            settings: settings.clone(),
            params: Value::Null,
            outputs: Vec::new(),
            reports: Vec::new(),
        }
    }

    pub fn params(mut self, params: Value) -> Self {
        self.params = params;
        self
    }

    /// Registers a file already written to disk.
    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.outputs.push((path.to_path_buf(), bytes));
        Ok(())
    }

    pub fn report(&mut self, path: &Path) {
        self.reports.push(path.to_path_buf());
    }

    pub fn finish(self) -> Manifest {
        let mut all = Sha256::new();
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for (path, bytes) in &self.outputs {
            let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            all.update(name.as_bytes());
            all.update([0u8]);
            all.update(bytes);
            outputs.push(OutputFile {
                path: path.clone(),
                sha256: sha256_hex(bytes),
            });
        }
        Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.settings.seed(),
            settings: self.settings,
            params: self.params,
            outputs,
            reports: self.reports,
            hash: hex::encode(all.finalize()),
        }
    }
}

impl Manifest {
    /// Writes `manifest.json` into `dir` and returns its text.
    pub fn write(&self, dir: &Path) -> CliResult<String> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        let path = dir.join("manifest.json");
        std::fs::write(&path, format!("{text}\n")).map_err(|e| CliError::io(&path, e))?;
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_depends_on_content_not_location() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut hashes = Vec::new();
        for dir in [a.path(), b.path()] {
            let p = dir.join("labels.txt");
            std::fs::write(&p, "0\n1\n").unwrap();
            let mut m = ManifestBuilder::new("gen", &Settings::default());
            m.output(&p).unwrap();
            hashes.push(m.finish().hash);
        }
        assert_eq!(hashes[0], hashes[1]);
    }
}
