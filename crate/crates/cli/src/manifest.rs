//! Run manifests, written with status `running` before any output and
//! finalized afterwards.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::validate_manifest;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(name: &str, data: &[u8]) -> Self {
        FileRecord {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(data)),
            bytes: data.len() as u64,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_final: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survivor_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sink_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub literal_box_closes: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit_violations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: String,
    pub exit_code: Option<i32>,
    pub error: Option<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub started: String,
    pub finished: Option<String>,
    pub config: Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub notes: Vec<String>,
    #[serde(default)]
    pub summary: Summary,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// A run directory with its manifest; outputs are recorded as they are written.
pub struct Run {
    dir: PathBuf,
    pub manifest: RunManifest,
}

impl Run {
    pub fn start(
        dir: &Path,
        command: &str,
        config: Value,
        seed: Option<u64>,
        inputs: Vec<FileRecord>,
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        let run = Run {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                tool: "emergence".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: command.into(),
                status: "running".into(),
                exit_code: None,
                error: None,
                seed,
                threads: rayon::current_num_threads(),
                started: now(),
                finished: None,
                config,
                inputs,
                outputs: Vec::new(),
                notes: Vec::new(),
                summary: Summary::default(),
            },
        };
        run.write_manifest()?;
        Ok(run)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.manifest.notes.push(s.into());
    }

    pub fn write(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, data).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        self.manifest.outputs.retain(|f| f.path != name);
        self.manifest.outputs.push(FileRecord::of(name, data));
        Ok(())
    }

    fn write_manifest(&self) -> Result<(), CliError> {
        let doc = serde_json::to_value(&self.manifest).expect("manifest serializes");
        validate_manifest(&doc)?;
        let text = serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n";
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
    }

    pub fn finish(mut self, result: &Result<i32, CliError>) -> Result<RunManifest, CliError> {
        self.manifest.finished = Some(now());
        match result {
            Ok(code) => {
                self.manifest.status = "ok".into();
                self.manifest.exit_code = Some(*code);
            }
            Err(e) => {
                self.manifest.status = "failed".into();
                self.manifest.exit_code = Some(e.code);
                self.manifest.error = Some(e.message.clone());
            }
        }
        self.write_manifest()?;
        Ok(self.manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let doc: Value = serde_json::from_slice(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    validate_manifest(&doc)?;
    serde_json::from_value(doc).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}
