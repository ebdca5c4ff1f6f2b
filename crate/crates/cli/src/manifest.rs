//! Run directories: every output file is hashed as it is written and listed,
//! with the inputs and the effective config, in `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Context};
use crate::Command;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
    /// Absolute input paths.
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the run directory, in write order.
    pub outputs: Vec<FileRecord>,
    pub timings: Timings,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&fs::read(path).context(path.display())?))
}

pub struct RunDir {
    root: PathBuf,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    started: SystemTime,
    clock: Instant,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).context(format!("cannot create output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
        })
    }

    /// Reads an input file and records its hash.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = fs::read(path).context(format!("cannot read {}", path.display()))?;
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, bytes).context(format!("cannot write {}", path.display()))?;
        self.outputs.push(FileRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).expect("report serializes");
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Writes the manifest through a temporary file and a rename.
    pub fn finish(self, command: &Command, config: &RunConfig) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.clone(),
            config: config.clone(),
            inputs: self.inputs,
            outputs: self.outputs,
            timings: Timings {
                started_unix_ms: self.started.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
                elapsed_ms: self.clock.elapsed().as_millis(),
            },
        };
        let tmp = self.root.join(format!("{MANIFEST_FILE}.tmp"));
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&tmp, text).context(format!("cannot write {}", tmp.display()))?;
        fs::rename(&tmp, self.root.join(MANIFEST_FILE)).context("cannot finalize manifest")?;
        Ok(manifest)
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(path).context(format!("cannot read manifest {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("manifest {}: {e}", path.display())))
}
