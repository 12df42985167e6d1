use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArtifactRecord {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Record of one invocation. Everything except `timings_seconds` is a
/// function of the configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub artifacts: Vec<ArtifactRecord>,
    pub notes: BTreeMap<String, String>,
    pub timings_seconds: BTreeMap<String, f64>,
}

/// Output directory bookkeeping for a single command.
pub struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
    notes: BTreeMap<String, String>,
    timings: BTreeMap<String, f64>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            notes: BTreeMap::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn track(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(&format!("creating {}", parent.display()), e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
        self.track(name);
        Ok(())
    }

    /// Render into a buffer with a core writer, then store it.
    pub fn write_with(
        &mut self,
        name: &str,
        render: impl FnOnce(&mut Vec<u8>) -> rfbsde_core::Result<()>,
    ) -> CliResult<()> {
        let mut buf = Vec::new();
        render(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::config(format!("serialising {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Append one CSV row, writing `header` first if the file is new.
    pub fn append_row(&mut self, name: &str, header: &str, row: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        let fresh = !path.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::io(&format!("opening {}", path.display()), e))?;
        let mut text = String::new();
        if fresh {
            text.push_str(header);
            text.push('\n');
        }
        text.push_str(row);
        text.push('\n');
        f.write_all(text.as_bytes())
            .map_err(|e| CliError::io(&format!("appending to {}", path.display()), e))?;
        self.track(name);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.insert(key.to_string(), value.into());
    }

    pub fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        out
    }

    /// Hash the artifacts and write `manifest.json`.
    pub fn finish(self, command: &str, cfg: &RunConfig) -> CliResult<RunManifest> {
        let config = serde_json::to_value(cfg).map_err(|e| CliError::config(format!("serialising config: {e}")))?;
        let canonical = serde_json::to_string(&config).expect("json value serialises");
        let mut artifacts = Vec::new();
        for name in &self.files {
            let path = self.dir.join(name);
            let bytes = fs::read(&path).map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
            artifacts.push(ArtifactRecord {
                file: name.clone(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(canonical.as_bytes()),
            config,
            artifacts,
            notes: self.notes,
            timings_seconds: self.timings,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::io(&format!("writing {}", path.display()), e))?;
        Ok(manifest)
    }
}
