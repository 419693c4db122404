//! Run directory bookkeeping: every data file goes through [`RunDir`] so
//! that it is listed in the manifest with its checksum.

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use coulomb_core::polyspace::SpaceSummary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: u64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub seed_offset: u64,
    pub threads: usize,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<Artifact>,
    #[serde(default)]
    pub spaces: Vec<SpaceSummary>,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub timing: Timing,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
    }
}

pub struct RunDir {
    pub root: PathBuf,
    pub manifest: RunManifest,
    clock: Instant,
}

impl RunDir {
    /// Creates the directory and writes an incomplete manifest right away.
    pub fn create(root: PathBuf, config: &RunConfig, seed_offset: u64, threads: usize) -> Result<Self> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        let started = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: config.command.name().to_string(),
            config_hash: config.hash(),
            config: config.clone(),
            seed_offset,
            threads,
            complete: false,
            error: None,
            files: Vec::new(),
            spaces: Vec::new(),
            warnings: Vec::new(),
            timing: Timing {
                started_unix: started,
                elapsed_seconds: 0.0,
            },
        };
        let dir = RunDir {
            root,
            manifest,
            clock: Instant::now(),
        };
        dir.flush()?;
        Ok(dir)
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.files.retain(|a| a.path != rel);
        self.manifest.files.push(Artifact {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    pub fn write_csv<S: Serialize>(&mut self, rel: &str, rows: &[S]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)
                .map_err(|e| CliError::Validation(format!("{rel}: {e}")))?;
        }
        let bytes = w.into_inner().expect("in-memory writer");
        self.write(rel, &bytes)
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.manifest.warnings.push(msg);
    }

    fn flush(&self) -> Result<()> {
        let path = self.root.join(MANIFEST);
        let mut s = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        s.push('\n');
        std::fs::write(&path, s).map_err(|e| CliError::io(&path, e))
    }

    pub fn finish(mut self, outcome: &Result<()>) -> Result<()> {
        self.manifest.timing.elapsed_seconds = self.clock.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => self.manifest.complete = true,
            Err(e) => self.manifest.error = Some(e.to_string()),
        }
        self.manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.flush()
    }
}
