//! Output directories: root resolution, the single-writer lock and the run
//! manifest.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use reposer_harness::report::write_json;
use reposer_harness::EngineConfig;
use serde::{Deserialize, Serialize};

pub const OUTPUT_ROOT_ENV: &str = "REPOSER_OUTPUT_ROOT";
pub const LOCK_FILE: &str = ".reposer.lock";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Resolve a configured output directory against `$REPOSER_OUTPUT_ROOT`.
pub fn resolve_output(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

/// Exclusive ownership of an output directory for the lifetime of the value.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id()).with_context(|| format!("writing {}", path.display()))?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                let owner = fs::read_to_string(&path).unwrap_or_default();
                bail!(
                    "{} is in use by another reposer process (pid {}); remove {} if that process is gone",
                    dir.display(),
                    owner.trim(),
                    path.display()
                )
            }
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config: EngineConfig,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub started: String,
    pub finished: String,
    pub env_steps_per_sec: Option<f64>,
    pub final_metrics: serde_json::Value,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &EngineConfig, seeds: Vec<u64>, started: String) -> Self {
        Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            config_hash: config.hash(),
            seeds,
            started,
            finished: String::new(),
            env_steps_per_sec: None,
            final_metrics: serde_json::Value::Null,
            artifacts: Vec::new(),
        }
    }

    /// Stamp the end time and write `manifest.json` atomically.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished = now();
        self.artifacts.sort();
        write_json(&dir.join(MANIFEST_FILE), &self)?;
        Ok(())
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
