use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::config::RunConfig;

/// Fixed nine-significant-digit rendering used by every CSV writer, so
/// reruns produce byte-identical files.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.8e}")
}

/// Record of one harness invocation, written next to its tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub git_describe: String,
    pub config_sha256: String,
    pub master_seed: u64,
    /// How per-trial streams derive from the master seed.
    pub seed_scheme: String,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub failed_trials: usize,
    pub config: RunConfig,
}

pub const SEED_SCHEME: &str = "ChaCha8 seeded with the master seed; each work unit uses the stream \
     selected by a splitmix hash of (tag, indices...): scenario draws (1, centre, trial), \
     sensing noise (2, architecture, centre, trial), rate user (3, snr, trial), \
     rate selection (4, architecture, elements, snr, trial)";

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, threads: usize) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            git_describe: git_describe(),
            config_sha256: cfg.hash(),
            master_seed: cfg.seed,
            seed_scheme: SEED_SCHEME.into(),
            threads,
            outputs: Vec::new(),
            failed_trials: 0,
            config: cfg.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

/// `git describe --always --dirty` of the working directory, or `"unknown"`.
pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}
