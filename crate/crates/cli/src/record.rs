//! Run records: what ran, under which configuration, and what it produced.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub build: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_clock_secs: f64,
    pub outputs: Vec<PathBuf>,
    /// Numeric results; identical across reruns with the same configuration.
    pub summary: serde_json::Value,
}

/// SHA-256 of the canonical JSON of the resolved configuration and arguments.
pub fn config_hash(value: &impl Serialize) -> String {
    let text = serde_json::to_string(value).expect("serializable");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn build_id() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("LATCAP_BUILD_ID"))
}

impl RunRecord {
    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.record.json", self.command.replace(' ', "-")));
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}
