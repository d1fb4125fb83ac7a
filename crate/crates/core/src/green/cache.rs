//! JSON dump of a [`GreenTable`], validated on load by recomputing entries.

use super::{GreenConfig, GreenTable, Key, BUILDER_VERSION};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::lattice::MAX_DIM;
use crate::rng::StepRng;
use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    dim: usize,
    exact_radius: u32,
    tol: f64,
    horizon: f64,
    entries: Vec<CacheEntry>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: Vec<u32>,
    lo: f64,
    hi: f64,
}

const CHECKED_ENTRIES: usize = 3;

impl GreenTable {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CacheFile {
            version: BUILDER_VERSION,
            dim: self.dim,
            exact_radius: self.exact_radius,
            tol: self.tol,
            horizon: self.horizon,
            entries: self
                .entries()
                .into_iter()
                .map(|(k, v)| CacheEntry {
                    key: k[..self.dim].to_vec(),
                    lo: v.lo,
                    hi: v.hi,
                })
                .collect(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::Cache(e.to_string()))?;
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Loads a cached table built for `config`, recomputing a few entries to
    /// make sure the file is sound.
    pub fn load(path: &Path, config: &GreenConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CacheFile = serde_json::from_str(&text).map_err(|e| Error::Cache(e.to_string()))?;
        if file.version != BUILDER_VERSION {
            return Err(Error::Cache(format!(
                "builder version {} does not match {}",
                file.version, BUILDER_VERSION
            )));
        }
        if file.dim != config.dim || file.exact_radius != config.exact_radius || file.tol != config.tol {
            return Err(Error::Cache(format!(
                "cache holds (d={}, R={}, tol={:e}), wanted (d={}, R={}, tol={:e})",
                file.dim, file.exact_radius, file.tol, config.dim, config.exact_radius, config.tol
            )));
        }
        let mut values = FxHashMap::default();
        for e in &file.entries {
            if e.key.len() != file.dim || !(e.lo <= e.hi) {
                return Err(Error::Cache(format!("malformed entry {:?}", e.key)));
            }
            let mut k = [0u32; MAX_DIM];
            k[..file.dim].copy_from_slice(&e.key);
            values.insert(k, Interval::new(e.lo, e.hi));
        }
        let expected = super::canonical_keys(file.dim, file.exact_radius);
        if expected.len() != values.len() || expected.iter().any(|k| !values.contains_key(k)) {
            return Err(Error::Cache("entry set does not match the exact radius".into()));
        }
        let table = GreenTable::assemble(file.dim, file.exact_radius, file.tol, file.horizon, values);

        let mut rng = StepRng::new(text.len() as u64, 0x6772_6565_6e);
        let mut picks: Vec<Key> = vec![[0; MAX_DIM]];
        while picks.len() < CHECKED_ENTRIES.min(expected.len()) {
            let k = expected[rng.random_range(0..expected.len())];
            if !picks.contains(&k) {
                picks.push(k);
            }
        }
        let fresh = table.recompute(&picks);
        for (k, f) in picks.iter().zip(fresh) {
            let stored = table.raw_values()[k];
            if !stored.intersects(&f) || stored.width() > file.tol {
                return Err(Error::Cache(format!(
                    "entry {:?} failed validation: stored {stored:?}, recomputed {f:?}",
                    &k[..file.dim]
                )));
            }
        }
        Ok(table)
    }

    /// Uses the cache at `path` when it is valid, otherwise builds the table
    /// and writes it there.
    pub fn load_or_build(path: &Path, config: &GreenConfig) -> Result<Self> {
        if path.exists() {
            match Self::load(path, config) {
                Ok(t) => return Ok(t),
                Err(e) => log::warn!("ignoring Green cache {}: {e}", path.display()),
            }
        }
        let t = Self::build(config)?;
        t.save(path)?;
        Ok(t)
    }
}
