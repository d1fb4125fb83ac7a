//! Experiment configuration, read from TOML. Command-line flags override it.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub out: PathBuf,
    pub green: GreenSection,
    pub capacity: CapacitySection,
    pub extract: ExtractSection,
    pub cover: CoverSection,
    pub fold: FoldSection,
    pub scenario: ScenarioSection,
    pub oracle: OracleSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            seed: 0,
            threads: 0,
            out: PathBuf::from("latcap-out"),
            green: GreenSection::default(),
            capacity: CapacitySection::default(),
            extract: ExtractSection::default(),
            cover: CoverSection::default(),
            fold: FoldSection::default(),
            scenario: ScenarioSection::default(),
            oracle: OracleSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenSection {
    pub exact_radius: u32,
    pub tol: f64,
    pub cache: Option<PathBuf>,
}

impl Default for GreenSection {
    fn default() -> Self {
        Self {
            exact_radius: 12,
            tol: 1e-6,
            cache: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacitySection {
    pub walkers_per_site: u64,
    /// Defaults to four times the diameter.
    pub escape_radius: Option<f64>,
    pub iterations: usize,
}

impl Default for CapacitySection {
    fn default() -> Self {
        Self {
            walkers_per_site: 100_000,
            escape_radius: None,
            iterations: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub retries: usize,
    pub pilot_walkers: u64,
    pub c_check: Option<f64>,
    pub escape_radius: Option<f64>,
    /// Extractions per corpus instance in `calibrate-alpha`.
    pub trials: usize,
}

impl Default for ExtractSection {
    fn default() -> Self {
        Self {
            retries: 64,
            pilot_walkers: 64,
            c_check: None,
            escape_radius: None,
            trials: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverSection {
    pub trials: u64,
    /// 0 means no horizon.
    pub horizon: u64,
    pub escape_radius: f64,
    pub threshold_cap: u32,
}

impl Default for CoverSection {
    fn default() -> Self {
        Self {
            trials: 100_000,
            horizon: 0,
            escape_radius: 40.0,
            threshold_cap: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldSection {
    pub n: usize,
    pub r: u32,
    pub rho: f64,
    pub trials: u64,
    /// Level-set thresholds for `level-sets`.
    pub levels: Vec<f64>,
}

impl Default for FoldSection {
    fn default() -> Self {
        Self {
            n: 4_000,
            r: 2,
            rho: 0.5,
            trials: 10,
            levels: vec![0.0, 1.0, 2.0, 4.0, 8.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub l: u32,
    pub r: u32,
    pub rho: f64,
    /// Walk length; `C ρ r^d L` when absent.
    pub n: Option<u64>,
    pub trials: u64,
    pub strict: bool,
    pub c1: f64,
    pub c2: f64,
    pub c_time: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let c = latcap::walks::ScenarioConstants::default();
        Self {
            l: 8,
            r: 4,
            rho: 0.1,
            n: None,
            trials: 10_000,
            strict: false,
            c1: c.c1,
            c2: c.c2,
            c_time: c.c_time,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub threshold_cap: u32,
    /// Largest threshold total in the exhaustive sweep.
    pub max_total: u32,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            threshold_cap: latcap::oracle::DEFAULT_THRESHOLD_CAP,
            max_total: 6,
        }
    }
}

impl ExperimentConfig {
    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(toml::from_str(&text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
