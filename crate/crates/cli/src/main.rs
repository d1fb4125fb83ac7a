//! `latcap`: capacity computations, extraction, walk simulations and the
//! small-instance oracle from the command line.
//!
//! Exit status: 0 on success, 1 on invalid input or violated preconditions,
//! 2 on internal failures (including oracle FAILs and skipped corpus entries).

mod commands;
mod config;
mod record;
mod svg;

use clap::{Parser, Subcommand, ValueEnum};
use config::ExperimentConfig;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Environment variable naming the default Green-table cache directory.
pub const CACHE_ENV: &str = "LATCAP_CACHE_DIR";

#[derive(Parser, Debug)]
#[command(name = "latcap", version, about = "Discrete capacity of finite subsets of Z^d")]
pub struct Cli {
    /// Base RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory for records, CSV and SVG files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Green table cache file.
    #[arg(long, global = true)]
    pub green_cache: Option<PathBuf>,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Lattice dimension.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Radius of the certified Green table.
    #[arg(long, global = true)]
    pub exact_radius: Option<u32>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Exact,
    Variational,
    MonteCarlo,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Capacity of a set by direct solve, conditional gradient or Monte Carlo.
    Capacity {
        #[arg(value_enum)]
        method: MethodArg,
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        walkers: Option<u64>,
        #[arg(long)]
        escape_radius: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, value_enum, default_value = "f64")]
        precision: Precision,
    },
    /// Randomized subset extraction.
    Extract {
        #[arg(long)]
        centers: PathBuf,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        retries: Option<usize>,
        #[arg(long)]
        escape_radius: Option<f64>,
        /// Apply the greedy 4r-separation first.
        #[arg(long)]
        separate: bool,
        /// Use the general rule even when r = 1.
        #[arg(long)]
        general: bool,
    },
    /// Extraction ratios over a corpus directory.
    CalibrateAlpha {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Monte Carlo covering probability against the product bound.
    CoverMc {
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        thresholds: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        escape_radius: Option<f64>,
    },
    /// Folding sets and shape statistics of simulated walks.
    FoldSim {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        r: Option<u32>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Level-set sizes of simulated walks.
    LevelSets {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        rho: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Excursion localization scenario.
    Scenario {
        #[arg(long)]
        l: Option<u32>,
        #[arg(long)]
        r: Option<u32>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Treat violated preconditions as errors.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        c1: Option<f64>,
        #[arg(long)]
        c2: Option<f64>,
        #[arg(long)]
        c_time: Option<f64>,
    },
    /// Exact covering probabilities and the covering theorem's bounds.
    Oracle {
        #[command(subcommand)]
        action: OracleAction,
    },
    /// Capacity-bound ratios and shape statistics over a corpus directory.
    BoundsReport {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Re-renders a scatter plot from a CSV file.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Column whose values split the points into series.
        #[arg(long)]
        group: Option<String>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value = "")]
        title: String,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleAction {
    /// One instance with `--set` and `--thresholds`, otherwise the exhaustive
    /// sweep over subsets of {0, e1, e2, e1+e2}.
    Verify {
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long)]
        thresholds: Option<PathBuf>,
        /// Build the return chain on the box [-R, R]^d instead of from the Green table.
        #[arg(long = "box")]
        box_radius: Option<u32>,
        #[arg(long)]
        max_total: Option<u32>,
        #[arg(long)]
        cap: Option<u32>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Capacity { .. } => "capacity",
            Command::Extract { .. } => "extract",
            Command::CalibrateAlpha { .. } => "calibrate-alpha",
            Command::CoverMc { .. } => "cover-mc",
            Command::FoldSim { .. } => "fold-sim",
            Command::LevelSets { .. } => "level-sets",
            Command::Scenario { .. } => "scenario",
            Command::Oracle { .. } => "oracle",
            Command::BoundsReport { .. } => "bounds-report",
            Command::Plot { .. } => "plot",
        }
    }
}

/// Invalid command-line input.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(e: &anyhow::Error) -> u8 {
    use latcap::Error as E;
    for cause in e.chain() {
        if let Some(le) = cause.downcast_ref::<E>() {
            return match le {
                E::DimensionMismatch { .. }
                | E::UnsupportedDimension(_)
                | E::InvalidArgument(_)
                | E::Precondition(_)
                | E::EmptySet
                | E::Parse { .. }
                | E::Io(_)
                | E::NotSeparated { .. }
                | E::ThresholdCap { .. } => 1,
                _ => 2,
            };
        }
        if cause.is::<UsageError>() || cause.is::<std::io::Error>() || cause.is::<toml::de::Error>() {
            return 1;
        }
    }
    2
}

fn resolve_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::read(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.threads {
        cfg.threads = v;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &cli.green_cache {
        cfg.green.cache = Some(v.clone());
    }
    if let Some(v) = cli.dim {
        cfg.dim = v;
    }
    if let Some(v) = cli.exact_radius {
        cfg.green.exact_radius = v;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let cfg = resolve_config(&cli)?;
    if cfg.threads > 0 {
        // a second initialisation only happens in tests; keep the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    let started = Instant::now();
    let hash = record::config_hash(&(&cfg, &cli.command));
    let out = commands::dispatch(&cli.command, &cfg)?;
    if !out.stdout.is_empty() {
        println!("{}", out.stdout);
    }
    std::fs::create_dir_all(&cfg.out)?;
    let cfg_path = cfg.out.join(format!("{}.config.toml", cli.command.name()));
    std::fs::write(&cfg_path, cfg.to_toml())?;
    let mut outputs = out.outputs;
    outputs.push(cfg_path);
    let rec = record::RunRecord {
        command: cli.command.name().to_string(),
        config_hash: hash,
        build: record::build_id(),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        outputs,
        summary: out.summary,
    };
    rec.write(&cfg.out)?;
    Ok(out.status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
