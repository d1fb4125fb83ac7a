//! Subcommand handlers. Each returns the text for stdout, the files it wrote
//! and a JSON summary for the run record.

use crate::config::ExperimentConfig;
use crate::svg::{self, Series, PALETTE};
use crate::{Command, MethodArg, OracleAction, Precision, UsageError, CACHE_ENV};
use anyhow::{bail, Context};
use latcap::capacity::{self, CalibrationLedger, McConfig};
use latcap::extraction::{self, ExtractionConfig};
use latcap::oracle::{self, ReturnChain};
use latcap::walks::{self, ExcursionScenario, ScenarioConstants};
use latcap::{lattice, GreenConfig, GreenTable, Point, SiteSet, StepRng};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct Output {
    pub stdout: String,
    pub outputs: Vec<PathBuf>,
    pub summary: Value,
    pub status: u8,
}

impl Output {
    fn json(summary: Value, outputs: Vec<PathBuf>) -> Self {
        Self {
            stdout: serde_json::to_string_pretty(&summary).expect("json"),
            outputs,
            summary,
            status: 0,
        }
    }
}

/// Stream ids, one per command, so commands never share random numbers.
mod stream {
    pub const CAPACITY: u64 = 1;
    pub const EXTRACT: u64 = 2;
    pub const ALPHA: u64 = 3;
    pub const COVER: u64 = 4;
    pub const FOLD: u64 = 5;
    pub const LEVELS: u64 = 6;
    pub const SCENARIO: u64 = 7;
}

pub fn dispatch(cmd: &Command, cfg: &ExperimentConfig) -> anyhow::Result<Output> {
    match cmd {
        Command::Capacity {
            method,
            set,
            walkers,
            escape_radius,
            iterations,
            precision,
        } => capacity_cmd(cfg, *method, set, *walkers, *escape_radius, *iterations, *precision),
        Command::Extract {
            centers,
            r,
            retries,
            escape_radius,
            separate,
            general,
        } => extract_cmd(cfg, centers, *r, *retries, *escape_radius, *separate, *general),
        Command::CalibrateAlpha { corpus, trials } => calibrate_alpha(cfg, corpus, *trials),
        Command::CoverMc {
            set,
            thresholds,
            trials,
            horizon,
            escape_radius,
        } => cover_mc(cfg, set, thresholds, *trials, *horizon, *escape_radius),
        Command::FoldSim { n, r, rho, trials } => fold_sim(cfg, *n, *r, *rho, *trials),
        Command::LevelSets { n, rho, trials } => level_sets(cfg, *n, rho.as_deref(), *trials),
        Command::Scenario {
            l,
            r,
            rho,
            n,
            trials,
            strict,
            c1,
            c2,
            c_time,
        } => {
            let mut s = cfg.scenario.clone();
            s.l = l.unwrap_or(s.l);
            s.r = r.unwrap_or(s.r);
            s.rho = rho.unwrap_or(s.rho);
            s.n = n.or(s.n);
            s.trials = trials.unwrap_or(s.trials);
            s.strict |= *strict;
            s.c1 = c1.unwrap_or(s.c1);
            s.c2 = c2.unwrap_or(s.c2);
            s.c_time = c_time.unwrap_or(s.c_time);
            scenario_cmd(cfg, &s)
        }
        Command::Oracle {
            action:
                OracleAction::Verify {
                    set,
                    thresholds,
                    box_radius,
                    max_total,
                    cap,
                },
        } => oracle_verify(cfg, set.as_deref(), thresholds.as_deref(), *box_radius, *max_total, *cap),
        Command::BoundsReport { corpus } => bounds_report(cfg, corpus),
        Command::Plot {
            csv,
            x,
            y,
            group,
            output,
            title,
        } => plot(csv, x, y, group.as_deref(), output, title),
    }
}

fn green(cfg: &ExperimentConfig, dim: usize) -> anyhow::Result<GreenTable> {
    let gc = GreenConfig {
        dim,
        exact_radius: cfg.green.exact_radius,
        tol: cfg.green.tol,
    };
    let cache = cfg.green.cache.clone().or_else(|| {
        std::env::var_os(CACHE_ENV).map(|d| {
            PathBuf::from(d).join(format!("green-d{}-r{}-tol{:e}.json", dim, gc.exact_radius, gc.tol))
        })
    });
    let table = match cache {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            GreenTable::load_or_build(&p, &gc)?
        }
        None => GreenTable::build(&gc)?,
    };
    Ok(table)
}

fn read_set(path: &Path) -> anyhow::Result<SiteSet> {
    let s = SiteSet::read_file(path).with_context(|| format!("reading {}", path.display()))?;
    if s.is_empty() {
        return Err(latcap::Error::EmptySet).with_context(|| format!("{} has no sites", path.display()));
    }
    Ok(s)
}

/// Lines `x_1 … x_d n`; blank lines, `#` comments and a `d=` header are skipped.
fn read_thresholds(path: &Path, sites: &SiteSet) -> anyhow::Result<Vec<u32>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let d = sites.dim();
    let mut out: Vec<Option<u32>> = vec![None; sites.len()];
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') || l.starts_with("d=") {
            continue;
        }
        let parse_err = |msg: String| latcap::Error::Parse { line: i + 1, msg };
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != d + 1 {
            return Err(parse_err(format!("expected {d} coordinates and a threshold")).into());
        }
        let coords: Vec<i32> = toks[..d]
            .iter()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
        let n: u32 = toks[d].parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
        let p = Point::new(&coords)?;
        let idx = sites
            .index_of(&p)
            .ok_or_else(|| parse_err(format!("{:?} is not in the set", p.coords())))?;
        out[idx] = Some(n);
    }
    out.iter()
        .zip(sites.iter())
        .map(|(n, p)| n.ok_or_else(|| UsageError(format!("no threshold for site {:?}", p.coords())).into()))
        .collect()
}

fn write_file(cfg: &ExperimentConfig, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    let p = cfg.out.join(name);
    std::fs::write(&p, contents)?;
    Ok(p)
}

fn write_csv<R: serde::Serialize>(cfg: &ExperimentConfig, name: &str, header: &[&str], rows: &[R]) -> anyhow::Result<PathBuf> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    write_file(cfg, name, &String::from_utf8(bytes)?)
}

fn capacity_cmd(
    cfg: &ExperimentConfig,
    method: MethodArg,
    set: &Path,
    walkers: Option<u64>,
    escape_radius: Option<f64>,
    iterations: Option<usize>,
    precision: Precision,
) -> anyhow::Result<Output> {
    let sites = read_set(set)?;
    let g = green(cfg, sites.dim())?;
    let iters = iterations.unwrap_or(cfg.capacity.iterations);
    let res = match (method, precision) {
        (MethodArg::Exact, Precision::F64) => capacity::cap_exact::<f64>(&sites, &g)?,
        (MethodArg::Variational, Precision::F64) => capacity::cap_variational::<f64>(&sites, &g, iters)?,
        (MethodArg::Exact, Precision::F32) => widen(capacity::cap_exact::<f32>(&sites, &g)?),
        (MethodArg::Variational, Precision::F32) => widen(capacity::cap_variational::<f32>(&sites, &g, iters)?),
        (MethodArg::MonteCarlo, _) => {
            let mc = McConfig {
                walkers_per_site: walkers.unwrap_or(cfg.capacity.walkers_per_site),
                escape_radius: escape_radius
                    .or(cfg.capacity.escape_radius)
                    .unwrap_or_else(|| (4.0 * sites.diameter()).max(1.0)),
                cap_upper: None,
            };
            capacity::cap_monte_carlo(&sites, &mc, &g, &StepRng::new(cfg.seed, stream::CAPACITY))?
        }
    };
    let full = write_file(cfg, "capacity.json", &(serde_json::to_string_pretty(&res)? + "\n"))?;
    let summary = json!({
        "method": res.method,
        "precision": precision,
        "size": res.sites.len(),
        "value": res.value,
        "interval": [res.interval.lo, res.interval.hi],
        "std_error": res.std_error,
        "meta": res.meta,
    });
    Ok(Output::json(summary, vec![full]))
}

fn widen(r: capacity::CapacityResult<f32>) -> capacity::CapacityResult<f64> {
    capacity::CapacityResult {
        value: r.value as f64,
        sites: r.sites,
        equilibrium: r.equilibrium.iter().map(|&v| v as f64).collect(),
        method: r.method,
        interval: r.interval.cast(),
        std_error: r.std_error,
        meta: r.meta,
    }
}

fn extraction_config(cfg: &ExperimentConfig, diam: f64, r: f64, retries: Option<usize>, er: Option<f64>) -> ExtractionConfig {
    let radius = er
        .or(cfg.extract.escape_radius)
        .unwrap_or_else(|| (4.0 * (diam + 2.0 * r)).max(8.0));
    let mut e = ExtractionConfig::new(radius);
    e.retries = retries.unwrap_or(cfg.extract.retries);
    e.pilot_walkers = cfg.extract.pilot_walkers;
    e.c_check = cfg.extract.c_check;
    e
}

fn extract_cmd(
    cfg: &ExperimentConfig,
    centers: &Path,
    r: f64,
    retries: Option<usize>,
    escape_radius: Option<f64>,
    separate: bool,
    general: bool,
) -> anyhow::Result<Output> {
    let mut c = read_set(centers)?;
    let input = c.len();
    if separate {
        c = extraction::greedy_separate(&c, r)?;
    }
    let g = green(cfg, c.dim())?;
    let ecfg = extraction_config(cfg, c.diameter(), r, retries, escape_radius);
    let rng = StepRng::new(cfg.seed, stream::EXTRACT);
    let outcome = if r == 1.0 && !general {
        extraction::extract_r1(&c, &g, &ecfg, &rng)?
    } else {
        extraction::extract_general(&c, r, &g, &ecfg, &rng)?
    };
    let path = write_file(cfg, "extract.txt", &outcome.subset.to_text())?;
    let summary = json!({
        "input_centers": input,
        "centers": c.len(),
        "rule": if r == 1.0 && !general { "r1" } else { "general" },
        "escape_radius": ecfg.escape_radius,
        "outcome": outcome,
    });
    let mut out = Output::json(summary, vec![path]);
    if !(outcome.volume_ok && outcome.gram_ok) {
        out.status = 2;
    }
    Ok(out)
}

struct CorpusEntry {
    name: String,
    sites: SiteSet,
    meta: BTreeMap<String, String>,
}

/// Reads every `*.txt` file of `dir` in name order. Files that do not parse
/// are returned separately with their error.
/// File name and reason, for corpus entries that were skipped.
type Skipped = Vec<(String, String)>;

fn read_corpus(dir: &Path) -> anyhow::Result<(Vec<CorpusEntry>, Skipped)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading corpus {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let (mut good, mut bad) = (Vec::new(), Vec::new());
    for f in files {
        let name = f.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let parsed = std::fs::read_to_string(&f)
            .map_err(latcap::Error::from)
            .and_then(|text| SiteSet::from_text(&text).map(|s| (s, parse_meta(&text))));
        match parsed {
            Ok((sites, _)) if sites.is_empty() => bad.push((name, "empty set".to_string())),
            Ok((sites, meta)) => good.push(CorpusEntry { name, sites, meta }),
            Err(e) => bad.push((name, e.to_string())),
        }
    }
    Ok((good, bad))
}

/// `key=value` pairs from `#` comment lines.
fn parse_meta(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .flat_map(|l| l.split_whitespace())
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn meta_radius(e: &CorpusEntry) -> anyhow::Result<Option<f64>> {
    e.meta
        .get("r")
        .map(|v| v.parse::<f64>().map_err(|_| UsageError(format!("{}: bad radius {v:?}", e.name)).into()))
        .transpose()
}

fn calibrate_alpha(cfg: &ExperimentConfig, corpus: &Path, trials: Option<usize>) -> anyhow::Result<Output> {
    let (entries, mut skipped) = read_corpus(corpus)?;
    let mut inst = Vec::new();
    let mut names = Vec::new();
    for e in &entries {
        match meta_radius(e) {
            Ok(r) => {
                inst.push((e.sites.clone(), r.unwrap_or(1.0)));
                names.push(e.name.clone());
            }
            Err(err) => skipped.push((e.name.clone(), err.to_string())),
        }
    }
    for (n, why) in &skipped {
        log::warn!("skipping {n}: {why}");
    }
    let header = [
        "file", "r", "centers", "separated", "greedy_ratio", "successes", "failures",
        "first_draw_successes", "min_ratio_i", "min_ratio_ii", "error",
    ];
    if inst.is_empty() {
        let p = write_csv::<()>(cfg, "alpha.csv", &header, &[])?;
        let mut out = Output::json(json!({"instances": 0, "skipped": skipped}), vec![p]);
        out.status = if skipped.is_empty() { 0 } else { 2 };
        return Ok(out);
    }
    let dim = inst[0].0.dim();
    let g = green(cfg, dim)?;
    let diam = inst.iter().map(|(s, r)| s.diameter() + 2.0 * r).fold(0.0, f64::max);
    let ecfg = extraction_config(cfg, diam, 0.0, None, None);
    let rep = extraction::alpha_calibration(
        &inst,
        trials.unwrap_or(cfg.extract.trials),
        &g,
        &ecfg,
        &StepRng::new(cfg.seed, stream::ALPHA),
    )?;
    type Row<'a> = (&'a str, f64, usize, usize, f64, usize, usize, usize, Option<f64>, Option<f64>, Option<&'a str>);
    let rows: Vec<Row> = rep
        .rows
        .iter()
        .map(|r| {
            (
                names[r.index].as_str(), r.r, r.centers, r.separated, r.greedy_ratio, r.successes, r.failures,
                r.first_draw_successes, r.min_ratio_i, r.min_ratio_ii, r.error.as_deref(),
            )
        })
        .collect();
    let p = write_csv(cfg, "alpha.csv", &header, &rows)?;
    let mut out = Output::json(
        json!({
            "instances": rep.rows.len(),
            "inf_ratio_i": rep.inf_ratio_i,
            "inf_ratio_ii": rep.inf_ratio_ii,
            "min_greedy_ratio": rep.min_greedy_ratio,
            "skipped": skipped,
        }),
        vec![p],
    );
    if !skipped.is_empty() {
        out.status = 2;
    }
    Ok(out)
}

fn cover_mc(
    cfg: &ExperimentConfig,
    set: &Path,
    thresholds: &Path,
    trials: Option<u64>,
    horizon: Option<u64>,
    escape_radius: Option<f64>,
) -> anyhow::Result<Output> {
    let sites = read_set(set)?;
    let th = read_thresholds(thresholds, &sites)?;
    let g = green(cfg, sites.dim())?;
    let est = walks::covering_probability_mc(
        &sites,
        &th,
        trials.unwrap_or(cfg.cover.trials),
        match horizon.unwrap_or(cfg.cover.horizon) {
            0 => u64::MAX,
            h => h,
        },
        escape_radius.unwrap_or(cfg.cover.escape_radius),
        &g,
        &StepRng::new(cfg.seed, stream::COVER),
    )?;
    // exact value and product bound when the instance is small enough
    let total: u32 = th.iter().sum();
    let reference = if total <= cfg.cover.threshold_cap {
        match ReturnChain::from_green(&sites, &g) {
            Ok(chain) => Some(oracle::verify_covering_bounds(&chain, &th, &g, cfg.cover.threshold_cap)?),
            Err(latcap::Error::Precondition(why)) => {
                log::info!("no exact reference: {why}");
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let p = &est.proportion;
    let row = (
        p.trials,
        p.successes,
        p.estimate,
        p.std_error,
        p.ci.0,
        p.ci.1,
        est.bracket.0,
        est.bracket.1,
        est.escaped,
        est.timed_out,
        reference.as_ref().map(|r| r.exact.lo),
        reference.as_ref().map(|r| r.exact.hi),
        reference.as_ref().map(|r| r.product_bound.hi),
    );
    let header = [
        "trials", "successes", "estimate", "std_error", "ci_lo", "ci_hi", "bracket_lo", "bracket_hi",
        "escaped", "timed_out", "exact_lo", "exact_hi", "product_bound",
    ];
    let path = write_csv(cfg, "cover.csv", &header, &[row])?;
    Ok(Output::json(
        json!({
            "size": sites.len(),
            "thresholds": th,
            "estimate": est,
            "reference": reference,
        }),
        vec![path],
    ))
}

fn fold_sim(cfg: &ExperimentConfig, n: Option<usize>, r: Option<u32>, rho: Option<f64>, trials: Option<u64>) -> anyhow::Result<Output> {
    let n = n.unwrap_or(cfg.fold.n);
    let r = r.unwrap_or(cfg.fold.r);
    let rho = rho.unwrap_or(cfg.fold.rho);
    let trials = trials.unwrap_or(cfg.fold.trials);
    let g = green(cfg, cfg.dim)?;
    let base = StepRng::new(cfg.seed, stream::FOLD);
    let mut rows = Vec::new();
    for t in 0..trials {
        let trace = walks::simulate(n, Point::origin(cfg.dim), &mut base.substream(t));
        let f = walks::folding_sets(&trace, r, rho)?;
        let shape = if f.occupied_region.is_empty() {
            None
        } else {
            Some(walks::shape_statistic(&f, &g)?)
        };
        rows.push((
            t,
            n,
            r,
            rho,
            trace.range().len(),
            f.occupied_centers.len(),
            f.covered_centers.len(),
            f.occupied_region.len(),
            f.level_set.as_ref().map(|s| s.len()),
            shape,
        ));
    }
    let header = [
        "trial", "n", "r", "rho", "range", "occupied_centers", "covered_centers", "region", "level_set", "shape",
    ];
    let csv_path = write_csv(cfg, "fold.csv", &header, &rows)?;
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.9.map(|s| (r.7 as f64, s))).collect();
    let plot = svg::scatter(
        &format!("folding sets, n = {n}, r = {r}, rho = {rho}"),
        "|V|",
        "cap(V)/|V|^(1-2/d)",
        &[Series {
            name: "trials",
            color: PALETTE[0],
            points: pts.clone(),
        }],
    );
    let svg_path = write_file(cfg, "fold.svg", &plot)?;
    let shapes: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let mean = |v: &[f64]| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
    Ok(Output::json(
        json!({
            "n": n, "r": r, "rho": rho, "trials": trials,
            "mean_region": mean(&rows.iter().map(|r| r.7 as f64).collect::<Vec<_>>()),
            "mean_shape": mean(&shapes),
            "min_shape": shapes.iter().copied().reduce(f64::min),
        }),
        vec![csv_path, svg_path],
    ))
}

fn level_sets(cfg: &ExperimentConfig, n: Option<usize>, rho: Option<&[f64]>, trials: Option<u64>) -> anyhow::Result<Output> {
    let n = n.unwrap_or(cfg.fold.n);
    let levels = rho.unwrap_or(&cfg.fold.levels).to_vec();
    if levels.is_empty() {
        bail!(UsageError("no level-set thresholds given".into()));
    }
    let trials = trials.unwrap_or(cfg.fold.trials);
    let base = StepRng::new(cfg.seed, stream::LEVELS);
    let mut rows = Vec::new();
    for t in 0..trials {
        let trace = walks::simulate(n, Point::origin(cfg.dim), &mut base.substream(t));
        let range = trace.range().len();
        for &rho in &levels {
            rows.push((t, n, rho, walks::level_set(&trace, rho).len(), range));
        }
    }
    let path = write_csv(cfg, "level-sets.csv", &["trial", "n", "rho", "level_set", "range"], &rows)?;
    let means: Vec<Value> = levels
        .iter()
        .map(|&rho| {
            let v: Vec<f64> = rows.iter().filter(|r| r.2 == rho).map(|r| r.3 as f64).collect();
            json!({"rho": rho, "mean_size": v.iter().sum::<f64>() / v.len().max(1) as f64})
        })
        .collect();
    Ok(Output::json(json!({"n": n, "trials": trials, "levels": means}), vec![path]))
}

fn scenario_cmd(cfg: &ExperimentConfig, s: &crate::config::ScenarioSection) -> anyhow::Result<Output> {
    let sc = ExcursionScenario {
        dim: cfg.dim,
        l: s.l,
        r: s.r,
        rho: s.rho,
        constants: ScenarioConstants {
            c1: s.c1,
            c2: s.c2,
            c_time: s.c_time,
        },
    };
    let n = s.n.unwrap_or_else(|| sc.min_steps().max(sc.big_t()));
    let rep = walks::localization_scenario(&sc, n, s.trials, s.strict, &StepRng::new(cfg.seed, stream::SCENARIO))?;
    let row = (
        sc.l, sc.r, sc.rho, n, rep.big_r, rep.big_t, rep.big_n, rep.boxes, rep.violations.len(),
        rep.event_a.estimate, rep.event_b_given_a.estimate, rep.event_c.estimate, rep.event_abc.estimate,
        rep.target.estimate, rep.scale, rep.exponent,
    );
    let header = [
        "l", "r", "rho", "n", "big_r", "big_t", "big_n", "boxes", "violations", "p_a", "p_b_given_a", "p_c",
        "p_abc", "p_target", "scale", "exponent",
    ];
    let path = write_csv(cfg, "scenario.csv", &header, &[row])?;
    Ok(Output::json(serde_json::to_value(&rep)?, vec![path]))
}

fn oracle_verify(
    cfg: &ExperimentConfig,
    set: Option<&Path>,
    thresholds: Option<&Path>,
    box_radius: Option<u32>,
    max_total: Option<u32>,
    cap: Option<u32>,
) -> anyhow::Result<Output> {
    let cap = cap.unwrap_or(cfg.oracle.threshold_cap);
    match (set, thresholds) {
        (Some(set), Some(th)) => {
            let sites = read_set(set)?;
            let th = read_thresholds(th, &sites)?;
            let g = green(cfg, sites.dim())?;
            let chain = match box_radius {
                Some(m) => ReturnChain::from_box(&sites, m)?,
                None => ReturnChain::from_green(&sites, &g)?,
            };
            let rep = oracle::verify_covering_bounds(&chain, &th, &g, cap)?;
            let verdict = if rep.pass { "PASS" } else { "FAIL" };
            let summary = json!({
                "verdict": verdict,
                "route": chain.route,
                "exact": [rep.exact.lo, rep.exact.hi],
                "product_bound": [rep.product_bound.lo, rep.product_bound.hi],
                "capacity_bound": rep.capacity_bound,
                "report": rep,
            });
            let mut out = Output::json(summary, Vec::new());
            if !rep.pass {
                out.status = 2;
            }
            Ok(out)
        }
        (None, None) => {
            if box_radius.is_some() {
                bail!(UsageError("--box needs --set and --thresholds".into()));
            }
            let d = cfg.dim;
            let e1 = Point::unit(d, 0);
            let e2 = Point::unit(d, 1);
            let both = Point::new(&e1.coords().iter().zip(e2.coords()).map(|(a, b)| a + b).collect::<Vec<_>>())?;
            let base = SiteSet::new(d, [Point::origin(d), e1, e2, both])?;
            let g = green(cfg, d)?;
            let reports = oracle::sweep(&base, max_total.unwrap_or(cfg.oracle.max_total), &g)?;
            let failed = reports.iter().filter(|r| !r.pass).count();
            let origin_only = SiteSet::singleton(Point::origin(d));
            let eq_gap = reports
                .iter()
                .filter(|r| r.sites == origin_only && r.thresholds[0] >= 1)
                .map(|r| (r.exact.mid() - r.product_bound.mid()).abs())
                .fold(0.0, f64::max);
            let rows: Vec<_> = reports
                .iter()
                .map(|r| {
                    let pts: Vec<String> = r
                        .sites
                        .iter()
                        .zip(&r.thresholds)
                        .map(|(p, n)| {
                            let c: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
                            format!("({}):{n}", c.join(","))
                        })
                        .collect();
                    (
                        pts.join(" "),
                        r.exact.lo,
                        r.exact.hi,
                        r.product_bound.lo,
                        r.product_bound.hi,
                        r.capacity_bound,
                        r.pass,
                    )
                })
                .collect();
            let header = ["instance", "exact_lo", "exact_hi", "bound_lo", "bound_hi", "capacity_bound", "pass"];
            let path = write_csv(cfg, "oracle-sweep.csv", &header, &rows)?;
            let mut text = String::new();
            let _ = write!(
                text,
                "{} {} instances, {} failed, single-site gap {:.3e}",
                if failed == 0 { "PASS" } else { "FAIL" },
                reports.len(),
                failed,
                eq_gap
            );
            let summary = json!({
                "instances": reports.len(),
                "failed": failed,
                "single_site_gap": eq_gap,
            });
            Ok(Output {
                stdout: text,
                outputs: vec![path],
                summary,
                status: if failed == 0 { 0 } else { 2 },
            })
        }
        _ => bail!(UsageError("--set and --thresholds go together".into())),
    }
}

fn bounds_report(cfg: &ExperimentConfig, corpus: &Path) -> anyhow::Result<Output> {
    let (entries, mut skipped) = read_corpus(corpus)?;
    let header = [
        "file", "kind", "size", "r", "region", "volume_ratio", "balls_lower_ratio", "balls_upper_ratio", "shape",
    ];
    type Row = (String, String, usize, Option<f64>, usize, f64, Option<f64>, Option<f64>, f64);
    let mut rows: Vec<Row> = Vec::new();
    let mut ledger = CalibrationLedger::default();
    let mut tables: BTreeMap<usize, GreenTable> = BTreeMap::new();
    for e in &entries {
        let res = (|| -> anyhow::Result<Row> {
            let r = meta_radius(e)?;
            let dim = e.sites.dim();
            if let std::collections::btree_map::Entry::Vacant(slot) = tables.entry(dim) {
                slot.insert(green(cfg, dim)?);
            }
            let g = &tables[&dim];
            let row = capacity::check_capacity_bounds(&e.name, &e.sites, r, g, &mut ledger)?;
            let region = match r {
                Some(r) => lattice::ball_union(&e.sites, r)?,
                None => e.sites.clone(),
            };
            let shape = walks::shape_statistic_of(&region, g)?;
            let kind = e.meta.get("kind").cloned().unwrap_or_else(|| "set".into());
            Ok((e.name.clone(), kind, row.size, r, region.len(), row.volume_ratio, row.balls_lower_ratio, row.balls_upper_ratio, shape))
        })();
        match res {
            Ok(row) => rows.push(row),
            Err(err) => skipped.push((e.name.clone(), format!("{err:#}"))),
        }
    }
    for (n, why) in &skipped {
        log::warn!("skipping {n}: {why}");
    }
    let csv_path = write_csv(cfg, "bounds.csv", &header, &rows)?;
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        groups.entry(r.1.as_str()).or_default().push((r.4 as f64, r.8));
    }
    let series: Vec<Series> = groups
        .into_iter()
        .enumerate()
        .map(|(i, (name, points))| Series {
            name,
            color: PALETTE[i % PALETTE.len()],
            points,
        })
        .collect();
    let svg_path = write_file(
        cfg,
        "bounds.svg",
        &svg::scatter("shape statistic", "|V|", "cap(V)/|V|^(1-2/d)", &series),
    )?;
    let mut out = Output::json(
        json!({
            "instances": rows.len(),
            "a_min": ledger.a_min,
            "a_balls_min": ledger.a_balls_min,
            "big_a_max": ledger.big_a_max,
            "min_shape": rows.iter().map(|r| r.8).reduce(f64::min),
            "skipped": skipped,
        }),
        vec![csv_path, svg_path],
    );
    if !skipped.is_empty() {
        out.status = 2;
    }
    Ok(out)
}

fn plot(csv_path: &Path, x: &str, y: &str, group: Option<&str>, output: &Path, title: &str) -> anyhow::Result<Output> {
    let mut rdr = csv::Reader::from_path(csv_path).with_context(|| format!("reading {}", csv_path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> anyhow::Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| UsageError(format!("no column {name:?} in {}", csv_path.display())).into())
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let gi = group.map(col).transpose()?;
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let (Ok(xv), Ok(yv)) = (rec[xi].parse::<f64>(), rec[yi].parse::<f64>()) else {
            continue;
        };
        let key = gi.map_or_else(|| y.to_string(), |g| rec[g].to_string());
        groups.entry(key).or_default().push((xv, yv));
    }
    let series: Vec<Series> = groups
        .iter()
        .enumerate()
        .map(|(i, (name, pts))| Series {
            name,
            color: PALETTE[i % PALETTE.len()],
            points: pts.clone(),
        })
        .collect();
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(output, svg::scatter(title, x, y, &series))?;
    let points: usize = groups.values().map(|v| v.len()).sum();
    Ok(Output {
        stdout: String::new(),
        outputs: vec![output.to_path_buf()],
        summary: json!({"series": groups.len(), "points": points}),
        status: 0,
    })
}
