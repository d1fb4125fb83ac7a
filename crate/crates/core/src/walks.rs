//! Finite-time walk simulation: local times, folding and covering sets,
//! covering probabilities and the excursion localization scenario.

use crate::capacity::cap_exact;
use crate::error::{Error, Result};
use crate::escape::{run_until_hit, Fate, HitSet};
use crate::green::GreenTable;
use crate::lattice::{ball_union, cube_center, cube_union, Point, SiteSet};
use crate::rng::{step, StepRng};
use crate::stats::Proportion;
use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

/// Trials per RNG substream; results do not depend on the thread count.
const BLOCK: u64 = 1024;

/// A path `S_0, …, S_n` with its local times (time 0 counted).
#[derive(Clone, Debug)]
pub struct WalkTrace {
    pub path: Vec<Point>,
    pub local_times: FxHashMap<Point, u32>,
}

impl WalkTrace {
    pub fn steps(&self) -> usize {
        self.path.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.path[0].dim()
    }

    pub fn local_time(&self, z: &Point) -> u32 {
        self.local_times.get(z).copied().unwrap_or(0)
    }

    /// `R_n`, the set of visited sites.
    pub fn range(&self) -> SiteSet {
        SiteSet::new(self.dim(), self.local_times.keys().copied()).expect("dimension checked")
    }

    /// The trace truncated after `m` steps.
    pub fn prefix(&self, m: usize) -> WalkTrace {
        let path = self.path[..=m.min(self.steps())].to_vec();
        let mut local_times = FxHashMap::default();
        for p in &path {
            *local_times.entry(*p).or_insert(0) += 1;
        }
        WalkTrace { path, local_times }
    }
}

pub fn simulate(n: usize, start: Point, rng: &mut StepRng) -> WalkTrace {
    let mut path = Vec::with_capacity(n + 1);
    let mut local_times = FxHashMap::default();
    let mut w = start;
    path.push(w);
    local_times.insert(w, 1);
    for _ in 0..n {
        w = step(&w, rng);
        path.push(w);
        *local_times.entry(w).or_insert(0) += 1;
    }
    WalkTrace { path, local_times }
}

/// `L_n(ρ) = {z : ℓ_n(z) > ρ}`.
pub fn level_set(trace: &WalkTrace, rho: f64) -> SiteSet {
    SiteSet::new(
        trace.dim(),
        trace.local_times.iter().filter(|(_, &l)| l as f64 > rho).map(|(p, _)| *p),
    )
    .expect("dimension checked")
}

#[derive(Clone, Debug, Serialize)]
pub struct FoldingSets {
    pub n: usize,
    pub r: u32,
    pub rho: f64,
    /// `C_n(r, ρ)`: centres with `ℓ_n(Q_r(x)) ≥ ρ r^d`.
    pub occupied_centers: SiteSet,
    /// `V_n(r, ρ)`, the union of the cubes of `C_n(r, ρ)`.
    pub occupied_region: SiteSet,
    /// `C̃_n(r, ρ)`: centres with `|R_n ∩ Q_r(x)| ≥ ρ |Q_r|`.
    pub covered_centers: SiteSet,
    /// `L_n(ρ)` with the strict threshold, only when `r = 1`.
    pub level_set: Option<SiteSet>,
}

/// Only cubes the walk touched are listed, so at `ρ = 0` both centre sets
/// are the touched cubes rather than all of `rZ^d`.
pub fn folding_sets(trace: &WalkTrace, r: u32, rho: f64) -> Result<FoldingSets> {
    if r < 1 {
        return Err(Error::InvalidArgument("r must be >= 1".into()));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be non-negative, got {rho}")));
    }
    let dim = trace.dim();
    let mut mass: FxHashMap<Point, u64> = FxHashMap::default();
    let mut sites: FxHashMap<Point, u64> = FxHashMap::default();
    for (p, &l) in &trace.local_times {
        let c = cube_center(p, r);
        *mass.entry(c).or_insert(0) += l as u64;
        *sites.entry(c).or_insert(0) += 1;
    }
    let thr = rho * (r as f64).powi(dim as i32);
    let occupied = SiteSet::new(dim, mass.iter().filter(|(_, &m)| m as f64 >= thr).map(|(c, _)| *c))?;
    let covered = SiteSet::new(dim, sites.iter().filter(|(_, &m)| m as f64 >= thr).map(|(c, _)| *c))?;
    let region = if occupied.is_empty() {
        SiteSet::empty(dim)
    } else {
        cube_union(&occupied, r)?
    };
    Ok(FoldingSets {
        n: trace.steps(),
        r,
        rho,
        occupied_centers: occupied,
        occupied_region: region,
        covered_centers: covered,
        level_set: (r == 1).then(|| level_set(trace, rho)),
    })
}

/// `cap(V)/|V|^{1−2/d}`.
pub fn shape_statistic_of(region: &SiteSet, g: &GreenTable) -> Result<f64> {
    if region.is_empty() {
        return Err(Error::EmptySet);
    }
    let d = region.dim() as f64;
    let cap = cap_exact::<f64>(region, g)?.value;
    Ok(cap / (region.len() as f64).powf(1.0 - 2.0 / d))
}

pub fn shape_statistic(f: &FoldingSets, g: &GreenTable) -> Result<f64> {
    shape_statistic_of(&f.occupied_region, g)
}

/// Outcome of a Monte Carlo covering estimate.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CoverEstimate {
    pub proportion: Proportion,
    /// Trials that reached the escape distance with requirements pending.
    pub escaped: u64,
    /// Trials that ran out of horizon.
    pub timed_out: u64,
    /// Bound on the chance that an escaped walker ever comes back.
    pub return_bound: f64,
    /// `[ci.lo, ci.hi + escaped·β/trials + timed_out/trials]`.
    pub bracket: (f64, f64),
}

enum Run {
    Done,
    Escaped,
    Timeout,
}

/// Walks from the origin, decrementing the counters of every group that
/// contains the visited site, until all counters reach zero.
fn run_requirements(
    hs: &HitSet,
    sites: &SiteSet,
    groups: &[Vec<usize>],
    needs: &[u32],
    escape: f64,
    horizon: u64,
    rng: &mut StepRng,
) -> Run {
    let mut left = needs.to_vec();
    let mut pending = left.iter().filter(|&&v| v > 0).count();
    if pending == 0 {
        return Run::Done;
    }
    let mut w = Point::origin(sites.dim());
    let mut used = 0u64;
    loop {
        match run_until_hit(hs, w, escape, horizon - used, rng) {
            Fate::Hit { site, steps } => {
                used += steps;
                let i = sites.index_of(&site).expect("hit inside the set");
                for &k in &groups[i] {
                    if left[k] > 0 {
                        left[k] -= 1;
                        if left[k] == 0 {
                            pending -= 1;
                        }
                    }
                }
                if pending == 0 {
                    return Run::Done;
                }
                if used >= horizon {
                    return Run::Timeout;
                }
                w = step(&site, rng);
                used += 1;
            }
            Fate::Escaped { .. } => return Run::Escaped,
            Fate::Timeout { .. } => return Run::Timeout,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn covering_engine(
    sites: &SiteSet,
    groups: &[Vec<usize>],
    needs: &[u32],
    trials: u64,
    horizon: u64,
    escape_radius: f64,
    g: &GreenTable,
    rng: &StepRng,
) -> Result<CoverEstimate> {
    if sites.is_empty() {
        return Err(Error::EmptySet);
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    if !(escape_radius >= 1.0) {
        return Err(Error::InvalidArgument(format!("escape radius {escape_radius} < 1")));
    }
    let hs = HitSet::new(sites);
    let escape = hs.radius() + escape_radius;
    let origin = Point::origin(sites.dim());
    if hs.center_dist(&origin) >= escape {
        return Err(Error::Precondition(
            "the origin lies beyond the escape distance of the set".into(),
        ));
    }
    let cap_hi = sites.len() as f64 / g.g0().lo;
    let beta = (g.tail_constant(escape_radius) * escape_radius.powf(2.0 - g.dim() as f64) * cap_hi).min(1.0);
    let impossible = needs.iter().any(|&v| v as u64 > horizon.saturating_add(1));
    let blocks = trials.div_ceil(BLOCK);
    let counts: Vec<[u64; 3]> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut c = [0u64; 3];
            let todo = BLOCK.min(trials - b * BLOCK);
            if impossible {
                c[2] = todo;
                return c;
            }
            let mut r = rng.substream(b);
            for _ in 0..todo {
                match run_requirements(&hs, sites, groups, needs, escape, horizon, &mut r) {
                    Run::Done => c[0] += 1,
                    Run::Escaped => c[1] += 1,
                    Run::Timeout => c[2] += 1,
                }
            }
            c
        })
        .collect();
    let tot = counts.iter().fold([0u64; 3], |a, c| [a[0] + c[0], a[1] + c[1], a[2] + c[2]]);
    let proportion = Proportion::new(tot[0], trials);
    // impossible requirements fail on every path, not only on truncated ones
    let timeout_mass = if impossible { 0.0 } else { tot[2] as f64 };
    let hi = proportion.ci.1 + (tot[1] as f64 * beta + timeout_mass) / trials as f64;
    Ok(CoverEstimate {
        proportion,
        escaped: tot[1],
        timed_out: tot[2],
        return_bound: beta,
        bracket: (proportion.ci.0, hi.min(1.0)),
    })
}

/// Estimates `P(ℓ_∞(z) ≥ n_z ∀z ∈ Λ)` for the walk from the origin.
/// `thresholds` is aligned with `sites`. Walks that leave `escape_radius`
/// beyond the set's bounding sphere, or exceed `horizon` steps, with
/// requirements pending count as failures; the bracket accounts for them.
pub fn covering_probability_mc(
    sites: &SiteSet,
    thresholds: &[u32],
    trials: u64,
    horizon: u64,
    escape_radius: f64,
    g: &GreenTable,
    rng: &StepRng,
) -> Result<CoverEstimate> {
    if thresholds.len() != sites.len() {
        return Err(Error::InvalidArgument(format!(
            "{} thresholds for {} sites",
            thresholds.len(),
            sites.len()
        )));
    }
    let groups: Vec<Vec<usize>> = (0..sites.len()).map(|i| vec![i]).collect();
    covering_engine(sites, &groups, thresholds, trials, horizon, escape_radius, g, rng)
}

#[derive(Clone, Debug, Serialize)]
pub struct BallCoverEstimate {
    pub estimate: CoverEstimate,
    /// Visits each ball needs: `⌊ρ r^d⌋ + 1`, the strict threshold.
    pub need: u32,
    pub capacity: f64,
    /// `−log p̂ / (ρ cap(B_r(C)))` when `p̂ > 0`.
    pub kappa: Option<f64>,
}

/// Estimates `P(ℓ_∞(B_r(x)) > ρ r^d ∀x ∈ C)`.
#[allow(clippy::too_many_arguments)]
pub fn ball_covering_mc(
    centers: &SiteSet,
    r: f64,
    rho: f64,
    trials: u64,
    horizon: u64,
    escape_radius: f64,
    g: &GreenTable,
    rng: &StepRng,
) -> Result<BallCoverEstimate> {
    if centers.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be non-negative, got {rho}")));
    }
    let union = ball_union(centers, r)?;
    let r2 = r * r;
    let groups: Vec<Vec<usize>> = union
        .iter()
        .map(|p| {
            centers
                .iter()
                .enumerate()
                .filter(|(_, c)| (p.dist2(c) as f64) < r2)
                .map(|(k, _)| k)
                .collect()
        })
        .collect();
    let thr = rho * r.powi(centers.dim() as i32);
    let need = (thr.floor() + 1.0).min(u32::MAX as f64) as u32;
    let needs = vec![need; centers.len()];
    let estimate = covering_engine(&union, &groups, &needs, trials, horizon, escape_radius, g, rng)?;
    let capacity = cap_exact::<f64>(&union, g)?.value;
    let p = estimate.proportion.estimate;
    let kappa = (p > 0.0 && rho > 0.0).then(|| -p.ln() / (rho * capacity));
    Ok(BallCoverEstimate {
        estimate,
        need,
        capacity,
        kappa,
    })
}

/// `z ∈ Q_{2h}(0) = [−h, h)^d`.
#[inline]
fn in_cube(p: &Point, h: i32) -> bool {
    p.coords().iter().all(|&c| -h <= c && c < h)
}

/// Interior boundary of `[−h, h)^d`.
#[inline]
fn on_surface(p: &Point, h: i32) -> bool {
    in_cube(p, h) && p.coords().iter().any(|&c| c == -h || c == h - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    /// Before the first visit to `∂Q_{2R}`.
    Idle,
    /// Inside an excursion from `∂Q_{2R}` to `∂Q_{4R}`.
    Out,
    /// Between excursions, on the way back to `∂Q_{2R}`.
    Back,
}

/// Counts excursions from `∂Q_{2R}` to `∂Q_{4R}` before the walk exits
/// `Q_{8R}`, fed one position at a time. Boundaries are interior
/// boundaries of the half-open cubes `Q_s = [−s/2, s/2)^d`. An excursion
/// starts at the first visit to `∂Q_{2R}` after the previous one ended.
#[derive(Clone, Debug)]
pub struct ExcursionCounter {
    big_r: i32,
    phase: Phase,
    /// Completed excursions `∂Q_{2R} → ∂Q_{4R}`.
    pub completed: u32,
    /// Completed returns `∂Q_{4R} → ∂Q_{2R}`.
    pub returns: u32,
    pub exited: bool,
}

impl ExcursionCounter {
    pub fn new(big_r: u32) -> Self {
        Self {
            big_r: big_r as i32,
            phase: Phase::Idle,
            completed: 0,
            returns: 0,
            exited: false,
        }
    }

    /// Whether the position just fed belongs to an excursion in progress.
    pub fn in_excursion(&self) -> bool {
        self.phase == Phase::Out
    }

    pub fn feed(&mut self, p: &Point) {
        if self.exited {
            return;
        }
        let r = self.big_r;
        if !in_cube(p, 4 * r) {
            self.exited = true;
            self.phase = Phase::Idle;
            return;
        }
        match self.phase {
            Phase::Idle => {
                if on_surface(p, r) {
                    self.phase = Phase::Out;
                }
            }
            Phase::Out => {
                if on_surface(p, 2 * r) {
                    self.completed += 1;
                    self.phase = Phase::Back;
                }
            }
            Phase::Back => {
                if on_surface(p, r) {
                    self.returns += 1;
                    self.phase = Phase::Out;
                }
            }
        }
    }
}

/// Completed excursions along a path.
pub fn excursion_count(path: &[Point], big_r: u32) -> u32 {
    let mut c = ExcursionCounter::new(big_r);
    for p in path {
        c.feed(p);
    }
    c.completed
}

/// Scenario constants. Only their existence is known; the defaults come from a pilot run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConstants {
    /// `T = ⌊C₁ ρ R^d⌋`.
    pub c1: f64,
    /// `N = ⌊C₂ ρ R^{d−2}⌋`.
    pub c2: f64,
    /// Minimum walk length `n ≥ C ρ r^d L`.
    pub c_time: f64,
}

impl Default for ScenarioConstants {
    /// From [`pilot_constants`] on the `(r, ρ, L) = (4, 0.2, 8)` cell, seed 2024,
    /// 400 pilot trials.
    fn default() -> Self {
        Self {
            c1: 512.0,
            c2: 32.0,
            c_time: 512.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcursionScenario {
    pub dim: usize,
    pub l: u32,
    pub r: u32,
    pub rho: f64,
    pub constants: ScenarioConstants,
}

impl ExcursionScenario {
    /// `R = ⌊L^{1/d} r⌋`.
    pub fn big_r(&self) -> u32 {
        ((self.l as f64).powf(1.0 / self.dim as f64) * self.r as f64 + 1e-9).floor() as u32
    }

    pub fn big_t(&self) -> u64 {
        (self.constants.c1 * self.rho * (self.big_r() as f64).powi(self.dim as i32)).floor() as u64
    }

    pub fn big_n(&self) -> u32 {
        (self.constants.c2 * self.rho * (self.big_r() as f64).powi(self.dim as i32 - 2)).floor() as u32
    }

    /// `C ρ r^d L`, rounded up.
    pub fn min_steps(&self) -> u64 {
        (self.constants.c_time * self.rho * (self.r as f64).powi(self.dim as i32) * self.l as f64).ceil() as u64
    }

    /// `ρ r^{d−2} L^{1−2/d}`.
    pub fn scale(&self) -> f64 {
        let d = self.dim as f64;
        self.rho * (self.r as f64).powf(d - 2.0) * (self.l as f64).powf(1.0 - 2.0 / d)
    }

    /// Box centres `v_i ∈ rZ^d ∩ Q_{R−r}` on the origin's grid. When that set
    /// is empty (`R = r`) the origin's box is used alone.
    pub fn boxes(&self) -> Vec<Point> {
        let side = self.big_r() as i64 - self.r as i64;
        let r = self.r as i64;
        // k r ∈ [−side/2, side/2)
        let ks: Vec<i64> = (-side..=side)
            .filter(|k| {
                let v = 2 * k * r;
                -side <= v && v < side
            })
            .collect();
        if ks.is_empty() {
            return vec![Point::origin(self.dim)];
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; self.dim];
        loop {
            let c: Vec<i32> = idx.iter().map(|&i| (ks[i] * r) as i32).collect();
            out.push(Point::new(&c).expect("dimension checked"));
            let mut a = 0;
            loop {
                if a == self.dim {
                    return out;
                }
                idx[a] += 1;
                if idx[a] < ks.len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }

    /// Violated preconditions, empty when the scenario is admissible for `n`.
    pub fn violations(&self, n: u64) -> Vec<String> {
        let mut v = Vec::new();
        let d = self.dim as i32;
        if !(self.rho > 0.0 && self.rho < 0.5) {
            v.push(format!("rho = {} is outside (0, 1/2)", self.rho));
        }
        let lhs = self.rho * (self.r as f64).powi(d - 2);
        if lhs < 1.0 {
            v.push(format!("rho r^(d-2) = {lhs} < 1"));
        }
        if n < self.min_steps() {
            v.push(format!("n = {n} < C rho r^d L = {}", self.min_steps()));
        }
        if self.big_n() == 0 {
            v.push("N = 0 excursions".into());
        }
        v
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub scenario: ExcursionScenario,
    pub n: u64,
    pub big_r: u32,
    pub big_t: u64,
    pub big_n: u32,
    pub boxes: usize,
    pub violations: Vec<String>,
    /// `N_R ≥ N`.
    pub event_a: Proportion,
    /// Event B among trials where A holds.
    pub event_b_given_a: Proportion,
    /// Event B under the law of `N` independent excursions from uniform
    /// points of `∂Q_{2R}`.
    pub event_b_excursions: Proportion,
    /// At least `N` returns `∂Q_{4R} → ∂Q_{2R}` before time `T`.
    pub event_c: Proportion,
    pub event_c_given_a: Proportion,
    pub event_abc: Proportion,
    /// `|C̃_n(r, ρ)| ≥ L`.
    pub target: Proportion,
    pub scale: f64,
    /// `−log(target)/scale` when the target frequency is positive.
    pub exponent: Option<f64>,
}

#[derive(Default, Clone, Copy)]
struct TrialFlags {
    a: bool,
    b: bool,
    c: bool,
    target: bool,
}

fn scenario_trial(s: &ExcursionScenario, n: u64, boxes: &FxHashSet<Point>, rng: &mut StepRng) -> TrialFlags {
    let dim = s.dim;
    let big_n = s.big_n();
    let big_t = s.big_t();
    let r = s.r;
    let thr = s.rho * (r as f64).powi(dim as i32);
    let mut counter = ExcursionCounter::new(s.big_r().max(1));
    let mut visited: FxHashSet<Point> = FxHashSet::default();
    let mut per_cube: FxHashMap<Point, u32> = FxHashMap::default();
    let mut exc_seen: FxHashSet<Point> = FxHashSet::default();
    let mut exc_cube: FxHashMap<Point, u32> = FxHashMap::default();
    let mut returns_by_t = 0;
    let mut w = Point::origin(dim);
    for t in 0..=n {
        if t > 0 {
            w = step(&w, rng);
        }
        if visited.insert(w) {
            *per_cube.entry(cube_center(&w, r)).or_insert(0) += 1;
        }
        counter.feed(&w);
        if counter.in_excursion() && counter.completed < big_n {
            let c = cube_center(&w, r);
            if boxes.contains(&c) && exc_seen.insert(w) {
                *exc_cube.entry(c).or_insert(0) += 1;
            }
        }
        if t <= big_t {
            returns_by_t = counter.returns;
        }
    }
    let covered = per_cube.values().filter(|&&m| m as f64 >= thr).count();
    let filled = exc_cube.values().filter(|&&m| m as f64 >= thr).count();
    TrialFlags {
        a: counter.completed >= big_n,
        b: 2 * filled >= boxes.len(),
        c: returns_by_t >= big_n,
        target: covered >= s.l as usize,
    }
}

/// Simulates the localization scenario. With `strict`, violated
/// preconditions are an error; otherwise they are listed in the report.
pub fn localization_scenario(
    s: &ExcursionScenario,
    n: u64,
    trials: u64,
    strict: bool,
    rng: &StepRng,
) -> Result<ScenarioReport> {
    if s.r < 1 || s.l < 1 || s.big_r() < 1 {
        return Err(Error::InvalidArgument("need r >= 1, L >= 1".into()));
    }
    let violations = s.violations(n);
    if strict && !violations.is_empty() {
        return Err(Error::Precondition(violations.join("; ")));
    }
    let box_list = s.boxes();
    let boxes: FxHashSet<Point> = box_list.iter().copied().collect();
    let blocks = trials.div_ceil(BLOCK);
    let counts: Vec<[u64; 6]> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.substream(b);
            let mut c = [0u64; 6];
            for _ in 0..BLOCK.min(trials - b * BLOCK) {
                let f = scenario_trial(s, n, &boxes, &mut r);
                c[0] += f.a as u64;
                c[1] += (f.a && f.b) as u64;
                c[2] += f.c as u64;
                c[3] += (f.a && f.b && f.c) as u64;
                c[4] += f.target as u64;
                c[5] += (f.a && f.c) as u64;
            }
            c
        })
        .collect();
    let mut tot = [0u64; 6];
    for c in &counts {
        for k in 0..6 {
            tot[k] += c[k];
        }
    }
    let target = Proportion::new(tot[4], trials);
    let scale = s.scale();
    Ok(ScenarioReport {
        scenario: *s,
        n,
        big_r: s.big_r(),
        big_t: s.big_t(),
        big_n: s.big_n(),
        boxes: box_list.len(),
        violations,
        event_a: Proportion::new(tot[0], trials),
        event_b_given_a: Proportion::new(tot[1], tot[0]),
        event_b_excursions: event_b_direct(s, trials, &rng.substream(u64::MAX)),
        event_c: Proportion::new(tot[2], trials),
        event_c_given_a: Proportion::new(tot[5], tot[0]),
        event_abc: Proportion::new(tot[3], trials),
        target,
        scale,
        exponent: (target.estimate > 0.0).then(|| -target.estimate.ln() / scale),
    })
}

/// Walks from `start` until the interior boundary of `[−h, h)^d`, calling
/// `visit` on every position; returns the steps taken and the end point.
fn walk_to_surface(start: Point, h: i32, rng: &mut StepRng, mut visit: impl FnMut(&Point)) -> (u64, Point) {
    let mut w = start;
    let mut t = 0;
    visit(&w);
    while !on_surface(&w, h) {
        w = step(&w, rng);
        t += 1;
        visit(&w);
    }
    (t, w)
}

/// From a point of `∂Q_{4R}`, the walk back to `∂Q_{2R}`; `None` when it
/// leaves `Q_{8R}` first.
fn walk_back(start: Point, big_r: i32, rng: &mut StepRng) -> Option<(u64, Point)> {
    let mut w = start;
    let mut t = 0;
    loop {
        w = step(&w, rng);
        t += 1;
        if !in_cube(&w, 4 * big_r) {
            return None;
        }
        if on_surface(&w, big_r) {
            return Some((t, w));
        }
    }
}

fn uniform_surface_point(dim: usize, h: i32, rng: &mut StepRng) -> Point {
    use rand::Rng;
    loop {
        let c: Vec<i32> = (0..dim).map(|_| rng.random_range(-h..h)).collect();
        let p = Point::new(&c).expect("dimension checked");
        if on_surface(&p, h) {
            return p;
        }
    }
}

/// Frequency of event B under the law of `N` independent excursions from
/// `∂Q_{2R}` to `∂Q_{4R}` with uniformly drawn starting points.
pub fn event_b_direct(s: &ExcursionScenario, trials: u64, rng: &StepRng) -> Proportion {
    let big_r = s.big_r().max(1) as i32;
    let boxes: FxHashSet<Point> = s.boxes().into_iter().collect();
    let thr = s.rho * (s.r as f64).powi(s.dim as i32);
    let blocks = trials.div_ceil(BLOCK);
    let hits: u64 = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.substream(b);
            let mut ok = 0;
            for _ in 0..BLOCK.min(trials - b * BLOCK) {
                let mut seen: FxHashSet<Point> = FxHashSet::default();
                let mut per: FxHashMap<Point, u32> = FxHashMap::default();
                for _ in 0..s.big_n() {
                    let x = uniform_surface_point(s.dim, big_r, &mut r);
                    walk_to_surface(x, 2 * big_r, &mut r, |p| {
                        let c = cube_center(p, s.r);
                        if boxes.contains(&c) && seen.insert(*p) {
                            *per.entry(c).or_insert(0) += 1;
                        }
                    });
                }
                let filled = per.values().filter(|&&m| m as f64 >= thr).count();
                ok += (2 * filled >= boxes.len()) as u64;
            }
            ok
        })
        .sum();
    Proportion::new(hits, trials)
}

/// Time for `N` excursion cycles `∂Q_{2R} → ∂Q_{4R} → ∂Q_{2R}`, each cycle
/// resampled until it stays inside `Q_{8R}`.
fn cycle_time(s: &ExcursionScenario, rng: &mut StepRng) -> u64 {
    let big_r = s.big_r().max(1) as i32;
    let mut x = uniform_surface_point(s.dim, big_r, rng);
    let mut total = 0;
    let mut done = 0;
    while done < s.big_n() {
        let (t1, y) = walk_to_surface(x, 2 * big_r, rng, |_| {});
        if let Some((t2, z)) = walk_back(y, big_r, rng) {
            total += t1 + t2;
            x = z;
            done += 1;
        }
    }
    total
}

/// Pilot calibration of the scenario constants on one cell. `C₂` is the
/// smallest value on a doubling ladder for which the direct event-B frequency
/// reaches 3/4; `C₁` the smallest for which 90% of the `N`-cycle times fit in
/// `T`; `C = C₁`, so that `n ≥ C ρ r^d L` implies `n ≥ T`.
pub fn pilot_constants(base: &ExcursionScenario, trials: u64, rng: &StepRng) -> Result<ScenarioConstants> {
    let mut c2 = 1.0;
    let mut chosen = None;
    for k in 0..10u64 {
        let s = ExcursionScenario {
            constants: ScenarioConstants { c2, ..base.constants },
            ..*base
        };
        if s.big_n() > 0 && event_b_direct(&s, trials, &rng.substream(k)).estimate >= 0.75 {
            chosen = Some(s);
            break;
        }
        c2 *= 2.0;
    }
    let s = chosen.ok_or_else(|| Error::Precondition("no C2 on the ladder reaches the event-B target".into()))?;
    let mut r = rng.substream(100);
    let mut times: Vec<u64> = (0..trials).map(|_| cycle_time(&s, &mut r)).collect();
    times.sort_unstable();
    let q90 = times[((0.9 * trials as f64) as usize).min(times.len() - 1)] as f64;
    let unit = s.rho * (s.big_r() as f64).powi(s.dim as i32);
    let mut c1 = 1.0;
    while c1 * unit < q90 {
        c1 *= 2.0;
    }
    Ok(ScenarioConstants {
        c1,
        c2,
        c_time: c1,
    })
}
