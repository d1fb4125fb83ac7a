//! Greedy `4r`-separation and the randomized extraction of a subset whose
//! volume and capacity are both comparable to the capacity of the input.
//!
//! Each centre launches one walk and is kept when the walk escapes; draws are
//! repeated with fresh streams until the success predicate holds.

use crate::capacity::{cap_exact, McConfig};
use crate::error::{Error, Result};
use crate::escape::{run_until_hit, Fate, HitSet};
use crate::green::GreenTable;
use crate::lattice::{ball_offsets, ball_union, Point, SiteSet, MAX_DIM};
use crate::rng::{step, StepRng};
use log::warn;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

/// Keeps the first point (in lexicographic order) at distance `≥ 4r` from
/// every point kept so far.
pub fn greedy_separate(centers: &SiteSet, r: f64) -> Result<SiteSet> {
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("r must be >= 1, got {r}")));
    }
    let min2 = 16.0 * r * r;
    let mut kept: Vec<Point> = Vec::new();
    let mut grid: FxHashMap<Point, Vec<Point>> = FxHashMap::default();
    let cell = (4.0 * r).ceil() as i32;
    let cell_of = |p: &Point| {
        let c: Vec<i32> = p.coords().iter().map(|v| v.div_euclid(cell)).collect();
        Point::new(&c).expect("dimension checked")
    };
    let dim = centers.dim();
    for p in centers {
        let c = cell_of(p);
        let mut ok = true;
        'scan: for off in 0..3usize.pow(dim as u32) {
            let mut q = c;
            let mut k = off;
            for axis in 0..dim {
                q = q.shifted(axis, (k % 3) as i32 - 1);
                k /= 3;
            }
            if let Some(list) = grid.get(&q) {
                if list.iter().any(|o| (o.dist2(p) as f64) < min2) {
                    ok = false;
                    break 'scan;
                }
            }
        }
        if ok {
            kept.push(*p);
            grid.entry(c).or_default().push(*p);
        }
    }
    SiteSet::new(dim, kept)
}

/// Whether every pair is at distance `≥ 4r`.
pub fn is_separated(centers: &SiteSet, r: f64) -> Option<(Point, Point)> {
    let min2 = 16.0 * r * r;
    let pts = centers.as_slice();
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            if (a.dist2(b) as f64) < min2 {
                return Some((*a, *b));
            }
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    /// Distance beyond the target's bounding sphere at which a walk counts as escaped.
    pub escape_radius: f64,
    pub retries: usize,
    /// Walks per centre for the kept-probability estimates of the general case.
    pub pilot_walkers: u64,
    /// Boundary Gram threshold constant; calibrated from the diagonal term if absent.
    pub c_check: Option<f64>,
}

impl ExtractionConfig {
    pub fn new(escape_radius: f64) -> Self {
        Self {
            escape_radius,
            retries: 64,
            pilot_walkers: 64,
            c_check: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtractionOutcome {
    /// The realized `U`.
    pub subset: SiteSet,
    pub r: f64,
    /// Draws used, the last one successful.
    pub draws: usize,
    pub volume_ok: bool,
    pub gram_ok: bool,
    /// `|U|` (r = 1) or `|B_r(U)|`.
    pub volume: usize,
    /// `cap(Λ)` (r = 1) or the estimate `E` of `E|B_r(U)|`.
    pub volume_target: f64,
    pub gram_sum: f64,
    pub gram_threshold: f64,
    /// `cap(B_r(U))`.
    pub capacity: f64,
    /// `cap(B_r(C))`.
    pub reference_capacity: f64,
    /// `cap(B_r(U))/(r^{d−2}|U|)` and `r^{d−2}|U|/cap(B_r(C))`.
    pub ratios: (f64, f64),
    /// `cap(U) ≥ |U|/(8(G(0)+1))`, checked for r = 1 only.
    pub uniform_bound_ok: Option<bool>,
    pub seed: u64,
    pub stream: u64,
}

fn check_escape(centers: &SiteSet, escape_radius: f64) -> Result<()> {
    let diam = centers.diameter();
    if !(escape_radius >= 4.0 * diam) || !(escape_radius >= 1.0) {
        return Err(Error::Precondition(format!(
            "escape radius {escape_radius} is below 4 x diameter = {}",
            4.0 * diam
        )));
    }
    Ok(())
}

/// Keep indicators of one draw, one substream per centre.
fn draw_keeps(
    centers: &SiteSet,
    rng: &StepRng,
    walk: impl Fn(&Point, &mut StepRng) -> bool + Sync,
) -> Vec<bool> {
    centers
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(i, x)| walk(x, &mut rng.substream(i as u64)))
        .collect()
}

fn subset_of(centers: &SiteSet, keep: &[bool]) -> SiteSet {
    SiteSet::new(
        centers.dim(),
        centers.iter().zip(keep).filter(|(_, &k)| k).map(|(p, _)| *p),
    )
    .expect("dimension checked")
}

fn gram_sum(u: &SiteSet, g: &GreenTable) -> f64 {
    let pts = u.as_slice();
    pts.par_iter()
        .map(|x| pts.iter().map(|y| g.green(&(*x - *y))).sum::<f64>())
        .sum()
}

/// The `r = 1` extraction: `U = {x ∈ Λ : γ_x never returns to Λ}`. Success
/// needs `½cap(Λ) ≤ |U| ≤ 2cap(Λ)` and `Σ_{x,y∈U} G(x−y) ≤ 4(G(0)+1)cap(Λ)`.
pub fn extract_r1(sites: &SiteSet, g: &GreenTable, cfg: &ExtractionConfig, rng: &StepRng) -> Result<ExtractionOutcome> {
    if sites.is_empty() {
        return Err(Error::EmptySet);
    }
    check_escape(sites, cfg.escape_radius)?;
    let cap = cap_exact::<f64>(sites, g)?.value;
    if cap <= 16.0 {
        warn!("cap = {cap:.3} <= 16: the concentration bound is vacuous, the retry limit governs");
    }
    let hs = HitSet::new(sites);
    let escape = hs.radius() + cfg.escape_radius;
    let g0 = g.g0().mid();
    let threshold = 4.0 * (g0 + 1.0) * cap;
    for draw in 0..cfg.retries {
        let stream = rng.substream(draw as u64);
        let keep = draw_keeps(sites, &stream, |x, r| {
            let w = step(x, r);
            matches!(run_until_hit(&hs, w, escape, u64::MAX, r), Fate::Escaped { .. })
        });
        let u = subset_of(sites, &keep);
        let volume = u.len();
        let volume_ok = 0.5 * cap <= volume as f64 && volume as f64 <= 2.0 * cap;
        let gram = gram_sum(&u, g);
        let gram_ok = gram <= threshold;
        if !(volume_ok && gram_ok) || u.is_empty() {
            continue;
        }
        let cap_u = cap_exact::<f64>(&u, g)?.value;
        let n = volume as f64;
        return Ok(ExtractionOutcome {
            subset: u,
            r: 1.0,
            draws: draw + 1,
            volume_ok,
            gram_ok,
            volume,
            volume_target: cap,
            gram_sum: gram,
            gram_threshold: threshold,
            capacity: cap_u,
            reference_capacity: cap,
            ratios: (cap_u / n, n / cap),
            uniform_bound_ok: Some(cap_u >= n / (8.0 * (g0 + 1.0))),
            seed: stream.seed(),
            stream: stream.stream(),
        });
    }
    Err(Error::RetryLimit { draws: cfg.retries })
}

/// `Φ(v) = Σ_{y,y'∈∂B_r(0)} G(v + y − y')`, the boundary Gram kernel.
/// Exact up to `|v| ≤ 8r`, monopole `|∂B_r|² G(v)` beyond.
pub struct BoundaryKernel<'a> {
    g: &'a GreenTable,
    r: f64,
    boundary: usize,
    diffs: Vec<(Point, u32)>,
    cache: std::sync::Mutex<FxHashMap<[u32; MAX_DIM], f64>>,
}

impl<'a> BoundaryKernel<'a> {
    pub fn new(dim: usize, r: f64, g: &'a GreenTable) -> Result<Self> {
        let ball = SiteSet::new(dim, ball_offsets(dim, r)?)?;
        let bd = ball.interior_boundary();
        let mut counts: FxHashMap<Point, u32> = FxHashMap::default();
        for a in &bd {
            for b in &bd {
                *counts.entry(*a - *b).or_insert(0) += 1;
            }
        }
        let mut diffs: Vec<(Point, u32)> = counts.into_iter().collect();
        diffs.sort_unstable();
        Ok(Self {
            g,
            r,
            boundary: bd.len(),
            diffs,
            cache: Default::default(),
        })
    }

    pub fn boundary_size(&self) -> usize {
        self.boundary
    }

    pub fn eval(&self, v: &Point) -> f64 {
        let key = v.canonical();
        if let Some(&x) = self.cache.lock().expect("poisoned").get(&key) {
            return x;
        }
        let far = (v.norm2() as f64) > 64.0 * self.r * self.r;
        let x = if far {
            (self.boundary * self.boundary) as f64 * self.g.green(v)
        } else {
            self.diffs
                .iter()
                .map(|(d, c)| *c as f64 * self.g.green(&(*v + *d)))
                .sum()
        };
        self.cache.lock().expect("poisoned").insert(key, x);
        x
    }

    /// `Σ_{x,x'∈U} Φ(x' − x)`.
    pub fn gram(&self, u: &SiteSet) -> f64 {
        let pts = u.as_slice();
        pts.par_iter()
            .map(|x| pts.iter().map(|y| self.eval(&(*y - *x))).sum::<f64>())
            .sum()
    }

    /// `4(Φ(0) + |∂B_r|²)/r^d`; reduces to `4(G(0) + 1)` at `r = 1`.
    pub fn default_c_check(&self, dim: usize) -> f64 {
        let b = self.boundary as f64;
        4.0 * (self.eval(&Point::origin(dim)) + b * b) / self.r.powi(dim as i32)
    }
}

/// Walk from `x` until it leaves `B_{2r}(x)`, then report whether it never
/// returns to `Λ_r`.
fn keep_walk(hs: &HitSet, x: &Point, r: f64, escape: f64, rng: &mut StepRng) -> bool {
    let lim = 4.0 * r * r;
    let mut w = *x;
    loop {
        w = step(&w, rng);
        if w.dist2(x) as f64 >= lim {
            break;
        }
    }
    matches!(run_until_hit(hs, w, escape, u64::MAX, rng), Fate::Escaped { .. })
}

/// Estimated `P(H^r_{Λ_r}(γ_x) = ∞)` for every centre.
pub fn keep_probabilities(centers: &SiteSet, r: f64, walkers: u64, escape_radius: f64, rng: &StepRng) -> Result<Vec<f64>> {
    let lambda = ball_union(centers, r)?;
    let hs = HitSet::new(&lambda);
    let escape = hs.radius() + escape_radius;
    Ok(centers
        .as_slice()
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut s = rng.substream(i as u64);
            (0..walkers).filter(|_| keep_walk(&hs, x, r, escape, &mut s)).count() as f64 / walkers as f64
        })
        .collect())
}

/// The general extraction on a `4r`-separated set of centres: a centre is kept
/// when its walk, after leaving `B_{2r}(C)`, never returns to `Λ_r = B_r(C)`.
/// Success needs `½E ≤ |B_r(U)| ≤ 2E` and the boundary Gram sum below
/// `c_check r^d |U|`.
pub fn extract_general(
    centers: &SiteSet,
    r: f64,
    g: &GreenTable,
    cfg: &ExtractionConfig,
    rng: &StepRng,
) -> Result<ExtractionOutcome> {
    if centers.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!("r must be >= 1, got {r}")));
    }
    if let Some((a, b)) = is_separated(centers, r) {
        return Err(Error::NotSeparated {
            a: a.to_string(),
            b: b.to_string(),
            min_distance: 4.0 * r,
        });
    }
    check_escape(centers, cfg.escape_radius)?;
    let dim = centers.dim();
    let lambda = ball_union(centers, r)?;
    let hs = HitSet::new(&lambda);
    let escape = hs.radius() + cfg.escape_radius;
    let ball_size = ball_offsets(dim, r)?.len() as f64;
    let pilot = keep_probabilities(centers, r, cfg.pilot_walkers.max(1), cfg.escape_radius, &rng.substream(u64::MAX))?;
    let e_volume = ball_size * pilot.iter().sum::<f64>();
    let kernel = BoundaryKernel::new(dim, r, g)?;
    let c_check = cfg.c_check.unwrap_or_else(|| kernel.default_c_check(dim));
    let rd = r.powi(dim as i32);
    let rd2 = r.powi(dim as i32 - 2);
    let reference = cap_exact::<f64>(&lambda, g)?.value;
    for draw in 0..cfg.retries {
        let stream = rng.substream(draw as u64);
        let keep = draw_keeps(centers, &stream, |x, s| keep_walk(&hs, x, r, escape, s));
        let u = subset_of(centers, &keep);
        if u.is_empty() {
            continue;
        }
        let volume = u.len() * ball_size as usize;
        let volume_ok = 0.5 * e_volume <= volume as f64 && volume as f64 <= 2.0 * e_volume;
        let gram = kernel.gram(&u);
        let threshold = c_check * rd * u.len() as f64;
        let gram_ok = gram <= threshold;
        if !(volume_ok && gram_ok) {
            continue;
        }
        let cap_u = cap_exact::<f64>(&ball_union(&u, r)?, g)?.value;
        let n = u.len() as f64;
        return Ok(ExtractionOutcome {
            subset: u,
            r,
            draws: draw + 1,
            volume_ok,
            gram_ok,
            volume,
            volume_target: e_volume,
            gram_sum: gram,
            gram_threshold: threshold,
            capacity: cap_u,
            reference_capacity: reference,
            ratios: (cap_u / (rd2 * n), rd2 * n / reference),
            uniform_bound_ok: None,
            seed: stream.seed(),
            stream: stream.stream(),
        });
    }
    Err(Error::RetryLimit { draws: cfg.retries })
}

#[derive(Clone, Debug, Serialize)]
pub struct KeepRatioRow {
    pub center: Point,
    /// `r^{2−d} Σ_{y∈∂B_r(x)} P(H⁺_{Λ_r}(y + S) = ∞)`.
    pub boundary_sum: f64,
    /// `P(H^r_{Λ_r}(γ_x) = ∞)`.
    pub keep_probability: f64,
    pub ratio: f64,
}

/// Both sides of the comparison between the keep probability and the
/// boundary escape sum, each estimated with `walkers` walks per start.
pub fn keep_ratios(
    centers: &SiteSet,
    r: f64,
    walkers: u64,
    escape_radius: f64,
    rng: &StepRng,
) -> Result<Vec<KeepRatioRow>> {
    if let Some((a, b)) = is_separated(centers, r) {
        return Err(Error::NotSeparated {
            a: a.to_string(),
            b: b.to_string(),
            min_distance: 4.0 * r,
        });
    }
    let dim = centers.dim();
    let lambda = ball_union(centers, r)?;
    let mc = McConfig {
        walkers_per_site: walkers,
        escape_radius,
        cap_upper: None,
    };
    let hs = HitSet::new(&lambda);
    let escape = hs.radius() + mc.escape_radius;
    let keep = keep_probabilities(centers, r, walkers, escape_radius, &rng.substream(0))?;
    let bd_offsets = SiteSet::new(dim, ball_offsets(dim, r)?)?.interior_boundary();
    let scale = r.powi(2 - dim as i32);
    Ok(centers
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let sub = rng.substream(1).substream(i as u64);
            let sum: f64 = bd_offsets
                .as_slice()
                .par_iter()
                .enumerate()
                .map(|(k, o)| {
                    let y = *x + *o;
                    let mut s = sub.substream(k as u64);
                    let esc = (0..walkers)
                        .filter(|_| {
                            let w = step(&y, &mut s);
                            matches!(run_until_hit(&hs, w, escape, u64::MAX, &mut s), Fate::Escaped { .. })
                        })
                        .count();
                    esc as f64 / walkers as f64
                })
                .sum();
            let boundary_sum = scale * sum;
            KeepRatioRow {
                center: *x,
                boundary_sum,
                keep_probability: keep[i],
                ratio: boundary_sum / keep[i],
            }
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaRow {
    pub index: usize,
    pub r: f64,
    pub centers: usize,
    pub separated: usize,
    /// `cap(B_r(C'))/cap(B_r(C))` for the greedy subset `C'`.
    pub greedy_ratio: f64,
    pub successes: usize,
    pub failures: usize,
    pub first_draw_successes: usize,
    pub min_ratio_i: Option<f64>,
    pub min_ratio_ii: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaReport {
    pub rows: Vec<AlphaRow>,
    pub inf_ratio_i: Option<f64>,
    pub inf_ratio_ii: Option<f64>,
    pub min_greedy_ratio: Option<f64>,
}

/// Runs the greedy separation and `trials` extractions per corpus instance
/// and records the smallest ratios seen. Failures are recorded per instance.
pub fn alpha_calibration(
    corpus: &[(SiteSet, f64)],
    trials: usize,
    g: &GreenTable,
    cfg: &ExtractionConfig,
    rng: &StepRng,
) -> Result<AlphaReport> {
    if corpus.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut rows = Vec::with_capacity(corpus.len());
    for (index, (c, r)) in corpus.iter().enumerate() {
        let mut row = AlphaRow {
            index,
            r: *r,
            centers: c.len(),
            separated: 0,
            greedy_ratio: f64::NAN,
            successes: 0,
            failures: 0,
            first_draw_successes: 0,
            min_ratio_i: None,
            min_ratio_ii: None,
            error: None,
        };
        let res = (|| -> Result<()> {
            let sep = greedy_separate(c, *r)?;
            row.separated = sep.len();
            let full = cap_exact::<f64>(&ball_union(c, *r)?, g)?.value;
            let part = cap_exact::<f64>(&ball_union(&sep, *r)?, g)?.value;
            row.greedy_ratio = part / full;
            let mut local = *cfg;
            local.escape_radius = cfg.escape_radius.max(4.0 * sep.diameter()).max(1.0);
            for t in 0..trials {
                match extract_general(&sep, *r, g, &local, &rng.substream(index as u64).substream(t as u64)) {
                    Ok(o) => {
                        row.successes += 1;
                        if o.draws == 1 {
                            row.first_draw_successes += 1;
                        }
                        // ratio (ii) refers to the original centres
                        let rd2 = r.powi(c.dim() as i32 - 2);
                        let r2 = rd2 * o.subset.len() as f64 / full;
                        row.min_ratio_i = Some(row.min_ratio_i.map_or(o.ratios.0, |m| m.min(o.ratios.0)));
                        row.min_ratio_ii = Some(row.min_ratio_ii.map_or(r2, |m| m.min(r2)));
                    }
                    Err(Error::RetryLimit { .. }) => row.failures += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(())
        })();
        if let Err(e) = res {
            row.error = Some(e.to_string());
        }
        rows.push(row);
    }
    let fold = |f: &dyn Fn(&AlphaRow) -> Option<f64>| {
        rows.iter().filter_map(f).fold(None, |a: Option<f64>, v| Some(a.map_or(v, |m| m.min(v))))
    };
    let inf_ratio_i = fold(&|r| r.min_ratio_i);
    let inf_ratio_ii = fold(&|r| r.min_ratio_ii);
    let min_greedy_ratio = fold(&|r| (!r.greedy_ratio.is_nan()).then_some(r.greedy_ratio));
    Ok(AlphaReport {
        rows,
        inf_ratio_i,
        inf_ratio_ii,
        min_greedy_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::GreenConfig;
    use std::sync::OnceLock;

    fn table() -> &'static GreenTable {
        static T: OnceLock<GreenTable> = OnceLock::new();
        T.get_or_init(|| GreenTable::build(&GreenConfig::default()).unwrap())
    }

    fn p(c: &[i32]) -> Point {
        Point::new(c).unwrap()
    }

    fn far_grid(n: usize, spacing: i32) -> SiteSet {
        let side = (n as f64).cbrt().ceil() as i32;
        let mut pts = Vec::new();
        'outer: for i in 0..side {
            for j in 0..side {
                for k in 0..side {
                    if pts.len() == n {
                        break 'outer;
                    }
                    pts.push(p(&[i * spacing, j * spacing, k * spacing]));
                }
            }
        }
        SiteSet::new(3, pts).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let two = SiteSet::new(3, [p(&[0, 0, 0]), p(&[8, 0, 0])]).unwrap();
        assert_eq!(greedy_separate(&two, 2.0).unwrap().len(), 2);
        let close = SiteSet::new(3, [p(&[0, 0, 0]), p(&[1, 0, 0])]).unwrap();
        assert_eq!(greedy_separate(&close, 1.0).unwrap().as_slice(), &[p(&[0, 0, 0])]);
        let line = SiteSet::new(3, (0..100).map(|k| p(&[k, 0, 0]))).unwrap();
        let kept = greedy_separate(&line, 1.0).unwrap();
        assert_eq!(kept.len(), 25);
        assert!(kept.iter().all(|q| q.coord(0) % 4 == 0));
        assert!(greedy_separate(&line, 0.5).is_err());
    }

    #[test]
    fn greedy_is_separated_and_maximal() {
        let mut rng = StepRng::new(11, 0);
        use rand::Rng;
        let pts: Vec<Point> = (0..300)
            .map(|_| p(&[rng.random_range(-20..20), rng.random_range(-20..20), rng.random_range(-20..20)]))
            .collect();
        let c = SiteSet::new(3, pts).unwrap();
        for r in [1.0, 1.5, 3.0] {
            let s = greedy_separate(&c, r).unwrap();
            assert!(is_separated(&s, r).is_none());
            assert!(s.is_subset(&c));
            for x in c.iter().filter(|x| !s.contains(x)) {
                assert!(s.iter().any(|y| (x.dist2(y) as f64) < 16.0 * r * r));
            }
        }
    }

    #[test]
    fn r1_outcome_guarantees() {
        let g = table();
        let lam = far_grid(50, 12);
        let cfg = ExtractionConfig::new(4.0 * lam.diameter());
        let o = extract_r1(&lam, g, &cfg, &StepRng::new(12, 0)).unwrap();
        assert!(o.volume_ok && o.gram_ok);
        assert!(o.subset.is_subset(&lam));
        assert_eq!(o.uniform_bound_ok, Some(true));
        assert!(o.ratios.0 > 0.0 && o.ratios.1 > 0.0);
        // E|U| = cap(Λ), below 50(1 − q) because the points interact
        assert!(o.volume_target < 50.0 * 0.6596 && o.volume_target > 16.0);
        let tiny = SiteSet::singleton(Point::origin(3));
        let mut few = ExtractionConfig::new(10.0);
        few.retries = 3;
        // |U| ≤ 1 < ½cap fails only when U is empty
        let _ = extract_r1(&tiny, g, &few, &StepRng::new(12, 1));
    }

    #[test]
    fn general_requires_separation() {
        let g = table();
        let c = SiteSet::new(3, [p(&[0, 0, 0]), p(&[5, 0, 0])]).unwrap();
        assert!(matches!(
            extract_general(&c, 2.0, g, &ExtractionConfig::new(100.0), &StepRng::new(1, 0)),
            Err(Error::NotSeparated { .. })
        ));
    }

    #[test]
    fn general_outcome_and_single_center() {
        let g = table();
        let c = far_grid(8, 12);
        let cfg = ExtractionConfig::new(4.0 * c.diameter());
        let o = extract_general(&c, 2.0, g, &cfg, &StepRng::new(13, 0)).unwrap();
        assert!(o.subset.is_subset(&c) && !o.subset.is_empty());
        assert!(o.ratios.0 > 0.0 && o.ratios.1 > 0.0);
        assert!(o.volume as f64 >= 0.5 * o.volume_target);
        let single = SiteSet::singleton(Point::origin(3));
        let o = extract_general(&single, 3.0, g, &ExtractionConfig::new(20.0), &StepRng::new(13, 1)).unwrap();
        assert_eq!(o.subset, single);
    }

    #[test]
    fn kernel_reduces_at_r1() {
        let g = table();
        let k = BoundaryKernel::new(3, 1.0, g).unwrap();
        assert_eq!(k.boundary_size(), 1);
        assert!((k.default_c_check(3) - 4.0 * (g.g0().mid() + 1.0)).abs() < 1e-12);
        let u = SiteSet::new(3, [p(&[0, 0, 0]), p(&[3, 0, 0])]).unwrap();
        assert!((k.gram(&u) - gram_sum(&u, g)).abs() < 1e-12);
    }

    #[test]
    fn keep_probability_r1_matches_escape_convention() {
        // far-separated points: both rules keep with probability ≈ escape from a point,
        // but leaving B_2 first drops the one-step returns
        let c = far_grid(4, 30);
        let kp = keep_probabilities(&c, 1.0, 4000, 4.0 * c.diameter(), &StepRng::new(14, 0)).unwrap();
        for v in kp {
            assert!(v > 0.6595 && v < 0.9, "{v}");
        }
    }

    #[test]
    fn keep_ratios_bounded() {
        let c = far_grid(2, 40);
        let rows = keep_ratios(&c, 2.0, 400, 4.0 * c.diameter(), &StepRng::new(15, 0)).unwrap();
        for row in rows {
            assert!(row.ratio > 0.1 && row.ratio < 10.0, "{row:?}");
        }
    }

    #[test]
    fn calibration_report() {
        let g = table();
        let corpus = vec![
            (SiteSet::singleton(Point::origin(3)), 2.0),
            (far_grid(6, 6), 1.0),
            (SiteSet::new(3, [p(&[0, 0, 0]), p(&[20, 0, 0])]).unwrap(), 2.0),
        ];
        let cfg = ExtractionConfig::new(40.0);
        let rep = alpha_calibration(&corpus, 3, g, &cfg, &StepRng::new(16, 0)).unwrap();
        assert_eq!(rep.rows.len(), 3);
        assert!(rep.inf_ratio_i.unwrap() > 0.0 && rep.inf_ratio_ii.unwrap() > 0.0);
        assert!(rep.min_greedy_ratio.unwrap() > 0.0 && rep.min_greedy_ratio.unwrap() <= 1.0 + 1e-12);
    }
}
