//! Acceptance criteria, one test per criterion. Each test writes a single
//! `PASS <n>` or `FAIL <n>` line followed by indented diagnostics, then
//! asserts the verdict.

use latcap::capacity::{cap_exact, cap_monte_carlo, cap_variational, McConfig};
use latcap::extraction::{self, alpha_calibration, extract_r1, greedy_separate, is_separated, ExtractionConfig};
use latcap::lattice::{ball, ball_union, cube};
use latcap::oracle;
use latcap::stats::{least_squares, Proportion};
use latcap::walks::{self, ExcursionScenario, ScenarioConstants};
use latcap::{GreenConfig, GreenTable, Point, SiteSet, StepRng};
use rand::Rng;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

// Tolerances and sample sizes.
const GREEN_IDENTITY_TOL: f64 = 1e-6;
const GREEN_RUNTIME: Duration = Duration::from_secs(60);
const CAP_SETS: usize = 50;
const CAP_MAX_SIZE: usize = 30;
const CAP_SET_RADIUS: f64 = 4.0;
const VARIATIONAL_TOL: f64 = 1e-4;
const MC_WALKERS: u64 = 100_000;
const MC_SIGMAS: f64 = 3.0;
const CAP_RUNTIME: Duration = Duration::from_secs(600);
const SWEEP_MAX_TOTAL: u32 = 6;
const SINGLE_SITE_TOL: f64 = 1e-6;
const R1_RUNS: usize = 500;
const R1_POINTS: usize = 50;
const R1_SPACING: i32 = 12;
const R1_SUCCESS_FLOOR: f64 = 5.0 / 12.0 - 0.05;
const CORPUS_SIZE: usize = 100;
const ALPHA_TRIALS: usize = 3;
/// Recorded lower constants for the two extraction ratios.
const ALPHA_I_FLOOR: f64 = 0.25;
const ALPHA_II_FLOOR: f64 = 0.05;
/// Recorded stand-in for the separation constant; must exceed `SEPARATION_MIN`.
const SEPARATION_C_HAT: f64 = 0.2;
const SEPARATION_MIN: f64 = 0.05;
const FOLD_R2_MIN: f64 = 0.8;
const FOLD_B_MIN: f64 = 0.5 - 0.1;
const FOLD_DIAG_TRIALS: u64 = 1000;

const SEED: u64 = 20_240_601;

fn table() -> &'static GreenTable {
    static T: OnceLock<GreenTable> = OnceLock::new();
    T.get_or_init(|| GreenTable::build(&GreenConfig::default()).unwrap())
}

/// Bypasses libtest's capture so the verdict lines always reach the log.
fn report(id: u32, pass: bool, headline: &str, details: &[String]) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{} {id}: {headline}", if pass { "PASS" } else { "FAIL" });
    for d in details {
        let _ = writeln!(out, "    {d}");
    }
    let _ = out.flush();
}

fn p(c: &[i32]) -> Point {
    Point::new(c).unwrap()
}

/// `G(0)` for `d = 3` in closed form through Gamma values.
fn watson_g0() -> f64 {
    use statrs::function::gamma::gamma;
    use std::f64::consts::PI;
    6f64.sqrt() / (32.0 * PI.powi(3)) * gamma(1.0 / 24.0) * gamma(5.0 / 24.0) * gamma(7.0 / 24.0) * gamma(11.0 / 24.0)
}

#[test]
fn criterion_1_green_identities() {
    let started = Instant::now();
    let g = GreenTable::build(&GreenConfig::default()).unwrap();
    let g0 = g.green_exact(&Point::origin(3), 1e-9).unwrap();
    let ge1 = g.green_exact(&p(&[1, 0, 0]), 1e-9).unwrap();
    let elapsed = started.elapsed();
    let identity = (g0.mid() - 1.0 - ge1.mid()).abs();
    let watson = watson_g0();
    let pass = identity <= GREEN_IDENTITY_TOL && g0.contains(watson) && elapsed < GREEN_RUNTIME;
    report(
        1,
        pass,
        &format!("|G(0) - 1 - G(e1)| = {identity:.3e}, Watson value inside G(0) bracket: {}", g0.contains(watson)),
        &[
            format!("G(0) in [{:.15}, {:.15}], Watson {watson:.15}", g0.lo, g0.hi),
            format!("G(e1) in [{:.15}, {:.15}]", ge1.lo, ge1.hi),
            format!("table build and lookups {:.2?} (limit {GREEN_RUNTIME:?})", elapsed),
        ],
    );
    assert!(pass);
}

fn random_set(rng: &mut StepRng) -> SiteSet {
    let size = rng.random_range(1..=CAP_MAX_SIZE);
    let h = CAP_SET_RADIUS as i32;
    let mut pts = Vec::new();
    while pts.len() < size {
        let q = p(&[rng.random_range(-h..=h), rng.random_range(-h..=h), rng.random_range(-h..=h)]);
        if q.norm() <= CAP_SET_RADIUS && !pts.contains(&q) {
            pts.push(q);
        }
    }
    SiteSet::new(3, pts).unwrap()
}

#[test]
fn criterion_2_capacity_agreement() {
    let g = table();
    let started = Instant::now();
    let mut rng = StepRng::new(SEED, 2);
    let mut worst_var: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    let mut worst_mid: f64 = 0.0;
    let mut worst_width: f64 = 0.0;
    let mut failures = Vec::new();
    for k in 0..CAP_SETS {
        let s = random_set(&mut rng);
        let exact = cap_exact::<f64>(&s, g).unwrap();
        let var = cap_variational::<f64>(&s, g, 20_000).unwrap();
        let dv = (var.value - exact.value).abs();
        let mc = cap_monte_carlo(
            &s,
            &McConfig {
                walkers_per_site: MC_WALKERS,
                escape_radius: (4.0 * s.diameter()).max(8.0),
                cap_upper: None,
            },
            g,
            &StepRng::new(SEED, 1000 + k as u64),
        )
        .unwrap();
        let sigma = mc.std_error.unwrap();
        // distance from the exact value to the Monte Carlo bracket, in sigmas
        let gap = (mc.interval.lo - exact.value).max(exact.value - mc.interval.hi).max(0.0);
        let z = gap / sigma.max(f64::MIN_POSITIVE);
        worst_var = worst_var.max(dv);
        worst_z = worst_z.max(z);
        worst_mid = worst_mid.max((mc.value - exact.value).abs() / sigma);
        worst_width = worst_width.max(mc.interval.width() / exact.value);
        if dv > VARIATIONAL_TOL || z > MC_SIGMAS {
            failures.push(format!(
                "set {k} (|L| = {}): exact {:.6} variational {:.6} mc [{:.6}, {:.6}] sigma {sigma:.2e}",
                s.len(),
                exact.value,
                var.value,
                mc.interval.lo,
                mc.interval.hi
            ));
        }
    }
    let elapsed = started.elapsed();
    let pass = failures.is_empty() && elapsed < CAP_RUNTIME;
    let mut details = vec![
        format!("max |variational - exact| = {worst_var:.3e} (tol {VARIATIONAL_TOL:.0e})"),
        format!("max distance of exact value outside the MC bracket = {worst_z:.2} sigma (tol {MC_SIGMAS})"),
        format!("max |mc midpoint - exact| = {worst_mid:.2} sigma, max relative MC bracket width {worst_width:.4}"),
        format!("runtime {elapsed:.1?} (limit {CAP_RUNTIME:?})"),
    ];
    details.extend(failures);
    report(2, pass, &format!("{CAP_SETS} random sets, three capacity routes agree"), &details);
    assert!(pass);
}

#[test]
fn criterion_3_covering_bound_certified() {
    let g = table();
    let e1 = p(&[1, 0, 0]);
    let e2 = p(&[0, 1, 0]);
    let base = SiteSet::new(3, [Point::origin(3), e1, e2, p(&[1, 1, 0])]).unwrap();
    let reports = oracle::sweep(&base, SWEEP_MAX_TOTAL, g).unwrap();
    let product_fail = reports.iter().filter(|r| !r.product_pass).count();
    let capacity_fail = reports.iter().filter(|r| r.capacity_pass == Some(false)).count();
    let exp_fail = reports.iter().filter(|r| !r.exp_inequality).count();
    let origin = SiteSet::singleton(Point::origin(3));
    let mut eq_gap: f64 = 0.0;
    let mut eq_count = 0;
    let mut off_origin: Vec<String> = Vec::new();
    for r in reports.iter().filter(|r| r.sites.len() == 1 && r.thresholds[0] >= 1) {
        let gap = (r.exact.mid() - r.product_bound.mid()).abs();
        if r.sites == origin {
            eq_gap = eq_gap.max(gap);
            eq_count += 1;
        } else if r.thresholds[0] == 1 {
            off_origin.push(format!("{:?}: bound - exact = {gap:.4}", r.sites.as_slice()[0].coords()));
        }
    }
    let pass = product_fail == 0 && capacity_fail == 0 && exp_fail == 0 && eq_gap <= SINGLE_SITE_TOL && eq_count > 0;
    let mut details = vec![
        format!("product bound failures {product_fail}, capacity bound failures {capacity_fail}, q <= exp(-escape) failures {exp_fail}"),
        format!("single-site equality on {{0}}: {eq_count} instances, max gap {eq_gap:.3e} (tol {SINGLE_SITE_TOL:.0e})"),
        "single sites off the origin (start outside the set, not an equality case, n = 1):".to_string(),
    ];
    details.extend(off_origin.into_iter().map(|s| format!("  {s}")));
    report(
        3,
        pass,
        &format!("{} instances over subsets of {{0, e1, e2, e1+e2}}, totals <= {SWEEP_MAX_TOTAL}", reports.len()),
        &details,
    );
    assert!(pass);
}

fn far_grid(n: usize, spacing: i32) -> SiteSet {
    let side = (n as f64).cbrt().ceil() as i32;
    let mut pts = Vec::new();
    for i in 0..side {
        for j in 0..side {
            for k in 0..side {
                if pts.len() < n {
                    pts.push(p(&[i * spacing, j * spacing, k * spacing]));
                }
            }
        }
    }
    SiteSet::new(3, pts).unwrap()
}

/// Scattered points, clusters, lines, grids and blobs with `r ∈ {1, 2, 3}`.
fn mixed_corpus(n: usize, rng: &mut StepRng) -> Vec<(SiteSet, f64)> {
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let r = [1.0, 2.0, 3.0][k % 3];
        let pts: Vec<Point> = match (k / 3) % 5 {
            0 => {
                let m = rng.random_range(2..=12);
                (0..m).map(|_| p(&[rng.random_range(-12..=12), rng.random_range(-12..=12), rng.random_range(-12..=12)])).collect()
            }
            1 => {
                let m = rng.random_range(3..=15);
                let c = [rng.random_range(-8..=8), 0, 0];
                (0..m).map(|_| p(&[c[0] + rng.random_range(-3..=3), rng.random_range(-3..=3), rng.random_range(-3..=3)])).collect()
            }
            2 => {
                let m = rng.random_range(3..=20);
                let step = rng.random_range(1..=5);
                (0..m).map(|i| p(&[i * step - 20, 0, 0])).collect()
            }
            3 => {
                let step = rng.random_range(2..=6);
                let side = rng.random_range(2..=3);
                let mut v = Vec::new();
                for i in 0..side {
                    for j in 0..side {
                        for l in 0..side {
                            v.push(p(&[i * step, j * step, l * step]));
                        }
                    }
                }
                v
            }
            _ => {
                let rad = rng.random_range(1.5..4.0);
                ball(&Point::origin(3), rad).unwrap().iter().copied().collect()
            }
        };
        out.push((SiteSet::new(3, pts).unwrap(), r));
    }
    out
}

#[test]
fn criterion_4_extraction_guarantees() {
    let g = table();
    let lam = far_grid(R1_POINTS, R1_SPACING);
    let cap = cap_exact::<f64>(&lam, g).unwrap().value;
    let mut cfg = ExtractionConfig::new(4.0 * lam.diameter());
    cfg.retries = 64;
    let mut first_draw = 0u64;
    let mut uniform_fail = 0;
    let mut retry_fail = 0;
    for run in 0..R1_RUNS {
        match extract_r1(&lam, g, &cfg, &StepRng::new(SEED, 4).substream(run as u64)) {
            Ok(o) => {
                first_draw += (o.draws == 1) as u64;
                uniform_fail += (o.uniform_bound_ok != Some(true)) as usize;
            }
            Err(_) => retry_fail += 1,
        }
    }
    let freq = Proportion::new(first_draw, R1_RUNS as u64);
    let r1_pass = cap > 16.0 && freq.ci.0 >= R1_SUCCESS_FLOOR && uniform_fail == 0 && retry_fail == 0;

    let corpus = mixed_corpus(CORPUS_SIZE, &mut StepRng::new(SEED, 40));
    let mut acfg = ExtractionConfig::new(8.0);
    acfg.retries = 64;
    let rep = alpha_calibration(&corpus, ALPHA_TRIALS, g, &acfg, &StepRng::new(SEED, 41)).unwrap();
    let errors: Vec<String> = rep
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("instance {}: {e}", r.index)))
        .collect();
    let failures: usize = rep.rows.iter().map(|r| r.failures).sum();
    let (ri, rii) = (rep.inf_ratio_i.unwrap_or(0.0), rep.inf_ratio_ii.unwrap_or(0.0));
    let alpha_pass = errors.is_empty() && ri >= ALPHA_I_FLOOR && rii >= ALPHA_II_FLOOR;
    let pass = r1_pass && alpha_pass;
    let mut details = vec![
        format!("r = 1: {R1_POINTS} points at spacing {R1_SPACING}, cap = {cap:.4}"),
        format!(
            "first-draw success {}/{} = {:.4}, 99% CI [{:.4}, {:.4}], floor {R1_SUCCESS_FLOOR:.4}",
            freq.successes, freq.trials, freq.estimate, freq.ci.0, freq.ci.1
        ),
        format!("uniform lower bound violations {uniform_fail}, retry-limit failures {retry_fail}"),
        format!(
            "mixed corpus of {}: inf ratio (i) = {ri:.4} (floor {ALPHA_I_FLOOR}), inf ratio (ii) = {rii:.4} (floor {ALPHA_II_FLOOR})",
            corpus.len()
        ),
        format!("extractions hitting the retry limit: {failures} of {}", corpus.len() * ALPHA_TRIALS),
    ];
    details.extend(errors);
    report(4, pass, "extraction success frequency and ratio floors", &details);
    assert!(pass);
}

#[test]
fn criterion_5_greedy_separation() {
    let g = table();
    let corpus = mixed_corpus(CORPUS_SIZE, &mut StepRng::new(SEED, 40));
    let mut not_separated = 0;
    let mut not_maximal = 0;
    let mut min_ratio = f64::INFINITY;
    let mut worst = 0;
    for (k, (c, r)) in corpus.iter().enumerate() {
        let s = greedy_separate(c, *r).unwrap();
        not_separated += is_separated(&s, *r).is_some() as usize;
        let maximal = c
            .iter()
            .filter(|x| !s.contains(x))
            .all(|x| s.iter().any(|y| (x.dist2(y) as f64) < 16.0 * r * r));
        not_maximal += !maximal as usize;
        let full = cap_exact::<f64>(&ball_union(c, *r).unwrap(), g).unwrap().value;
        let part = cap_exact::<f64>(&ball_union(&s, *r).unwrap(), g).unwrap().value;
        if part / full < min_ratio {
            min_ratio = part / full;
            worst = k;
        }
    }
    let pass = not_separated == 0 && not_maximal == 0 && min_ratio >= SEPARATION_C_HAT && SEPARATION_C_HAT > SEPARATION_MIN;
    report(
        5,
        pass,
        &format!("greedy 4r-separation on {} instances", corpus.len()),
        &[
            format!("not separated {not_separated}, not maximal {not_maximal}"),
            format!(
                "min cap(B_r(C'))/cap(B_r(C)) = {min_ratio:.4} at instance {worst}, recorded c = {SEPARATION_C_HAT} (> {SEPARATION_MIN})"
            ),
        ],
    );
    assert!(pass);
}

#[test]
fn criterion_6_folding_exponents() {
    let dim = 3;
    let constants = ScenarioConstants::default();
    let mut cells = Vec::new();
    for rho in [0.05, 0.1, 0.2] {
        for r in [2u32, 4] {
            for l in [4u32, 8] {
                cells.push(ExcursionScenario {
                    dim,
                    l,
                    r,
                    rho,
                    constants,
                });
            }
        }
    }
    let admissible: Vec<&ExcursionScenario> =
        cells.iter().filter(|s| s.rho * (s.r as f64).powi(dim as i32 - 2) >= 1.0).collect();
    let max_lhs = cells.iter().map(|s| s.rho * (s.r as f64).powi(dim as i32 - 2)).fold(0.0, f64::max);

    // the grid has no admissible cell; run every cell in report mode so the log
    // shows what the fit and the event-B frequency look like at desk scale
    let mut details = vec![format!(
        "admissible cells: {} of {} (max rho r^(d-2) = {max_lhs})",
        admissible.len(),
        cells.len()
    )];
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut min_b: f64 = 1.0;
    for (k, s) in cells.iter().enumerate() {
        let n = s.min_steps().max(s.big_t());
        let rep = walks::localization_scenario(s, n, FOLD_DIAG_TRIALS, false, &StepRng::new(SEED, 600 + k as u64)).unwrap();
        min_b = min_b.min(rep.event_b_excursions.estimate);
        if let Some(e) = rep.exponent {
            xs.push(rep.scale);
            ys.push(e * rep.scale);
        }
        details.push(format!(
            "rho {:<4} r {} L {}: n {n:>6}  P(|C~| >= L) = {:.4}  -log P = {:>7.4}  scale {:.4}  B freq {:.3}",
            s.rho,
            s.r,
            s.l,
            rep.target.estimate,
            rep.exponent.map_or(f64::INFINITY, |e| e * rep.scale) + 0.0,
            rep.scale,
            rep.event_b_excursions.estimate
        ));
    }
    let fit = least_squares(&xs, &ys);
    let spread = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ys.iter().copied().fold(f64::INFINITY, f64::min);
    // a constant response gives no information about the slope
    let fit = fit.filter(|_| spread > 0.0);
    details.push(match &fit {
        Some(f) => format!(
            "fit over all cells ({FOLD_DIAG_TRIALS} trials/cell): slope {:.4}, R^2 = {:.4} (needs {FOLD_R2_MIN})",
            f.slope, f.r_squared
        ),
        None => format!("fit over all cells ({FOLD_DIAG_TRIALS} trials/cell): -log P is constant across cells, no fit"),
    });
    details.push(format!("min direct event-B frequency {min_b:.3} (needs {FOLD_B_MIN})"));
    let fit_ok = fit.as_ref().is_some_and(|f| f.r_squared >= FOLD_R2_MIN);
    let pass = !admissible.is_empty() && fit_ok && min_b >= FOLD_B_MIN;
    let headline = if admissible.is_empty() {
        "no grid cell satisfies rho r^(d-2) >= 1, the scaling claim cannot be tested on this grid".to_string()
    } else {
        "linear scaling of -log P in rho r^(d-2) L^(1-2/d)".to_string()
    };
    report(6, pass, &headline, &details);
    assert!(pass);
}

fn tube(w: u32, len: u32) -> SiteSet {
    let mut pts = Vec::new();
    for i in 0..len as i32 {
        for j in 0..w as i32 {
            for k in 0..w as i32 {
                pts.push(p(&[i, j, k]));
            }
        }
    }
    SiteSet::new(3, pts).unwrap()
}

#[test]
fn criterion_7_balls_minimize_shape_statistic() {
    let g = table();
    let mut corpus: Vec<(String, &str, SiteSet)> = Vec::new();
    for rad in [1.5, 2.0, 3.0, 4.0, 5.0] {
        corpus.push((format!("ball r={rad}"), "ball", ball(&Point::origin(3), rad).unwrap()));
    }
    for side in [3u32, 4, 6, 8] {
        corpus.push((format!("cube side {side}"), "cube", cube(&Point::origin(3), side).unwrap()));
    }
    for (w, len) in [(1, 30), (2, 20), (3, 15), (2, 60)] {
        corpus.push((format!("tube {w}x{w}x{len}"), "tube", tube(w, len)));
    }
    let mut rng = StepRng::new(SEED, 7);
    for (m, spread) in [(6, 12), (10, 15), (4, 8), (12, 20)] {
        let centers = SiteSet::new(
            3,
            (0..m).map(|_| p(&[rng.random_range(-spread..=spread), rng.random_range(-spread..=spread), rng.random_range(-spread..=spread)])),
        )
        .unwrap();
        corpus.push((format!("union of {m} balls r=2 in [-{spread},{spread}]^3"), "scattered", ball_union(&centers, 2.0).unwrap()));
    }
    let mut rows: Vec<(String, &str, usize, f64)> = corpus
        .iter()
        .map(|(name, kind, v)| (name.clone(), *kind, v.len(), walks::shape_statistic_of(v, g).unwrap()))
        .collect();
    rows.sort_by(|a, b| a.3.total_cmp(&b.3));
    let min_ball = rows.iter().filter(|r| r.1 == "ball").map(|r| r.3).fold(f64::INFINITY, f64::min);
    let min_other = rows.iter().filter(|r| r.1 != "ball").map(|r| r.3).fold(f64::INFINITY, f64::min);
    let pass = min_ball <= min_other;
    let mut details: Vec<String> = rows
        .iter()
        .map(|(name, _, size, s)| format!("{s:.4}  |V| = {size:>4}  {name}"))
        .collect();
    for (name, kind, v) in corpus.iter().filter(|c| c.1 == "ball") {
        if let Some(twin) = corpus.iter().find(|c| c.1 != *kind && c.2 == *v) {
            details.push(format!("{name} is the same site set as {}", twin.0));
        }
    }
    report(
        7,
        pass,
        &format!("min over balls {min_ball:.4} vs min over other shapes {min_other:.4}"),
        &details,
    );
    assert!(pass);
}

fn summaries() -> String {
    let g = table();
    let set = SiteSet::new(3, [Point::origin(3), p(&[1, 0, 0]), p(&[0, 2, 0])]).unwrap();
    let mc = cap_monte_carlo(
        &set,
        &McConfig {
            walkers_per_site: 20_000,
            escape_radius: 12.0,
            cap_upper: None,
        },
        g,
        &StepRng::new(SEED, 80),
    )
    .unwrap();
    let cover = walks::covering_probability_mc(&set, &[1, 1, 1], 20_000, u64::MAX, 30.0, g, &StepRng::new(SEED, 81)).unwrap();
    let lam = far_grid(R1_POINTS, R1_SPACING);
    let r1 = extract_r1(&lam, g, &ExtractionConfig::new(4.0 * lam.diameter()), &StepRng::new(SEED, 82)).unwrap();
    let corpus = mixed_corpus(6, &mut StepRng::new(SEED, 83));
    let alpha = alpha_calibration(&corpus, 2, g, &ExtractionConfig::new(8.0), &StepRng::new(SEED, 84)).unwrap();
    let s = ExcursionScenario {
        dim: 3,
        l: 4,
        r: 2,
        rho: 0.1,
        constants: ScenarioConstants::default(),
    };
    let scen = walks::localization_scenario(&s, s.min_steps().max(s.big_t()), 3000, false, &StepRng::new(SEED, 85)).unwrap();
    let kp = extraction::keep_probabilities(&far_grid(4, 20), 2.0, 3000, 80.0, &StepRng::new(SEED, 86)).unwrap();
    serde_json::to_string(&(
        (mc.value, mc.interval, mc.std_error),
        cover,
        (r1.subset, r1.draws),
        alpha,
        scen,
        kp,
    ))
    .unwrap()
}

#[test]
fn criterion_8_thread_count_independence() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(summaries)
    };
    let one = run(1);
    let eight = run(8);
    let pass = one == eight;
    report(
        8,
        pass,
        "Monte Carlo capacity, covering, extraction, calibration and scenario summaries under 1 and 8 threads",
        &[format!("{} bytes of JSON, identical: {pass}", one.len())],
    );
    assert!(pass);
}
