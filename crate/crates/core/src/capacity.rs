//! Capacity of finite sets: equilibrium solve, variational minimisation and
//! Monte Carlo escape counts.
//!
//! Every method returns the unnormalised equilibrium measure
//! `e(x) = P_x(H⁺_Λ = ∞)`, so `cap(Λ) = Σ_x e(x)`.

use crate::error::{Error, Result};
use crate::escape::{escapes_from, HitSet};
use crate::green::GreenTable;
use crate::interval::Interval;
use crate::lattice::{ball_union, Point, SiteSet};
use crate::linalg::{conjugate_gradient, Cholesky, DenseMatrix};
use crate::rng::StepRng;
use crate::scalar::Scalar;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest set solved by dense factorisation; larger sets go through CG.
pub const DENSE_MAX: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactSolve,
    Variational,
    MonteCarlo,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Meta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duality_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walkers_per_site: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_radius: Option<f64>,
    /// Bound on the return probability of a walker stopped at the escape sphere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub return_bound: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityResult<T> {
    pub value: T,
    pub sites: SiteSet,
    /// Unnormalised equilibrium measure, aligned with `sites`.
    pub equilibrium: Vec<T>,
    pub method: Method,
    /// Enclosure of the capacity. For Monte Carlo this brackets the expected
    /// estimate, not the sampling error.
    pub interval: Interval<T>,
    /// Binomial standard error (Monte Carlo only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    pub meta: Meta,
}

impl<T: Scalar> CapacityResult<T> {
    fn trivial(sites: &SiteSet, method: Method) -> Self {
        Self {
            value: T::zero(),
            sites: sites.clone(),
            equilibrium: Vec::new(),
            method,
            interval: Interval::point(T::zero()),
            std_error: None,
            meta: Meta::default(),
        }
    }

    /// `e(x)` for `x` in the set.
    pub fn escape_probability(&self, x: &Point) -> Option<T> {
        self.sites.index_of(x).and_then(|i| self.equilibrium.get(i).copied())
    }

    /// The normalised equilibrium measure `e / cap`.
    pub fn normalized(&self) -> Vec<T> {
        self.equilibrium.iter().map(|&e| e / self.value).collect()
    }
}

fn gram<T: Scalar>(sites: &SiteSet, g: &GreenTable) -> DenseMatrix<T> {
    let pts = sites.as_slice();
    DenseMatrix::from_fn(pts.len(), |i, j| T::of(g.between(&pts[i], &pts[j])))
}

fn negativity_tol<T: Scalar>() -> T {
    T::epsilon().sqrt()
}

/// `cap(Λ)` from the equilibrium equations `Σ_y G(x − y) e(y) = 1`, `x ∈ Λ`.
pub fn cap_exact<T: Scalar>(sites: &SiteSet, g: &GreenTable) -> Result<CapacityResult<T>> {
    check_table(sites, g)?;
    let n = sites.len();
    if n == 0 {
        return Ok(CapacityResult::trivial(sites, Method::ExactSolve));
    }
    if n == 1 {
        let g0 = g.g0();
        let inv = g0.recip();
        let v = T::of(1.0 / g0.mid());
        return Ok(CapacityResult {
            value: v,
            sites: sites.clone(),
            equilibrium: vec![v],
            method: Method::ExactSolve,
            interval: inv.cast(),
            std_error: None,
            meta: Meta {
                condition: Some(1.0),
                ..Meta::default()
            },
        });
    }

    let pts = sites.as_slice();
    let ones = vec![T::one(); n];
    let (mut e, condition, iterations) = if n <= DENSE_MAX {
        let a = gram::<T>(sites, g);
        let chol = Cholesky::factor(&a)?;
        let cond = chol.condition_estimate();
        if cond * T::epsilon().to_f64_lossy() > 1e-3 {
            return Err(Error::IllConditioned { condition: cond });
        }
        (chol.solve(&ones), cond, None)
    } else {
        let apply = |x: &[T], out: &mut [T]| {
            out.par_iter_mut().enumerate().for_each(|(i, o)| {
                *o = pts
                    .iter()
                    .zip(x)
                    .map(|(q, &v)| T::of(g.between(&pts[i], q)) * v)
                    .sum();
            });
        };
        let tol = (T::epsilon().to_f64_lossy()).sqrt() * 1e-3;
        let (x, it) = conjugate_gradient(apply, &ones, tol, 10 * n)?;
        (x, f64::NAN, Some(it))
    };

    let mut tol = negativity_tol::<T>();
    let r = g.exact_radius() as f64;
    if sites.diameter() > r {
        // far-field entries are only accurate to a relative spread
        let emax = e.iter().copied().fold(T::zero(), T::max);
        tol = tol + T::of(g.far_field_rel_error()) * emax;
    }
    for (i, v) in e.iter_mut().enumerate() {
        if *v < -tol {
            return Err(Error::NegativeEquilibrium {
                site: pts[i].to_string(),
                value: v.to_f64_lossy(),
                tol: tol.to_f64_lossy(),
            });
        }
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    let value: T = e.iter().copied().sum();

    // first-order perturbation of 1ᵀG⁻¹1 from the Green intervals, plus the
    // residual of the solve
    let ef: Vec<f64> = e.iter().map(|v| v.to_f64_lossy()).collect();
    let (pert, resid): (f64, f64) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut p = 0.0;
            let mut row = 0.0;
            for j in 0..n {
                let gi = g.green_interval(&(pts[i] - pts[j]));
                p += ef[i] * ef[j] * gi.rad();
                row += gi.mid() * ef[j];
            }
            (p, (1.0 - row).abs())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1.max(b.1)));
    let sum_e: f64 = ef.iter().sum();
    let rad = 1.1 * pert + 1.01 * resid * sum_e + 4.0 * T::epsilon().to_f64_lossy() * sum_e;
    Ok(CapacityResult {
        value,
        sites: sites.clone(),
        equilibrium: e,
        method: Method::ExactSolve,
        interval: Interval::around(T::of(sum_e), T::of(rad)),
        std_error: None,
        meta: Meta {
            condition: condition.is_finite().then_some(condition),
            iterations,
            ..Meta::default()
        },
    })
}

fn check_table(sites: &SiteSet, g: &GreenTable) -> Result<()> {
    if !sites.is_empty() && sites.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: sites.dim(),
        });
    }
    Ok(())
}

/// Minimises `μᵀGμ` over probability measures on Λ by pairwise conditional
/// gradient with exact line search, starting from the uniform measure.
/// `1/cap` lies in `[f − gap, f]` where `gap` is the Frank-Wolfe duality gap.
pub fn cap_variational<T: Scalar>(
    sites: &SiteSet,
    g: &GreenTable,
    iters: usize,
) -> Result<CapacityResult<T>> {
    check_table(sites, g)?;
    if iters == 0 {
        return Err(Error::InvalidArgument("variational solve needs at least one iteration".into()));
    }
    let n = sites.len();
    if n == 0 {
        return Ok(CapacityResult::trivial(sites, Method::Variational));
    }
    let a = gram::<T>(sites, g);
    let mut mu = vec![T::one() / T::of_usize(n); n];
    let mut h = a.matvec(&mu);
    let mut f: T = mu.iter().zip(&h).map(|(&m, &v)| m * v).sum();
    let two = T::of(2.0);
    let stop = T::of(1e-13);
    let mut done = 0;
    let mut gap = T::zero();
    for it in 0..iters {
        let (mut imin, mut jmax) = (0, usize::MAX);
        for k in 0..n {
            if h[k] < h[imin] {
                imin = k;
            }
            if mu[k] > T::zero() && (jmax == usize::MAX || h[k] > h[jmax]) {
                jmax = k;
            }
        }
        gap = two * (f - h[imin]);
        done = it;
        if gap <= stop * f || imin == jmax {
            break;
        }
        let curv = a.get(imin, imin) + a.get(jmax, jmax) - two * a.get(imin, jmax);
        let slope = h[jmax] - h[imin];
        if !(curv > T::zero()) || !(slope > T::zero()) {
            break;
        }
        let step = (slope / curv).min(mu[jmax]);
        mu[imin] = mu[imin] + step;
        mu[jmax] = mu[jmax] - step;
        if mu[jmax] < T::epsilon() * T::of(1e-3) {
            mu[jmax] = T::zero();
        }
        let (ri, rj) = (a.row(imin), a.row(jmax));
        for k in 0..n {
            h[k] = h[k] + step * (ri[k] - rj[k]);
        }
        let new_f: T = mu.iter().zip(&h).map(|(&m, &v)| m * v).sum();
        // exact line search never increases the objective; guard rounding
        f = new_f.min(f);
        done = it + 1;
    }
    let hmin = h.iter().copied().fold(T::infinity(), T::min);
    gap = gap.max(two * (f - hmin)).max(T::zero());
    let value = T::one() / f;
    let lower_f = f - gap;
    let hi = if lower_f > T::zero() { T::one() / lower_f } else { T::infinity() };
    let interval = Interval::new(value * (T::one() - T::epsilon() * T::of(8.0)), hi);
    Ok(CapacityResult {
        value,
        sites: sites.clone(),
        equilibrium: mu.iter().map(|&m| m * value).collect(),
        method: Method::Variational,
        interval,
        std_error: None,
        meta: Meta {
            iterations: Some(done),
            duality_gap: Some(gap.to_f64_lossy()),
            ..Meta::default()
        },
    })
}

/// Parameters of [`cap_monte_carlo`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub walkers_per_site: u64,
    /// Distance beyond the set's bounding sphere at which a walker counts as escaped.
    pub escape_radius: f64,
    /// Known upper bound on `cap(Λ)` for the return bracket; `|Λ|/G(0)` if absent.
    pub cap_upper: Option<f64>,
}

/// Walkers per RNG substream; fixes the work split independently of threads.
const BLOCK: u64 = 4096;

/// Monte Carlo estimate of `cap(Λ) = Σ_x P_x(H⁺_Λ = ∞)`.
///
/// A walker that reaches distance `escape_radius` from every site counts as
/// escaped in the upper estimate. It still returns with probability at most
/// `β = max_{|v| ≥ R} G(v) · cap(Λ)`, so the lower estimate discounts escapes by
/// `1 − β`.
pub fn cap_monte_carlo(
    sites: &SiteSet,
    cfg: &McConfig,
    g: &GreenTable,
    rng: &StepRng,
) -> Result<CapacityResult<f64>> {
    check_table(sites, g)?;
    let n = sites.len();
    if n == 0 {
        return Ok(CapacityResult::trivial(sites, Method::MonteCarlo));
    }
    if cfg.walkers_per_site == 0 {
        return Err(Error::InvalidArgument("need at least one walker per site".into()));
    }
    let diam = sites.diameter();
    if !(cfg.escape_radius >= 4.0 * diam) || !(cfg.escape_radius >= 1.0) {
        return Err(Error::Precondition(format!(
            "escape radius {} is below 4 x diameter = {}",
            cfg.escape_radius,
            4.0 * diam
        )));
    }
    let hs = HitSet::new(sites);
    let escape = cfg.escape_radius + hs.radius();
    let blocks = cfg.walkers_per_site.div_ceil(BLOCK);
    let tasks: Vec<(usize, u64)> = (0..n).flat_map(|i| (0..blocks).map(move |b| (i, b))).collect();
    let pts = sites.as_slice();
    let counts: Vec<u64> = tasks
        .par_iter()
        .map(|&(i, b)| {
            let mut r = rng.substream(i as u64).substream(b);
            let todo = BLOCK.min(cfg.walkers_per_site - b * BLOCK);
            (0..todo).filter(|_| escapes_from(&hs, &pts[i], escape, &mut r)).count() as u64
        })
        .collect();
    let mut per_site = vec![0u64; n];
    for (&(i, _), c) in tasks.iter().zip(&counts) {
        per_site[i] += c;
    }
    let w = cfg.walkers_per_site as f64;
    let p: Vec<f64> = per_site.iter().map(|&c| c as f64 / w).collect();
    let upper: f64 = p.iter().sum();
    let var: f64 = p.iter().map(|&q| q * (1.0 - q) / w).sum();
    let cap_hi = cfg.cap_upper.unwrap_or(n as f64 / g.g0().lo);
    let beta = (g.tail_constant(cfg.escape_radius) * cfg.escape_radius.powf(2.0 - g.dim() as f64) * cap_hi)
        .min(1.0);
    let lower = upper * (1.0 - beta);
    Ok(CapacityResult {
        value: 0.5 * (upper + lower),
        sites: sites.clone(),
        equilibrium: p.iter().map(|q| q * (1.0 - 0.5 * beta)).collect(),
        method: Method::MonteCarlo,
        interval: Interval::new(lower, upper),
        std_error: Some(var.sqrt()),
        meta: Meta {
            walkers_per_site: Some(cfg.walkers_per_site),
            escape_radius: Some(cfg.escape_radius),
            return_bound: Some(beta),
            ..Meta::default()
        },
    })
}

/// Ratios of the capacity bounds for one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsRow {
    pub label: String,
    pub size: usize,
    /// `cap(Λ)/|Λ|^{1−2/d}`.
    pub volume_ratio: f64,
    /// `cap(B_r(C))/(r^{d−2}|C|^{1−2/d})`, when a radius was given.
    pub balls_lower_ratio: Option<f64>,
    /// `cap(B_r(C))/(r^{d−2} cap(C))`, when a radius was given.
    pub balls_upper_ratio: Option<f64>,
}

/// Running record of bound ratios; the extremes stand in for the constants
/// `a` (lower bounds) and `A` (upper bound).
#[derive(Clone, Debug, Default, Serialize)]
pub struct CalibrationLedger {
    pub rows: Vec<BoundsRow>,
    pub a_min: Option<f64>,
    pub a_balls_min: Option<f64>,
    pub big_a_max: Option<f64>,
}

impl CalibrationLedger {
    fn push(&mut self, row: BoundsRow) {
        let upd_min = |slot: &mut Option<f64>, v: f64| *slot = Some(slot.map_or(v, |s| s.min(v)));
        upd_min(&mut self.a_min, row.volume_ratio);
        if let Some(v) = row.balls_lower_ratio {
            upd_min(&mut self.a_balls_min, v);
        }
        if let Some(v) = row.balls_upper_ratio {
            self.big_a_max = Some(self.big_a_max.map_or(v, |s| s.max(v)));
        }
        self.rows.push(row);
    }
}

/// Computes the capacity-bound ratios for `Λ` (and for `B_r(Λ)` when `r` is
/// given, with `Λ` playing the role of the centre set) and records them.
pub fn check_capacity_bounds(
    label: &str,
    centers: &SiteSet,
    r: Option<f64>,
    g: &GreenTable,
    ledger: &mut CalibrationLedger,
) -> Result<BoundsRow> {
    if centers.is_empty() {
        return Err(Error::EmptySet);
    }
    let d = centers.dim() as f64;
    let expo = 1.0 - 2.0 / d;
    let c = cap_exact::<f64>(centers, g)?.value;
    let nc = centers.len() as f64;
    let (lower, upper) = match r {
        Some(r) => {
            let b = ball_union(centers, r)?;
            let cb = cap_exact::<f64>(&b, g)?.value;
            let scale = r.powf(d - 2.0);
            (Some(cb / (scale * nc.powf(expo))), Some(cb / (scale * c)))
        }
        None => (None, None),
    };
    let row = BoundsRow {
        label: label.to_string(),
        size: centers.len(),
        volume_ratio: c / nc.powf(expo),
        balls_lower_ratio: lower,
        balls_upper_ratio: upper,
    };
    ledger.push(row.clone());
    Ok(row)
}
