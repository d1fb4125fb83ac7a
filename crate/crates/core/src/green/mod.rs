//! Green function of the simple random walk on Z^d.
//!
//! Values inside the exact radius come from the continuous-time representation
//!
//! ```text
//! G(z) = d ∫_0^∞ Π_i e^{-x} I_{z_i}(x) dx,
//! ```
//!
//! integrated by composite Gauss-Legendre on dyadic panels up to a horizon `X`,
//! with the tail past `X` integrated term by term from the large-argument
//! expansion of `I_ν`. Each value carries an interval made of the panel error
//! estimates, the tail remainder and a rounding slack. Outside the exact radius
//! the far-field form `a_d ‖z‖^{2-d}` is used, with `a_d` fitted on the outer
//! shell of the table.

pub mod cache;
pub mod dirichlet;
pub mod special;

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::lattice::{check_dim, Point, MAX_DIM};
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use special::{bessel_asymptotic_coeffs, gauss_legendre, scaled_bessel_i};

/// Bumped whenever the numerics change in a way that invalidates cached tables.
pub const BUILDER_VERSION: u32 = 1;

/// Canonical key: absolute coordinates in decreasing order, zero padded.
pub type Key = [u32; MAX_DIM];

const DEFAULT_HORIZON: f64 = 32768.0;
const MAX_HORIZON: f64 = 16_777_216.0;
const TAIL_TERMS: usize = 8;
const REL_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreenConfig {
    pub dim: usize,
    pub exact_radius: u32,
    pub tol: f64,
}

impl Default for GreenConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            exact_radius: 12,
            tol: 1e-6,
        }
    }
}

/// Green function evaluator: certified table inside `exact_radius`, far-field
/// form outside. Immutable after construction.
#[derive(Clone, Debug)]
pub struct GreenTable {
    dim: usize,
    exact_radius: u32,
    tol: f64,
    horizon: f64,
    values: FxHashMap<Key, Interval<f64>>,
    asympt_const: f64,
    asympt_range: Interval<f64>,
}

impl GreenTable {
    pub fn build(config: &GreenConfig) -> Result<Self> {
        let GreenConfig {
            dim,
            exact_radius,
            tol,
        } = *config;
        check_dim(dim)?;
        if exact_radius < 2 {
            return Err(Error::InvalidArgument(format!(
                "exact radius must be at least 2, got {exact_radius}"
            )));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
        }
        let keys = canonical_keys(dim, exact_radius);
        let mut horizon = DEFAULT_HORIZON;
        loop {
            let vals = integrate_keys(dim, &keys, horizon);
            let worst = vals.iter().map(|v| v.width()).fold(0.0, f64::max);
            if worst <= tol {
                let values: FxHashMap<Key, Interval<f64>> =
                    keys.iter().copied().zip(vals).collect();
                return Ok(Self::assemble(dim, exact_radius, tol, horizon, values));
            }
            if horizon >= MAX_HORIZON {
                return Err(Error::Truncation {
                    requested: tol,
                    achieved: worst,
                    hint: "raise the tolerance; the quadrature horizon is already maximal",
                });
            }
            horizon *= 4.0;
        }
    }

    pub(crate) fn assemble(
        dim: usize,
        exact_radius: u32,
        tol: f64,
        horizon: f64,
        values: FxHashMap<Key, Interval<f64>>,
    ) -> Self {
        let r2 = (exact_radius as i64).pow(2);
        let inner = (exact_radius as i64 - 1).pow(2);
        let (mut wsum, mut acc) = (0.0, 0.0);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let mut shell: Vec<_> = values
            .iter()
            .filter(|(k, _)| {
                let n2 = key_norm2(k, dim);
                n2 > inner && n2 <= r2
            })
            .collect();
        shell.sort_by(|a, b| a.0.cmp(b.0));
        for (k, v) in shell {
            let n2 = key_norm2(k, dim) as f64;
            let ratio = v.mid() * n2.powf((dim as f64 - 2.0) / 2.0);
            let w = orbit_size(k, dim) as f64;
            wsum += w;
            acc += w * ratio;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        Self {
            dim,
            exact_radius,
            tol,
            horizon,
            values,
            asympt_const: acc / wsum,
            asympt_range: Interval::new(lo, hi),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn exact_radius(&self) -> u32 {
        self.exact_radius
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Upper end of the quadrature range used for the table.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Calibrated far-field constant `a_d`.
    pub fn asymptotic_constant(&self) -> f64 {
        self.asympt_const
    }

    /// Spread of `G(z)‖z‖^{d-2}` over the calibration shell.
    pub fn asymptotic_range(&self) -> Interval<f64> {
        self.asympt_range
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Table entries in key order.
    pub fn entries(&self) -> Vec<(Key, Interval<f64>)> {
        let mut v: Vec<_> = self.values.iter().map(|(k, i)| (*k, *i)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    fn check_point(&self, z: &Point) -> Result<()> {
        if z.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: z.dim(),
            });
        }
        Ok(())
    }

    /// Certified interval for `G(z)`, of width at most `tol`.
    pub fn green_exact(&self, z: &Point, tol: f64) -> Result<Interval<f64>> {
        self.check_point(z)?;
        if z.norm2() > (self.exact_radius as i64).pow(2) {
            return Err(Error::Precondition(format!(
                "{z} lies outside the exact radius {}",
                self.exact_radius
            )));
        }
        let v = self.values[&z.canonical()];
        if v.width() > tol {
            return Err(Error::Truncation {
                requested: tol,
                achieved: v.width(),
                hint: "rebuild the table with a smaller tolerance",
            });
        }
        Ok(v)
    }

    /// Interval for `G(0)`.
    pub fn g0(&self) -> Interval<f64> {
        self.values[&[0; MAX_DIM]]
    }

    /// `a_d ‖z‖^{2-d}`.
    pub fn green_asymptotic(&self, z: &Point) -> Result<f64> {
        self.check_point(z)?;
        let n2 = z.norm2();
        if n2 == 0 {
            return Err(Error::InvalidArgument(
                "far-field form is undefined at the origin".into(),
            ));
        }
        Ok(self.far(n2))
    }

    #[inline]
    fn far(&self, n2: i64) -> f64 {
        self.asympt_const * (n2 as f64).powf(1.0 - self.dim as f64 / 2.0)
    }

    /// Relative spread of the far-field constant, the accuracy of [`Self::green`]
    /// outside the exact radius.
    pub fn far_field_rel_error(&self) -> f64 {
        self.asympt_range.width() / self.asympt_const
    }

    /// Table midpoint inside the exact radius, far-field form outside.
    #[inline]
    pub fn green(&self, z: &Point) -> f64 {
        let n2 = z.norm2();
        if n2 <= (self.exact_radius as i64).pow(2) {
            self.values[&z.canonical()].mid()
        } else {
            self.far(n2)
        }
    }

    /// `G(x - y)`.
    #[inline]
    pub fn between(&self, x: &Point, y: &Point) -> f64 {
        self.green(&(*x - *y))
    }

    /// Interval version of [`green`](Self::green). Outside the table the
    /// interval is `a_d ‖z‖^{2-d}` scaled by the spread seen on the calibration
    /// shell, so it is indicative rather than certified.
    pub fn green_interval(&self, z: &Point) -> Interval<f64> {
        let n2 = z.norm2();
        if n2 <= (self.exact_radius as i64).pow(2) {
            self.values[&z.canonical()]
        } else {
            let s = (n2 as f64).powf(1.0 - self.dim as f64 / 2.0);
            Interval::new(self.asympt_range.lo * s, self.asympt_range.hi * s)
        }
    }

    /// An upper bound for `G(v)‖v‖^{d-2}` over `‖v‖ ≥ min_norm`: the largest
    /// tabulated value beyond `min_norm`, or the calibration spread widened by
    /// 2% for the untabulated far field.
    pub fn tail_constant(&self, min_norm: f64) -> f64 {
        let m2 = min_norm * min_norm;
        let e = (self.dim as f64 - 2.0) / 2.0;
        let table = self
            .values
            .iter()
            .filter(|(k, _)| key_norm2(k, self.dim) as f64 >= m2 && key_norm2(k, self.dim) > 0)
            .map(|(k, v)| v.hi * (key_norm2(k, self.dim) as f64).powf(e))
            .fold(0.0, f64::max);
        table.max(1.02 * self.asympt_range.hi.max(self.asympt_const))
    }

    /// Recomputes single entries from scratch, for cache validation.
    pub fn recompute(&self, keys: &[Key]) -> Vec<Interval<f64>> {
        integrate_keys(self.dim, keys, self.horizon)
    }

    pub(crate) fn raw_values(&self) -> &FxHashMap<Key, Interval<f64>> {
        &self.values
    }
}

/// Closed form `a_d = d Γ(d/2 − 1) / (2 π^{d/2})` of the far-field constant.
pub fn asymptotic_constant_closed_form(dim: usize) -> f64 {
    let d = dim as f64;
    d * gamma_half_integer(dim - 2) / (2.0 * std::f64::consts::PI.powf(d / 2.0))
}

/// `Γ(m/2)` for a positive integer `m`.
fn gamma_half_integer(m: usize) -> f64 {
    let mut g = if m % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut k = if m % 2 == 0 { 2 } else { 1 };
    while k < m {
        g *= k as f64 / 2.0;
        k += 2;
    }
    g
}

pub fn key_norm2(k: &Key, dim: usize) -> i64 {
    k[..dim].iter().map(|&c| (c as i64) * (c as i64)).sum()
}

/// Number of lattice points with canonical key `k`.
pub fn orbit_size(k: &Key, dim: usize) -> u64 {
    let mut n: u64 = (1..=dim as u64).product();
    let mut i = 0;
    while i < dim {
        let mut j = i;
        while j < dim && k[j] == k[i] {
            j += 1;
        }
        n /= (1..=(j - i) as u64).product::<u64>();
        i = j;
    }
    n << k[..dim].iter().filter(|&&c| c != 0).count()
}

/// All canonical keys with `‖k‖ ≤ radius`, in increasing key order.
pub fn canonical_keys(dim: usize, radius: u32) -> Vec<Key> {
    fn rec(dim: usize, pos: usize, bound: u32, left: i64, cur: &mut Key, out: &mut Vec<Key>) {
        if pos == dim {
            out.push(*cur);
            return;
        }
        for c in 0..=bound {
            let c2 = (c as i64) * (c as i64);
            if c2 > left {
                break;
            }
            cur[pos] = c;
            rec(dim, pos + 1, c, left - c2, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = [0; MAX_DIM];
    rec(dim, 0, radius, (radius as i64).pow(2), &mut cur, &mut out);
    out.sort_unstable();
    out
}

/// Certified enclosures of `G` at the given keys.
fn integrate_keys(dim: usize, keys: &[Key], horizon: f64) -> Vec<Interval<f64>> {
    let nmax = keys.iter().flat_map(|k| k[..dim].iter()).copied().max().unwrap_or(0) as usize;
    let (x12, w12) = gauss_legendre(12);
    let (x24, w24) = gauss_legendre(24);
    let mut edges = vec![0.0, 1.0];
    while *edges.last().unwrap() < horizon {
        let next = edges.last().unwrap() * 2.0;
        edges.push(next);
    }
    let horizon = *edges.last().unwrap();

    let nk = keys.len();
    let mut total = vec![0.0f64; nk];
    let mut err = vec![0.0f64; nk];

    let integrand = |x: f64| -> Vec<f64> {
        let mut f = vec![0.0; nmax + 1];
        scaled_bessel_i(x, &mut f);
        keys.iter()
            .map(|k| k[..dim].iter().map(|&c| f[c as usize]).product())
            .collect()
    };

    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (half, mid) = ((b - a) / 2.0, (a + b) / 2.0);
        let rule = |xs: &[f64], ws: &[f64]| -> Vec<f64> {
            let evals: Vec<Vec<f64>> = xs.par_iter().map(|t| integrand(mid + half * t)).collect();
            let mut q = vec![0.0; nk];
            for (e, wt) in evals.iter().zip(ws) {
                for (qi, ei) in q.iter_mut().zip(e) {
                    *qi += wt * half * ei;
                }
            }
            q
        };
        let q12 = rule(&x12, &w12);
        let q24 = rule(&x24, &w24);
        for i in 0..nk {
            total[i] += q24[i];
            err[i] += (q24[i] - q12[i]).abs();
        }
    }

    let d = dim as f64;
    keys.iter()
        .enumerate()
        .map(|(i, k)| {
            let (tail, tail_err) = tail_integral(dim, k, horizon);
            let value = d * (total[i] + tail);
            let rad = d * (err[i] + tail_err) + REL_SLACK * value.abs() + 1e-15;
            Interval::around(value, rad)
        })
        .collect()
}

/// `∫_X^∞ Π e^{-x} I_{k_i}(x) dx` from the large-argument expansion, with a
/// bound on the omitted terms.
fn tail_integral(dim: usize, k: &Key, x: f64) -> (f64, f64) {
    let mut poly = vec![0.0; TAIL_TERMS];
    poly[0] = 1.0;
    for &nu in &k[..dim] {
        let a = bessel_asymptotic_coeffs(nu, TAIL_TERMS);
        let mut next = vec![0.0; TAIL_TERMS];
        for (i, p) in poly.iter().enumerate() {
            for (j, aj) in a.iter().enumerate().take(TAIL_TERMS - i) {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                next[i + j] += p * sign * aj;
            }
        }
        poly = next;
    }
    let d = dim as f64;
    let pref = (2.0 * std::f64::consts::PI).powf(-d / 2.0);
    let terms: Vec<f64> = poly
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let e = d / 2.0 - 1.0 + j as f64;
            pref * c * x.powf(-e) / e
        })
        .collect();
    let sum: f64 = terms.iter().sum();
    let last = terms[TAIL_TERMS - 1].abs() + terms[TAIL_TERMS - 2].abs();
    (sum, 10.0 * last + 1e-3 * sum.abs() * f64::EPSILON)
}
