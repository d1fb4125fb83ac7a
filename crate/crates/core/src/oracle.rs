//! Exact small-instance computations on the return chain of a finite set.
//!
//! The return chain records the successive returns of the walk to `Λ`:
//! `Q(x, y) = P_x(H⁺_Λ < ∞, S(H⁺_Λ) = y)`. From the Green matrix
//! `G_Λ = (G(x − y))` one has `G_Λ = I + Q G_Λ`, hence `Q = I − G_Λ⁻¹` and the
//! escape probabilities are `G_Λ⁻¹ 𝟙`. A walk started outside `Λ` first enters
//! at `y` with probability `(G_{0Λ} G_Λ⁻¹)_y`.

use crate::error::{Error, Result};
use crate::green::dirichlet::majorant;
use crate::green::GreenTable;
use crate::interval::{Interval, ProbBracket};
use crate::lattice::{Point, SiteSet};
use crate::linalg::{conjugate_gradient, Cholesky, DenseMatrix};
use rayon::prelude::*;
use serde::Serialize;

/// Default cap on `Σ n_z` for the covering dynamic program.
pub const DEFAULT_THRESHOLD_CAP: u32 = 12;

/// How the walk, started at the origin, enters `Λ`.
#[derive(Clone, Debug, Serialize)]
pub enum Entry {
    /// The origin is the site with this index; its time-0 visit counts.
    AtSite(usize),
    /// First-entry distribution over `Λ`.
    Hitting(Vec<ProbBracket>),
}

#[derive(Clone, Debug, Serialize)]
pub struct ReturnChain {
    pub sites: SiteSet,
    /// `q_matrix[x][y]`.
    pub q_matrix: Vec<Vec<ProbBracket>>,
    pub escape: Vec<ProbBracket>,
    pub entry: Entry,
    /// Which construction produced the brackets.
    pub route: String,
}

fn check_set(sites: &SiteSet) -> Result<()> {
    if sites.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(())
}

impl ReturnChain {
    /// Builds the chain from the certified Green table. Every pairwise
    /// difference, and every site, must lie within the table's exact radius.
    pub fn from_green(sites: &SiteSet, g: &GreenTable) -> Result<Self> {
        check_set(sites)?;
        let pts = sites.as_slice();
        let n = pts.len();
        let r2 = (g.exact_radius() as i64).pow(2);
        let origin = Point::origin(sites.dim());
        for a in pts {
            if a.norm2() > r2 || pts.iter().any(|b| a.dist2(b) > r2) {
                return Err(Error::Precondition(format!(
                    "set does not fit in the Green table's exact radius {}; use the box route",
                    g.exact_radius()
                )));
            }
        }
        let gi = |a: &Point, b: &Point| g.green_interval(&(*a - *b));
        let gm = DenseMatrix::from_fn(n, |i, j| gi(&pts[i], &pts[j]).mid());
        let w = DenseMatrix::from_fn(n, |i, j| gi(&pts[i], &pts[j]).rad());
        let inv = Cholesky::factor(&gm)?.inverse();
        // ‖I − M̃(G̃ + Δ)‖ ≤ ‖I − M̃G̃‖ + ‖M̃‖‖W‖ =: ε, then ‖M − M̃‖ ≤ ε‖M̃‖/(1 − ε)
        let prod = inv.matmul(&gm);
        let mut resid = DenseMatrix::<f64>::identity(n);
        for i in 0..n {
            for j in 0..n {
                resid.set(i, j, resid.get(i, j) - prod.get(i, j));
            }
        }
        let rounding = 4.0 * n as f64 * f64::EPSILON * inv.norm_inf() * gm.norm_inf();
        let eps = resid.norm_inf() + inv.norm_inf() * w.norm_inf() + rounding;
        if eps >= 0.5 {
            return Err(Error::IllConditioned {
                condition: inv.norm_inf() * gm.norm_inf(),
            });
        }
        let delta = eps * inv.norm_inf() / (1.0 - eps);

        let q_matrix = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let id = if i == j { 1.0 } else { 0.0 };
                        let m = inv.get(i, j);
                        ProbBracket::new(id - m - delta, id - m + delta)
                    })
                    .collect()
            })
            .collect();
        let escape = (0..n)
            .map(|i| {
                let s: f64 = inv.row(i).iter().sum();
                ProbBracket::new(s - delta, s + delta)
            })
            .collect();
        let entry = match sites.index_of(&origin) {
            Some(i) => Entry::AtSite(i),
            None => {
                let g0: Vec<Interval<f64>> = pts.iter().map(|p| gi(&origin, p)).collect();
                let g0_abs: f64 = g0.iter().map(|v| v.hi.abs()).sum();
                let g0_rad: f64 = g0.iter().map(|v| v.rad()).sum();
                let err = g0_abs * delta + g0_rad * inv.norm_inf();
                Entry::Hitting(
                    (0..n)
                        .map(|j| {
                            let h: f64 = (0..n).map(|k| g0[k].mid() * inv.get(k, j)).sum();
                            ProbBracket::new(h - err, h + err)
                        })
                        .collect(),
                )
            }
        };
        Ok(Self {
            sites: sites.clone(),
            q_matrix,
            escape,
            entry,
            route: "green".into(),
        })
    }

    /// Builds the chain from Dirichlet problems on the box `[-M, M]^d`. Exits
    /// from the box count as escapes in the lower brackets; in the upper
    /// brackets an exited walk is charged the largest chance `f(b − y)/f(0)` of
    /// ever reaching `y` from outside the box.
    pub fn from_box(sites: &SiteSet, box_radius: u32) -> Result<Self> {
        check_set(sites)?;
        let dim = sites.dim();
        let m = box_radius as i32;
        let pts = sites.as_slice();
        let origin = Point::origin(dim);
        let reach = pts.iter().map(|p| p.linf_norm()).max().unwrap_or(0);
        if reach + 2 > m {
            return Err(Error::Precondition(format!(
                "box radius {box_radius} leaves no margin around the set"
            )));
        }
        let layout = BoxLayout::new(dim, m);
        let blocked: Vec<bool> = (0..layout.len)
            .map(|i| !layout.interior[i] || layout.point(i).is_some_and(|p| sites.contains(&p)))
            .collect();
        let n = pts.len();
        let f0 = majorant(dim, 0.0);
        // chance to ever reach y from outside the box
        let psi: Vec<f64> = pts
            .iter()
            .map(|y| {
                let gap = (m + 1 - y.linf_norm()) as f64;
                majorant(dim, gap * gap) / f0
            })
            .collect();
        let psi_total: f64 = psi.iter().sum::<f64>().min(1.0);
        let solutions: Vec<(Vec<f64>, f64)> = pts
            .par_iter()
            .map(|y| layout.harmonic_measure(&blocked, y))
            .collect::<Result<_>>()?;
        let inv = 1.0 / (2 * dim) as f64;
        let value_at = |j: usize, w: &Point| -> f64 {
            if let Some(k) = sites.index_of(w) {
                return if k == j { 1.0 } else { 0.0 };
            }
            layout.index(w).map_or(0.0, |i| solutions[j].0[i])
        };
        let mut q_matrix = Vec::with_capacity(n);
        let mut escape = Vec::with_capacity(n);
        for x in pts {
            let lo: Vec<f64> = (0..n)
                .map(|j| inv * x.neighbors().map(|w| value_at(j, &w)).sum::<f64>())
                .collect();
            let err: Vec<f64> = (0..n).map(|j| solutions[j].1).collect();
            let exit = (1.0 - lo.iter().sum::<f64>()).max(0.0);
            let row: Vec<ProbBracket> = (0..n)
                .map(|j| ProbBracket::new((lo[j] - err[j]).max(0.0), lo[j] + err[j] + exit * psi[j]))
                .collect();
            let hi_sum: f64 = row.iter().map(|b| b.hi).sum();
            let e_err: f64 = err.iter().sum();
            let esc_lo = (1.0 - hi_sum).max(exit * (1.0 - psi_total) - e_err);
            escape.push(ProbBracket::new(esc_lo.min(exit + e_err), exit + e_err));
            q_matrix.push(row);
        }
        let entry = match sites.index_of(&origin) {
            Some(i) => Entry::AtSite(i),
            None => {
                let lo: Vec<f64> = (0..n).map(|j| value_at(j, &origin)).collect();
                let exit = (1.0 - lo.iter().sum::<f64>()).max(0.0);
                Entry::Hitting(
                    (0..n)
                        .map(|j| {
                            let e = solutions[j].1;
                            ProbBracket::new((lo[j] - e).max(0.0), lo[j] + e + exit * psi[j])
                        })
                        .collect(),
                )
            }
        };
        Ok(Self {
            sites: sites.clone(),
            q_matrix,
            escape,
            entry,
            route: format!("box:{box_radius}"),
        })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// `q_z = 1 − P_z(H⁺_Λ = ∞)`.
    pub fn q_site(&self, i: usize) -> ProbBracket {
        self.escape[i].complement()
    }

    pub fn q_min(&self) -> ProbBracket {
        let lo = (0..self.len()).map(|i| self.q_site(i).lo).fold(1.0, f64::min);
        let hi = (0..self.len()).map(|i| self.q_site(i).hi).fold(1.0, f64::min);
        ProbBracket::new(lo, hi)
    }

    /// `Σ_x P_x(H⁺_Λ = ∞)`, which is `cap(Λ)`.
    pub fn capacity(&self) -> Interval<f64> {
        Interval::new(
            self.escape.iter().map(|e| e.lo).sum(),
            self.escape.iter().map(|e| e.hi).sum(),
        )
    }
}

/// Padded box `[-M-1, M+1]^d` in row-major order.
struct BoxLayout {
    dim: usize,
    m: i32,
    side: usize,
    len: usize,
    strides: Vec<usize>,
    interior: Vec<bool>,
}

impl BoxLayout {
    fn new(dim: usize, m: i32) -> Self {
        let side = 2 * m as usize + 3;
        let len = side.pow(dim as u32);
        let strides: Vec<usize> = (0..dim).map(|i| side.pow(i as u32)).collect();
        let interior = (0..len)
            .map(|idx| {
                let mut r = idx;
                (0..dim).all(|_| {
                    let c = r % side;
                    r /= side;
                    c >= 1 && c <= side - 2
                })
            })
            .collect();
        Self {
            dim,
            m,
            side,
            len,
            strides,
            interior,
        }
    }

    fn index(&self, p: &Point) -> Option<usize> {
        let mut idx = 0;
        for (axis, &c) in p.coords().iter().enumerate() {
            if c.abs() > self.m {
                return None;
            }
            idx += (c + self.m + 1) as usize * self.strides[axis];
        }
        Some(idx)
    }

    fn point(&self, idx: usize) -> Option<Point> {
        let mut r = idx;
        let mut c = vec![0; self.dim];
        for slot in c.iter_mut() {
            *slot = (r % self.side) as i32 - self.m - 1;
            r /= self.side;
        }
        Point::new(&c).ok()
    }

    /// `f(w) = P_w(enter the blocked set first at y, before leaving the box)`
    /// on free cells, with an a-posteriori bound on the solve error.
    fn harmonic_measure(&self, blocked: &[bool], y: &Point) -> Result<(Vec<f64>, f64)> {
        let inv = 1.0 / (2 * self.dim) as f64;
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..self.len {
                if blocked[i] {
                    out[i] = x[i];
                    continue;
                }
                let mut s = 0.0;
                for &st in &self.strides {
                    if !blocked[i + st] {
                        s += x[i + st];
                    }
                    if !blocked[i - st] {
                        s += x[i - st];
                    }
                }
                out[i] = x[i] - inv * s;
            }
        };
        let mut b = vec![0.0; self.len];
        for w in y.neighbors() {
            if let Some(i) = self.index(&w) {
                if !blocked[i] {
                    b[i] += inv;
                }
            }
        }
        let (f, _) = conjugate_gradient(&apply, &b, 1e-13, 50 * self.len.max(100))?;
        let mut af = vec![0.0; self.len];
        apply(&f, &mut af);
        // the killed Green function of the free region is bounded by 2 for d ≥ 3
        let err = 2.0 * af.iter().zip(&b).map(|(a, b)| (a - b).abs()).sum::<f64>();
        Ok((f, err))
    }
}

/// The truncated-box construction; see [`ReturnChain::from_box`].
pub fn build_return_chain(sites: &SiteSet, box_radius: u32) -> Result<ReturnChain> {
    ReturnChain::from_box(sites, box_radius)
}

fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::IllConditioned {
                condition: f64::INFINITY,
            });
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}

/// `P(ℓ_∞(z) ≥ n_z ∀z)` for one choice of transition probabilities.
fn covering_dp(q: &[Vec<f64>], entry: &EntryValues, thresholds: &[u32]) -> Result<f64> {
    let n = thresholds.len();
    let radix: Vec<usize> = thresholds.iter().map(|&t| t as usize + 1).collect();
    let total: usize = radix.iter().product();
    let stride: Vec<usize> = (0..n).map(|i| radix[..i].iter().product()).collect();
    // value[idx][s]: success probability with remaining vector idx, walk at s
    let mut value: Vec<Vec<f64>> = vec![Vec::new(); total];
    let digit = |idx: usize, i: usize| (idx / stride[i]) % radix[i];
    for idx in 0..total {
        if idx == 0 {
            value[0] = vec![1.0; n];
            continue;
        }
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for s in 0..n {
            a[s][s] = 1.0;
            for y in 0..n {
                if digit(idx, y) == 0 {
                    a[s][y] -= q[s][y];
                } else {
                    b[s] += q[s][y] * value[idx - stride[y]][y];
                }
            }
        }
        value[idx] = solve_small(a, b)?;
    }
    let full: usize = (0..n).map(|i| thresholds[i] as usize * stride[i]).sum();
    let dec = |y: usize| if thresholds[y] > 0 { full - stride[y] } else { full };
    Ok(match entry {
        EntryValues::AtSite(s) => value[dec(*s)][*s],
        EntryValues::Hitting(h) => {
            if full == 0 {
                1.0
            } else {
                (0..n).map(|y| h[y] * value[dec(y)][y]).sum()
            }
        }
    })
}

enum EntryValues {
    AtSite(usize),
    Hitting(Vec<f64>),
}

/// Exact `P(ℓ_∞(z) ≥ n_z ∀z ∈ Λ)` for the walk from the origin (time 0
/// counted), bracketed by running the dynamic program on the lower and upper
/// transition brackets. `thresholds` is aligned with `chain.sites`.
pub fn exact_covering_probability(chain: &ReturnChain, thresholds: &[u32], cap: u32) -> Result<ProbBracket> {
    if thresholds.len() != chain.len() {
        return Err(Error::InvalidArgument(format!(
            "{} thresholds for {} sites",
            thresholds.len(),
            chain.len()
        )));
    }
    let sum: u32 = thresholds.iter().sum();
    if sum > cap {
        return Err(Error::ThresholdCap { total: sum, cap });
    }
    if sum == 0 {
        return Ok(ProbBracket::exact(1.0));
    }
    let pick = |hi: bool| -> (Vec<Vec<f64>>, EntryValues) {
        let q = chain
            .q_matrix
            .iter()
            .map(|row| row.iter().map(|b| if hi { b.hi } else { b.lo }).collect())
            .collect();
        let e = match &chain.entry {
            Entry::AtSite(i) => EntryValues::AtSite(*i),
            Entry::Hitting(h) => EntryValues::Hitting(h.iter().map(|b| if hi { b.hi } else { b.lo }).collect()),
        };
        (q, e)
    };
    let (ql, el) = pick(false);
    let (qh, eh) = pick(true);
    let lo = covering_dp(&ql, &el, thresholds)?;
    let hi = covering_dp(&qh, &eh, thresholds)?;
    let slack = 1e-12;
    Ok(ProbBracket::new(
        lo.min(hi) * (1.0 - slack) - 1e-15,
        hi.max(lo) * (1.0 + slack) + 1e-15,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct CoveringReport {
    pub sites: SiteSet,
    pub thresholds: Vec<u32>,
    pub exact: ProbBracket,
    /// `Π q_z^{n_z} / min q_z` evaluated at both ends of the brackets.
    pub product_bound: Interval<f64>,
    /// `exact.hi ≤ product_bound.hi`.
    pub product_pass: bool,
    /// `exact.hi ≤ product_bound.lo`, which fails whenever the bound is attained.
    pub product_strict: bool,
    /// `t = min n_z` when it is at least 1.
    pub t: Option<u32>,
    /// `(1/q) exp(−t cap(Λ))` with the lenient ends of `q` and `cap`.
    pub capacity_bound: Option<f64>,
    pub capacity_pass: Option<bool>,
    /// `q_z ≤ exp(−P_z(H⁺_Λ = ∞))` on every row.
    pub exp_inequality: bool,
    pub pass: bool,
}

/// Checks both inequalities of the covering theorem on one instance.
pub fn verify_covering_bounds(
    chain: &ReturnChain,
    thresholds: &[u32],
    g: &GreenTable,
    cap: u32,
) -> Result<CoveringReport> {
    let exact = exact_covering_probability(chain, thresholds, cap)?;
    let n = chain.len();
    let qmin = chain.q_min();
    let (mut plo, mut phi) = (1.0f64, 1.0f64);
    for i in 0..n {
        let q = chain.q_site(i);
        plo *= q.lo.powi(thresholds[i] as i32);
        phi *= q.hi.powi(thresholds[i] as i32);
    }
    let product_bound = Interval::new(plo / qmin.hi, phi / qmin.lo);
    let t = thresholds.iter().copied().min().filter(|&t| t >= 1);
    let g0 = g.g0();
    // q = 1 − 1/G(0)
    let q_lo = 1.0 - 1.0 / g0.lo;
    let cap_lo = chain.capacity().lo;
    let capacity_bound = t.map(|t| (-(t as f64) * cap_lo).exp() / q_lo);
    let capacity_pass = capacity_bound.map(|b| exact.hi <= b);
    let exp_inequality = (0..n).all(|i| chain.q_site(i).lo <= (-chain.escape[i].lo).exp());
    let product_pass = exact.hi <= product_bound.hi;
    Ok(CoveringReport {
        sites: chain.sites.clone(),
        thresholds: thresholds.to_vec(),
        exact,
        product_bound,
        product_pass,
        product_strict: exact.hi <= product_bound.lo,
        t,
        capacity_bound,
        capacity_pass,
        exp_inequality,
        pass: product_pass && capacity_pass.unwrap_or(true) && exp_inequality,
    })
}

/// All threshold vectors of length `k` with total at most `max_total`.
pub fn threshold_vectors(k: usize, max_total: u32) -> Vec<Vec<u32>> {
    fn rec(k: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur.push(v);
            rec(k, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, max_total, &mut Vec::new(), &mut out);
    out
}

/// Runs [`verify_covering_bounds`] on every non-empty subset of `base` and every
/// threshold vector with total at most `max_total`.
pub fn sweep(base: &SiteSet, max_total: u32, g: &GreenTable) -> Result<Vec<CoveringReport>> {
    let pts = base.as_slice();
    let mut out = Vec::new();
    for mask in 1u32..(1 << pts.len()) {
        let sub = SiteSet::new(
            base.dim(),
            pts.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, p)| *p),
        )?;
        let chain = ReturnChain::from_green(&sub, g)?;
        for th in threshold_vectors(sub.len(), max_total) {
            out.push(verify_covering_bounds(&chain, &th, g, max_total.max(DEFAULT_THRESHOLD_CAP))?);
        }
    }
    Ok(out)
}
