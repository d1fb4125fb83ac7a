//! Green function of the walk killed on leaving the box `[-M, M]^d`.
//!
//! `G_M(z) ≤ G(z)` always. An upper bracket follows from the last-exit
//! decomposition `G(z) = G_M(z) + E[G(S_τ - z)]` together with the majorant
//! `G(v) ≤ G(0) f(v)/f(0)`, valid because `f(v) = (‖v‖² + d)^{(2-d)/2}` is
//! superharmonic on Z^d and vanishes at infinity.

use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::lattice::{check_dim, Point};
use crate::linalg::conjugate_gradient;

/// Solution of `(I - P) g = δ_0` on a box with absorbing boundary.
#[derive(Clone, Debug)]
pub struct BoxGreen {
    dim: usize,
    half_width: i32,
    side: usize,
    values: Vec<f64>,
    residual_l1: f64,
    g0_upper: f64,
}

/// Superharmonic majorant used for the upper bracket.
pub fn majorant(dim: usize, n2: f64) -> f64 {
    (n2 + dim as f64).powf((2.0 - dim as f64) / 2.0)
}

impl BoxGreen {
    pub fn solve(dim: usize, half_width: u32, rel_tol: f64) -> Result<Self> {
        check_dim(dim)?;
        if half_width < 1 {
            return Err(Error::InvalidArgument("box half-width must be positive".into()));
        }
        let m = half_width as i32;
        // one layer of padding keeps the stencil free of bounds checks
        let side = 2 * half_width as usize + 3;
        let n = side.pow(dim as u32);
        let strides: Vec<usize> = (0..dim).map(|i| side.pow(i as u32)).collect();
        let interior: Vec<bool> = (0..n)
            .map(|idx| {
                let mut r = idx;
                (0..dim).all(|_| {
                    let c = r % side;
                    r /= side;
                    c >= 1 && c <= side - 2
                })
            })
            .collect();
        let centre: usize = strides.iter().map(|s| s * (m as usize + 1)).sum();
        let inv = 1.0 / (2 * dim) as f64;
        let apply = |x: &[f64], out: &mut [f64]| {
            for i in 0..n {
                if !interior[i] {
                    out[i] = x[i];
                    continue;
                }
                let mut s = 0.0;
                for &st in &strides {
                    if interior[i + st] {
                        s += x[i + st];
                    }
                    if interior[i - st] {
                        s += x[i - st];
                    }
                }
                out[i] = x[i] - inv * s;
            }
        };
        let mut b = vec![0.0; n];
        b[centre] = 1.0;
        let (values, _) = conjugate_gradient(&apply, &b, rel_tol, 20 * n.max(100))?;
        let mut ax = vec![0.0; n];
        apply(&values, &mut ax);
        let residual_l1 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).sum();
        let f0 = majorant(dim, 0.0);
        let out = majorant(dim, ((m + 1) as f64).powi(2));
        let g0m = values[centre];
        let g0_upper = (g0m + residual_l1 * 2.0) / (1.0 - out / f0);
        Ok(Self {
            dim,
            half_width: m,
            side,
            values,
            residual_l1,
            g0_upper,
        })
    }

    pub fn half_width(&self) -> u32 {
        self.half_width as u32
    }

    fn index(&self, z: &Point) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for &c in z.coords() {
            if c.abs() > self.half_width {
                return None;
            }
            idx += (c + self.half_width + 1) as usize * stride;
            stride *= self.side;
        }
        Some(idx)
    }

    /// `G_M(z)`, zero outside the box.
    pub fn killed(&self, z: &Point) -> f64 {
        self.index(z).map_or(0.0, |i| self.values[i])
    }

    /// Certified bracket `[G_M(z), G_M(z) + G(0)·max_b f(b - z)/f(0)]` for `G(z)`,
    /// widened by the solver residual.
    pub fn bracket(&self, z: &Point) -> Result<Interval<f64>> {
        if z.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: z.dim(),
            });
        }
        if z.linf_norm() > self.half_width {
            return Err(Error::Precondition(format!("{z} is outside the box")));
        }
        let solve_err = self.residual_l1 * self.g0_upper;
        let gap = (self.half_width + 1 - z.linf_norm()) as f64;
        let reentry = self.g0_upper * majorant(self.dim, gap * gap) / majorant(self.dim, 0.0);
        let g = self.killed(z);
        Ok(Interval::new(
            (g - solve_err).max(0.0),
            g + solve_err + reentry,
        ))
    }
}
