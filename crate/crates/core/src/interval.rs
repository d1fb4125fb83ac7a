//! Closed intervals with outward-widened arithmetic, and probability brackets.
//!
//! Rust has no portable control over the rounding mode, so every arithmetic
//! result is widened by a few ulps instead. The enclosures stay valid as long
//! as each primitive operation is correctly rounded, which IEEE 754 guarantees.

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, Mul, Sub};

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

#[inline]
fn down<T: Scalar>(x: T) -> T {
    x - (x.abs() * T::epsilon() * T::of(2.0) + T::min_positive_value())
}

#[inline]
fn up<T: Scalar>(x: T) -> T {
    x + (x.abs() * T::epsilon() * T::of(2.0) + T::min_positive_value())
}

impl<T: Scalar> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        assert!(lo <= hi, "interval with lo {lo} > hi {hi}");
        Self { lo, hi }
    }

    pub fn point(x: T) -> Self {
        Self { lo: x, hi: x }
    }

    /// `[mid − rad, mid + rad]`, widened outward.
    pub fn around(mid: T, rad: T) -> Self {
        let rad = rad.abs();
        Self {
            lo: down(mid - rad),
            hi: up(mid + rad),
        }
    }

    pub fn mid(&self) -> T {
        self.lo + (self.hi - self.lo) * T::of(0.5)
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn rad(&self) -> T {
        self.width() * T::of(0.5)
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `self ⊆ other`.
    pub fn is_within(&self, other: &Self) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Self { lo, hi })
    }

    pub fn hull(&self, other: &Self) -> Self {
        Self {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn scale(&self, k: T) -> Self {
        let (a, b) = (self.lo * k, self.hi * k);
        Self {
            lo: down(a.min(b)),
            hi: up(a.max(b)),
        }
    }

    /// Reciprocal of an interval not containing zero.
    pub fn recip(&self) -> Self {
        assert!(
            self.lo > T::zero() || self.hi < T::zero(),
            "reciprocal of an interval containing 0"
        );
        Self {
            lo: down(T::one() / self.hi),
            hi: up(T::one() / self.lo),
        }
    }

    pub fn div(&self, other: &Self) -> Self {
        *self * other.recip()
    }

    /// Integer power of a non-negative interval.
    pub fn powi_nonneg(&self, n: u32) -> Self {
        assert!(self.lo >= T::zero());
        let mut acc = Self::point(T::one());
        for _ in 0..n {
            acc = acc * *self;
        }
        acc
    }

    pub fn exp(&self) -> Self {
        Self {
            lo: down(self.lo.exp()) * (T::one() - T::epsilon() * T::of(4.0)),
            hi: up(self.hi.exp()) * (T::one() + T::epsilon() * T::of(4.0)),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Interval<U> {
        Interval {
            lo: down(U::of(self.lo.to_f64_lossy())),
            hi: up(U::of(self.hi.to_f64_lossy())),
        }
    }
}

impl<T: Scalar> Add for Interval<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            lo: down(self.lo + o.lo),
            hi: up(self.hi + o.hi),
        }
    }
}

impl<T: Scalar> Sub for Interval<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            lo: down(self.lo - o.hi),
            hi: up(self.hi - o.lo),
        }
    }
}

impl<T: Scalar> Mul for Interval<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let c = [
            self.lo * o.lo,
            self.lo * o.hi,
            self.hi * o.lo,
            self.hi * o.hi,
        ];
        let lo = c.iter().copied().fold(T::infinity(), T::min);
        let hi = c.iter().copied().fold(T::neg_infinity(), T::max);
        Self {
            lo: down(lo),
            hi: up(hi),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

/// An interval certified to contain a probability; always inside `[0, 1]`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbBracket {
    pub lo: f64,
    pub hi: f64,
}

impl ProbBracket {
    /// Clamps to `[0, 1]`.
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "bracket lo {lo} > hi {hi}");
        Self {
            lo: lo.clamp(0.0, 1.0),
            hi: hi.clamp(0.0, 1.0),
        }
    }

    pub fn exact(p: f64) -> Self {
        Self::new(p, p)
    }

    pub fn from_interval(i: Interval<f64>) -> Self {
        Self::new(i.lo, i.hi)
    }

    pub fn interval(&self) -> Interval<f64> {
        Interval {
            lo: self.lo,
            hi: self.hi,
        }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    pub fn complement(&self) -> Self {
        Self::new(1.0 - self.hi, 1.0 - self.lo)
    }
}

impl fmt::Debug for ProbBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.12}, {:.12}]", self.lo, self.hi)
    }
}
