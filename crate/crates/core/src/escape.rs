//! Walks run against a finite target set until they hit it or get far away.
//!
//! While the walker is at ℓ1 distance `D > 1` from the target it cannot hit
//! the target in fewer than `D` steps, so the next `D − 1` steps are sampled
//! in one exact multinomial jump.

use crate::lattice::{euclid_to, Point, SiteSet, MAX_DIM};
use crate::rng::{jump, step, StepRng};
use rustc_hash::FxHashMap;

const BRUTE_MAX: usize = 64;
const CELL: i32 = 16;
/// Jumps shorter than this are not worth the binomial draws.
const MIN_JUMP: i64 = 4;

/// Target set with fast ℓ1 distance lower bounds.
#[derive(Clone, Debug)]
pub struct HitSet {
    dim: usize,
    points: Vec<Point>,
    grid: FxHashMap<Point, Vec<Point>>,
    lo: [i32; MAX_DIM],
    hi: [i32; MAX_DIM],
    center: [f64; MAX_DIM],
    radius: f64,
}

fn cell_of(p: &Point) -> Point {
    let mut c = *p;
    for axis in 0..p.dim() {
        c = c.shifted(axis, p.coord(axis).div_euclid(CELL) - p.coord(axis));
    }
    c
}

impl HitSet {
    pub fn new(sites: &SiteSet) -> Self {
        let dim = sites.dim();
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        for axis in 0..dim {
            lo[axis] = sites.iter().map(|p| p.coord(axis)).min().unwrap_or(0);
            hi[axis] = sites.iter().map(|p| p.coord(axis)).max().unwrap_or(0);
        }
        let mut grid: FxHashMap<Point, Vec<Point>> = FxHashMap::default();
        if sites.len() > BRUTE_MAX {
            for p in sites {
                grid.entry(cell_of(p)).or_default().push(*p);
            }
        }
        let (center, radius) = sites.bounding_sphere();
        Self {
            dim,
            points: sites.as_slice().to_vec(),
            grid,
            lo,
            hi,
            center,
            radius,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn center(&self) -> &[f64; MAX_DIM] {
        &self.center
    }

    /// Largest distance from [`center`](Self::center) to a site.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center_dist(&self, p: &Point) -> f64 {
        euclid_to(p, &self.center)
    }

    /// A lower bound on the ℓ1 distance from `p` to the set; zero exactly on the set.
    pub fn l1_lower_bound(&self, p: &Point) -> i64 {
        if self.points.len() <= BRUTE_MAX {
            return self.points.iter().map(|q| q.l1_dist(p)).min().unwrap_or(i64::MAX);
        }
        let mut outside = 0i64;
        for axis in 0..self.dim {
            let c = p.coord(axis);
            outside += (self.lo[axis] - c).max(c - self.hi[axis]).max(0) as i64;
        }
        if outside >= CELL as i64 {
            return outside;
        }
        // sites outside the 3^d block of cells around p are at least `block` away
        let c = cell_of(p);
        let mut block = i64::MAX;
        for axis in 0..self.dim {
            let x = p.coord(axis) as i64;
            let start = (c.coord(axis) as i64 - 1) * CELL as i64;
            let end = (c.coord(axis) as i64 + 2) * CELL as i64;
            block = block.min(x - start + 1).min(end - x);
        }
        let mut best = block;
        let mut off = [-1i32; MAX_DIM];
        loop {
            let mut cc = c;
            for axis in 0..self.dim {
                cc = cc.shifted(axis, off[axis]);
            }
            if let Some(list) = self.grid.get(&cc) {
                for q in list {
                    best = best.min(q.l1_dist(p));
                }
            }
            let mut k = 0;
            while k < self.dim {
                off[k] += 1;
                if off[k] <= 1 {
                    break;
                }
                off[k] = -1;
                k += 1;
            }
            if k == self.dim {
                break;
            }
        }
        best.max(outside)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.l1_lower_bound(p) == 0
    }
}

/// How a walk against a [`HitSet`] ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fate {
    /// Entered the set at this site after this many steps.
    Hit { site: Point, steps: u64 },
    /// Reached the escape distance from the set's centre.
    Escaped { at: Point, steps: u64 },
    /// Step budget exhausted.
    Timeout { at: Point },
}

/// Runs the walk from `start` (time 0 included: a start inside the set is an
/// immediate hit) until it hits `set`, reaches distance `escape` from the
/// set's centre, or spends `budget` steps.
pub fn run_until_hit(set: &HitSet, start: Point, escape: f64, budget: u64, rng: &mut StepRng) -> Fate {
    let mut w = start;
    let mut steps = 0u64;
    let esc2 = escape * escape;
    loop {
        let dist = set.l1_lower_bound(&w);
        if dist == 0 {
            return Fate::Hit { site: w, steps };
        }
        let e = euclid_to(&w, &set.center);
        if e * e >= esc2 {
            return Fate::Escaped { at: w, steps };
        }
        if steps >= budget {
            return Fate::Timeout { at: w };
        }
        let room = budget - steps;
        if dist > MIN_JUMP {
            let m = ((dist - 1) as u64).min(room);
            w = jump(&w, m, rng);
            steps += m;
        } else {
            w = step(&w, rng);
            steps += 1;
        }
    }
}

/// Whether a walk started at `x` never returns to the set before reaching
/// `escape` from the centre; the first step is always taken.
pub fn escapes_from(set: &HitSet, x: &Point, escape: f64, rng: &mut StepRng) -> bool {
    let w = step(x, rng);
    matches!(
        run_until_hit(set, w, escape, u64::MAX, rng),
        Fate::Escaped { .. }
    )
}
