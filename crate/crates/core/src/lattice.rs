//! Lattice points, finite site sets and the basic geometry of Z^d.
//!
//! Balls are Euclidean and open, `B_r(x) = {z : ‖z − x‖ < r}`; cubes are
//! half-open, `Q_r(x) = [x − r/2, x + r/2)^d`, so that the cubes centred on
//! `rZ^d` partition the lattice. Membership is decided on integer squared
//! norms, never on floating-point distances.

use crate::error::{Error, Result};
use rustc_hash::FxHashSet;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::path::Path;

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;

/// A point of Z^d, 3 ≤ d ≤ [`MAX_DIM`].
///
/// Unused trailing coordinates are kept at zero so the derived ordering is the
/// lexicographic order on the active coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Point {
    pub fn new(coords: &[i32]) -> Result<Self> {
        let d = coords.len();
        check_dim(d)?;
        let mut c = [0; MAX_DIM];
        c[..d].copy_from_slice(coords);
        Ok(Self { dim: d as u8, coords: c })
    }

    pub fn origin(dim: usize) -> Self {
        assert!((3..=MAX_DIM).contains(&dim), "unsupported dimension {dim}");
        Self {
            dim: dim as u8,
            coords: [0; MAX_DIM],
        }
    }

    /// The unit vector `e_{axis+1}`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut p = Self::origin(dim);
        p.coords[axis] = 1;
        p
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> i32 {
        self.coords[axis]
    }

    #[inline]
    pub fn norm2(&self) -> i64 {
        self.coords().iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> i64 {
        debug_assert_eq!(self.dim, other.dim);
        (0..self.dim())
            .map(|i| {
                let t = self.coords[i] as i64 - other.coords[i] as i64;
                t * t
            })
            .sum()
    }

    #[inline]
    pub fn l1_dist(&self, other: &Point) -> i64 {
        (0..self.dim())
            .map(|i| (self.coords[i] as i64 - other.coords[i] as i64).abs())
            .sum()
    }

    #[inline]
    pub fn linf_norm(&self) -> i32 {
        self.coords().iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// Neighbour in direction `dir ∈ 0..2d`: axis `dir / 2`, sign `+` for even `dir`.
    #[inline]
    pub fn neighbor(&self, dir: usize) -> Point {
        let mut p = *self;
        let axis = dir >> 1;
        if dir & 1 == 0 {
            p.coords[axis] += 1;
        } else {
            p.coords[axis] -= 1;
        }
        p
    }

    pub fn neighbors(&self) -> impl Iterator<Item = Point> + '_ {
        (0..2 * self.dim()).map(move |k| self.neighbor(k))
    }

    #[inline]
    pub fn shifted(&self, axis: usize, by: i32) -> Point {
        let mut p = *self;
        p.coords[axis] += by;
        p
    }

    /// Absolute coordinates sorted in decreasing order. The Green function of
    /// the simple walk depends on a point only through this key.
    pub fn canonical(&self) -> [u32; MAX_DIM] {
        let mut k = [0u32; MAX_DIM];
        for (i, c) in self.coords().iter().enumerate() {
            k[i] = c.unsigned_abs();
        }
        k[..self.dim()].sort_unstable_by(|a, b| b.cmp(a));
        k
    }

    pub fn scaled(&self, by: i32) -> Point {
        let mut p = *self;
        for c in p.coords[..self.dim()].iter_mut() {
            *c *= by;
        }
        p
    }

    pub fn coord_sum(&self) -> i64 {
        self.coords().iter().map(|&c| c as i64).sum()
    }
}

impl Add for Point {
    type Output = Point;
    #[inline]
    fn add(mut self, rhs: Point) -> Point {
        for i in 0..self.dim() {
            self.coords[i] += rhs.coords[i];
        }
        self
    }
}

impl Sub for Point {
    type Output = Point;
    #[inline]
    fn sub(mut self, rhs: Point) -> Point {
        for i in 0..self.dim() {
            self.coords[i] -= rhs.coords[i];
        }
        self
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(mut self) -> Point {
        for i in 0..self.dim() {
            self.coords[i] = -self.coords[i];
        }
        self
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl serde::Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.coords())
    }
}

impl<'de> serde::Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<i32>::deserialize(d)?;
        Point::new(&v).map_err(serde::de::Error::custom)
    }
}

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if (3..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(d))
    }
}

/// A finite set of distinct points, stored sorted.
#[derive(Clone, PartialEq, Eq, Hash, serde::Serialize)]
pub struct SiteSet {
    dim: usize,
    sites: Vec<Point>,
}

impl SiteSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            sites: Vec::new(),
        }
    }

    /// Builds a set from arbitrary points; duplicates are dropped.
    pub fn new(dim: usize, points: impl IntoIterator<Item = Point>) -> Result<Self> {
        check_dim(dim)?;
        let mut sites: Vec<Point> = points.into_iter().collect();
        if let Some(p) = sites.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        sites.sort_unstable();
        sites.dedup();
        Ok(Self { dim, sites })
    }

    pub fn singleton(p: Point) -> Self {
        Self {
            dim: p.dim(),
            sites: vec![p],
        }
    }

    pub(crate) fn from_sorted_unique(dim: usize, sites: Vec<Point>) -> Self {
        debug_assert!(sites.windows(2).all(|w| w[0] < w[1]));
        Self { dim, sites }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.sites.iter()
    }

    pub fn as_slice(&self) -> &[Point] {
        &self.sites
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.sites.binary_search(p).is_ok()
    }

    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.sites.binary_search(p).ok()
    }

    pub fn union(&self, other: &SiteSet) -> SiteSet {
        let mut out = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() && j < other.len() {
            match self.sites[i].cmp(&other.sites[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.sites[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.sites[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.sites[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.sites[i..]);
        out.extend_from_slice(&other.sites[j..]);
        Self::from_sorted_unique(self.dim, out)
    }

    pub fn intersection(&self, other: &SiteSet) -> SiteSet {
        let sites = self
            .sites
            .iter()
            .filter(|p| other.contains(p))
            .copied()
            .collect();
        Self::from_sorted_unique(self.dim, sites)
    }

    pub fn difference(&self, other: &SiteSet) -> SiteSet {
        let sites = self
            .sites
            .iter()
            .filter(|p| !other.contains(p))
            .copied()
            .collect();
        Self::from_sorted_unique(self.dim, sites)
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.sites.iter().all(|p| other.contains(p))
    }

    pub fn translate(&self, v: &Point) -> SiteSet {
        // Translation preserves lexicographic order.
        Self::from_sorted_unique(self.dim, self.sites.iter().map(|p| *p + *v).collect())
    }

    pub fn filter(&self, mut keep: impl FnMut(&Point) -> bool) -> SiteSet {
        Self::from_sorted_unique(
            self.dim,
            self.sites.iter().filter(|p| keep(p)).copied().collect(),
        )
    }

    /// Largest Euclidean distance between two points of the set.
    pub fn diameter(&self) -> f64 {
        let mut best = 0i64;
        for (i, a) in self.sites.iter().enumerate() {
            for b in &self.sites[i + 1..] {
                best = best.max(a.dist2(b));
            }
        }
        (best as f64).sqrt()
    }

    /// Centre of the bounding box and the largest distance from it to a site.
    pub fn bounding_sphere(&self) -> ([f64; MAX_DIM], f64) {
        let mut c = [0.0; MAX_DIM];
        if self.is_empty() {
            return (c, 0.0);
        }
        for (axis, slot) in c.iter_mut().enumerate().take(self.dim) {
            let lo = self.sites.iter().map(|p| p.coord(axis)).min().unwrap();
            let hi = self.sites.iter().map(|p| p.coord(axis)).max().unwrap();
            *slot = 0.5 * (lo as f64 + hi as f64);
        }
        let r = self
            .sites
            .iter()
            .map(|p| euclid_to(p, &c))
            .fold(0.0, f64::max);
        (c, r)
    }

    /// Sites with at least one nearest neighbour outside the set.
    pub fn interior_boundary(&self) -> SiteSet {
        let lookup: FxHashSet<Point> = self.sites.iter().copied().collect();
        self.filter(|p| p.neighbors().any(|q| !lookup.contains(&q)))
    }

    /// Text form: a `d=<dim>` header, then one point per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("d={}\n", self.dim);
        for p in &self.sites {
            let line: Vec<String> = p.coords().iter().map(|c| c.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing d=<dim> header".into(),
        })?;
        let dim: usize = header
            .strip_prefix("d=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                line: hline,
                msg: format!("expected d=<dim>, got {header:?}"),
            })?;
        check_dim(dim)?;
        let mut pts = Vec::new();
        for (ln, l) in lines {
            let coords: Vec<i32> = l
                .split_whitespace()
                .map(|t| t.parse::<i32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: ln,
                    msg: e.to_string(),
                })?;
            if coords.len() != dim {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected {dim} coordinates, got {}", coords.len()),
                });
            }
            pts.push(Point::new(&coords)?);
        }
        Self::new(dim, pts)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

impl fmt::Debug for SiteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.sites.iter()).finish()
    }
}

impl<'a> IntoIterator for &'a SiteSet {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;
    fn into_iter(self) -> Self::IntoIter {
        self.sites.iter()
    }
}

pub(crate) fn euclid_to(p: &Point, c: &[f64; MAX_DIM]) -> f64 {
    p.coords()
        .iter()
        .zip(c.iter())
        .map(|(&a, &b)| {
            let t = a as f64 - b;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

fn check_radius(r: f64) -> Result<()> {
    if r.is_finite() && r >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("radius must be >= 1, got {r}")))
    }
}

/// Offsets `z` with `‖z‖ < r`, sorted.
pub fn ball_offsets(dim: usize, r: f64) -> Result<Vec<Point>> {
    check_dim(dim)?;
    check_radius(r)?;
    let r2 = r * r;
    let h = r.ceil() as i32;
    let mut out = Vec::new();
    let mut cur = vec![-h; dim];
    loop {
        let n2: i64 = cur.iter().map(|&c| (c as i64) * (c as i64)).sum();
        if (n2 as f64) < r2 {
            out.push(Point::new(&cur)?);
        }
        // odometer increment
        let mut k = dim;
        loop {
            if k == 0 {
                out.sort_unstable();
                return Ok(out);
            }
            k -= 1;
            if cur[k] < h {
                cur[k] += 1;
                break;
            }
            cur[k] = -h;
        }
    }
}

/// Lattice points at Euclidean distance strictly less than `r` from `center`.
pub fn ball(center: &Point, r: f64) -> Result<SiteSet> {
    let offs = ball_offsets(center.dim(), r)?;
    Ok(SiteSet::from_sorted_unique(
        center.dim(),
        offs.into_iter().map(|o| *center + o).collect(),
    ))
}

/// `Q_r(center) = [center − r/2, center + r/2)^d ∩ Z^d`; always `r^d` points.
pub fn cube(center: &Point, r: u32) -> Result<SiteSet> {
    if r < 1 {
        return Err(Error::InvalidArgument("cube side must be >= 1".into()));
    }
    let d = center.dim();
    let r = r as i32;
    let lo: Vec<i32> = center.coords().iter().map(|&c| c - r / 2).collect();
    let mut out = Vec::with_capacity((r as usize).pow(d as u32));
    let mut cur = lo.clone();
    loop {
        out.push(Point::new(&cur)?);
        let mut k = d;
        loop {
            if k == 0 {
                out.sort_unstable();
                return Ok(SiteSet::from_sorted_unique(d, out));
            }
            k -= 1;
            if cur[k] < lo[k] + r - 1 {
                cur[k] += 1;
                break;
            }
            cur[k] = lo[k];
        }
    }
}

/// Centre `x ∈ rZ^d` of the partition cube `Q_r(x)` containing `p`.
#[inline]
pub fn cube_center(p: &Point, r: u32) -> Point {
    let r = r as i64;
    let mut c = *p;
    for axis in 0..p.dim() {
        let z = p.coord(axis) as i64;
        let k = (2 * z + r).div_euclid(2 * r);
        c.coords[axis] = (k * r) as i32;
    }
    c
}

/// `B_r(C) = ∪_{x ∈ C} B_r(x)`.
pub fn ball_union(centers: &SiteSet, r: f64) -> Result<SiteSet> {
    let offs = ball_offsets(centers.dim(), r)?;
    let mut pts = Vec::with_capacity(centers.len() * offs.len());
    for c in centers {
        pts.extend(offs.iter().map(|o| *c + *o));
    }
    pts.sort_unstable();
    pts.dedup();
    Ok(SiteSet::from_sorted_unique(centers.dim(), pts))
}

/// Union of the cubes `Q_r(x)` over the given centres.
pub fn cube_union(centers: &SiteSet, r: u32) -> Result<SiteSet> {
    let mut pts = Vec::new();
    for c in centers {
        pts.extend(cube(c, r)?.sites);
    }
    pts.sort_unstable();
    pts.dedup();
    Ok(SiteSet::from_sorted_unique(centers.dim(), pts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: &[i32]) -> Point {
        Point::new(c).unwrap()
    }

    #[test]
    fn ball_sizes() {
        let o = Point::origin(3);
        assert_eq!(ball(&o, 1.0).unwrap().len(), 1);
        assert_eq!(ball(&o, 1.2).unwrap().len(), 7);
        // brute force over the enclosing box; ‖(1,1,0)‖ = √2 < 1.5
        let brute = |r2: f64| {
            let mut n = 0;
            for x in -3i32..=3 {
                for y in -3i32..=3 {
                    for z in -3i32..=3 {
                        if ((x * x + y * y + z * z) as f64) < r2 {
                            n += 1;
                        }
                    }
                }
            }
            n
        };
        assert_eq!(brute(2.25), 19);
        assert_eq!(ball(&o, 1.5).unwrap().len(), 19);
        assert_eq!(brute(4.0), 27);
        assert_eq!(ball(&o, 2.0).unwrap().len(), 27);
    }

    #[test]
    fn ball_rejects_small_radius() {
        assert!(ball(&Point::origin(3), 0.5).is_err());
    }

    #[test]
    fn dimension_checks() {
        assert!(matches!(
            Point::new(&[1, 2]),
            Err(Error::UnsupportedDimension(2))
        ));
        let q = Point::origin(4);
        assert!(matches!(
            SiteSet::new(3, [Point::origin(3), q]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cubes() {
        let o = Point::origin(3);
        assert_eq!(cube(&o, 1).unwrap().as_slice(), &[o]);
        let q2 = cube(&o, 2).unwrap();
        assert_eq!(q2.len(), 8);
        assert!(q2.iter().all(|p| p.coords().iter().all(|&c| c == -1 || c == 0)));
        let q2b = cube(&p(&[2, 0, 0]), 2).unwrap();
        assert!(q2.intersection(&q2b).is_empty());
        assert_eq!(q2.union(&q2b).len(), 16);
        assert!(cube(&o, 0).is_err());
        assert_eq!(cube(&o, 5).unwrap().len(), 125);
    }

    #[test]
    fn cube_centers_partition() {
        for r in 1..=5u32 {
            for x in -7..=7 {
                for y in -3..=3 {
                    let q = p(&[x, y, 2]);
                    let c = cube_center(&q, r);
                    assert!(c.coords().iter().all(|v| v % r as i32 == 0));
                    assert!(cube(&c, r).unwrap().contains(&q), "r={r} q={q}");
                }
            }
        }
    }

    #[test]
    fn unions() {
        let o = Point::origin(3);
        let far = SiteSet::new(3, [o, p(&[10, 0, 0])]).unwrap();
        assert_eq!(ball_union(&far, 1.2).unwrap().len(), 14);
        assert_eq!(ball_union(&far, 1.5).unwrap().len(), 38);
        let near = SiteSet::new(3, [o, Point::unit(3, 0)]).unwrap();
        let u = ball_union(&near, 1.2).unwrap();
        let brute = ball(&o, 1.2).unwrap().union(&ball(&Point::unit(3, 0), 1.2).unwrap());
        assert_eq!(u, brute);
        assert_eq!(u.len(), 12);
        let u15 = ball_union(&near, 1.5).unwrap();
        assert_eq!(u15, ball(&o, 1.5).unwrap().union(&ball(&Point::unit(3, 0), 1.5).unwrap()));
        assert!(ball_union(&SiteSet::empty(3), 2.0).unwrap().is_empty());
    }

    #[test]
    fn text_format() {
        let s = SiteSet::new(3, [p(&[1, -2, 3]), Point::origin(3)]).unwrap();
        let t = s.to_text();
        assert!(t.starts_with("d=3\n"));
        assert_eq!(SiteSet::from_text(&t).unwrap(), s);
        assert!(matches!(
            SiteSet::from_text("d=3\n1 2\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(SiteSet::from_text("3\n").is_err());
        assert!(SiteSet::from_text("d=3\n").unwrap().is_empty());
    }

    #[test]
    fn interior_boundary_of_ball() {
        let b = ball(&Point::origin(3), 1.2).unwrap();
        assert_eq!(b.interior_boundary().len(), 6);
        let b15 = ball(&Point::origin(3), 1.5).unwrap();
        assert_eq!(b15.interior_boundary().len(), 18);
        let b3 = ball(&Point::origin(3), 3.0).unwrap();
        assert!(!b3.interior_boundary().contains(&Point::origin(3)));
    }

    fn arb_point() -> impl Strategy<Value = Point> {
        prop::array::uniform3(-20i32..20).prop_map(|c| Point::new(&c).unwrap())
    }

    proptest! {
        #[test]
        fn ball_translation_invariant(x in arb_point(), r in 1.0f64..4.5) {
            let b0 = ball(&Point::origin(3), r).unwrap();
            prop_assert_eq!(ball(&x, r).unwrap(), b0.translate(&x));
        }

        #[test]
        fn ball_symmetric(r in 1.0f64..4.5, perm in Just([2usize, 0, 1]), flip in 0usize..3) {
            let b = ball(&Point::origin(3), r).unwrap();
            for q in &b {
                let c = q.coords();
                let mut t = [c[perm[0]], c[perm[1]], c[perm[2]]];
                t[flip] = -t[flip];
                prop_assert!(b.contains(&Point::new(&t).unwrap()));
            }
        }

        #[test]
        fn cube_partition_unique(q in arb_point(), r in 1u32..6) {
            // exactly one centre of rZ^d in a neighbourhood covers q
            let c = cube_center(&q, r);
            let mut hits = 0;
            for dx in -1..=1 { for dy in -1..=1 { for dz in -1..=1 {
                let other = c + Point::new(&[dx * r as i32, dy * r as i32, dz * r as i32]).unwrap();
                if cube(&other, r).unwrap().contains(&q) { hits += 1; }
            }}}
            prop_assert_eq!(hits, 1);
        }
    }
}
