//! Counter-based random streams and the walk-stepping primitives.
//!
//! A [`StepRng`] is a ChaCha8 keystream addressed by `(seed, stream)`. Parallel
//! work derives one child stream per task with [`StepRng::substream`], so the
//! output of a Monte Carlo run never depends on how tasks are scheduled.

use crate::lattice::{Point, MAX_DIM};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

#[derive(Clone, Debug)]
pub struct StepRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl StepRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Fresh generator on the child stream `k` of this one. Does not advance `self`.
    pub fn substream(&self, k: u64) -> StepRng {
        StepRng::new(self.seed, mix(self.stream, k))
    }
}

/// splitmix64 finaliser over the pair; distinct `(stream, k)` give unrelated ids.
fn mix(stream: u64, k: u64) -> u64 {
    let mut z = stream
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(k)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngCore for StepRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    #[inline]
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// One step of the simple random walk: a uniformly chosen nearest neighbour.
#[inline]
pub fn step(p: &Point, rng: &mut StepRng) -> Point {
    let dir = rng.random_range(0..2 * p.dim());
    p.neighbor(dir)
}

/// Below this many steps a jump is simulated step by step.
const JUMP_DIRECT: u64 = 4;
/// Above this many steps the axis split uses binomial draws instead of digits.
const JUMP_DIGITS_MAX: u64 = 1024;

/// Largest `k` with `d^k ≤ 2^64 − 1`, and `d^k`.
const fn digit_block(d: u64) -> (u32, u64) {
    let mut k = 0;
    let mut z: u64 = 1;
    while let Some(n) = z.checked_mul(d) {
        z = n;
        k += 1;
    }
    (k, z)
}

/// Adds the axis counts of `m` uniform axis choices among `D`, using the exact
/// base-`D` digits of rejection-sampled words.
fn axis_counts<const D: usize>(m: u64, rng: &mut StepRng, counts: &mut [u64]) {
    let (k, zone) = digit_block(D as u64);
    let mut left = m;
    while left > 0 {
        let mut x = loop {
            let x = rng.next_u64();
            if x < zone {
                break x;
            }
        };
        let take = left.min(k as u64);
        for _ in 0..take {
            counts[(x % D as u64) as usize] += 1;
            x /= D as u64;
        }
        left -= take;
    }
}

/// `3^8` entries: the three digit counts of an 8-digit base-3 number, packed
/// one byte each.
fn ternary_table() -> &'static [u32; 6561] {
    static TABLE: std::sync::OnceLock<Box<[u32; 6561]>> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Box::new([0u32; 6561]);
        for (v, slot) in t.iter_mut().enumerate() {
            let mut x = v;
            for _ in 0..8 {
                *slot += 1 << (8 * (x % 3));
                x /= 3;
            }
        }
        t
    })
}

fn axis_counts_3(m: u64, rng: &mut StepRng, counts: &mut [u64]) {
    let (k, zone) = digit_block(3);
    let table = ternary_table();
    let mut left = m;
    let mut packed = [0u64; 3];
    while left > 0 {
        let mut x = loop {
            let x = rng.next_u64();
            if x < zone {
                break x;
            }
        };
        let mut take = left.min(k as u64);
        left -= take;
        while take >= 8 {
            let t = table[(x % 6561) as usize];
            x /= 6561;
            packed[0] += (t & 0xff) as u64;
            packed[1] += ((t >> 8) & 0xff) as u64;
            packed[2] += (t >> 16) as u64;
            take -= 8;
        }
        for _ in 0..take {
            packed[(x % 3) as usize] += 1;
            x /= 3;
        }
    }
    for i in 0..3 {
        counts[i] += packed[i];
    }
}

/// Position after `m` steps of the walk started at `p`, sampled exactly from
/// the multinomial law of the step counts per axis and sign.
pub fn jump(p: &Point, m: u64, rng: &mut StepRng) -> Point {
    if m < JUMP_DIRECT {
        let mut q = *p;
        for _ in 0..m {
            q = step(&q, rng);
        }
        return q;
    }
    let d = p.dim();
    let mut counts = [0u64; MAX_DIM];
    if m <= JUMP_DIGITS_MAX {
        match d {
            3 => axis_counts_3(m, rng, &mut counts),
            4 => axis_counts::<4>(m, rng, &mut counts),
            5 => axis_counts::<5>(m, rng, &mut counts),
            6 => axis_counts::<6>(m, rng, &mut counts),
            7 => axis_counts::<7>(m, rng, &mut counts),
            _ => axis_counts::<8>(m, rng, &mut counts),
        }
    } else {
        let mut left = m;
        for (axis, c) in counts.iter_mut().enumerate().take(d) {
            let k = if axis + 1 == d {
                left
            } else {
                let prob = 1.0 / (d - axis) as f64;
                Binomial::new(left, prob).unwrap().sample(rng)
            };
            left -= k;
            *c = k;
        }
    }
    let mut q = *p;
    if m <= 64 {
        // one word supplies every sign
        let mut bits = rng.next_u64();
        for (axis, &k) in counts.iter().enumerate().take(d) {
            if k > 0 {
                let mask = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
                let plus = (bits & mask).count_ones() as i64;
                bits = bits.checked_shr(k as u32).unwrap_or(0);
                q = q.shifted(axis, (2 * plus - k as i64) as i32);
            }
        }
        return q;
    }
    for (axis, &k) in counts.iter().enumerate().take(d) {
        if k > 0 {
            let plus = fair_binomial(k, rng);
            q = q.shifted(axis, (2 * plus as i64 - k as i64) as i32);
        }
    }
    q
}

/// `Binomial(k, 1/2)`: popcount of `k` fair bits for moderate `k`.
fn fair_binomial(k: u64, rng: &mut StepRng) -> u64 {
    if k > 4096 {
        return Binomial::new(k, 0.5).unwrap().sample(rng);
    }
    let mut left = k;
    let mut ones = 0u64;
    while left >= 64 {
        ones += rng.next_u64().count_ones() as u64;
        left -= 64;
    }
    if left > 0 {
        ones += (rng.next_u64() & ((1u64 << left) - 1)).count_ones() as u64;
    }
    ones
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_stream() {
        let o = Point::origin(3);
        let mut a = StepRng::new(7, 3);
        let mut b = StepRng::new(7, 3);
        let pa: Vec<Point> = (0..50).map(|_| step(&o, &mut a)).collect();
        let pb: Vec<Point> = (0..50).map(|_| step(&o, &mut b)).collect();
        assert_eq!(pa, pb);
        let mut c = StepRng::new(7, 4);
        let pc: Vec<Point> = (0..50).map(|_| step(&o, &mut c)).collect();
        assert_ne!(pa, pc);
        assert_ne!(a.substream(1).next_u64(), a.substream(2).next_u64());
        assert_eq!(a.substream(9).next_u64(), b.substream(9).next_u64());
    }

    #[test]
    fn neighbor_frequencies_within_five_sigma() {
        let o = Point::origin(3);
        let mut rng = StepRng::new(12345, 0);
        let n = 1_000_000u64;
        let mut counts = [0u64; 6];
        for _ in 0..n {
            let q = step(&o, &mut rng);
            let dir = (0..6).find(|&k| o.neighbor(k) == q).unwrap();
            counts[dir] += 1;
        }
        let p = 1.0 / 6.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() < 5.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn steps_are_unit_and_preserve_parity() {
        let mut rng = StepRng::new(1, 1);
        let mut q = Point::origin(3);
        for n in 1..=500i64 {
            let next = step(&q, &mut rng);
            assert_eq!(next.dist2(&q), 1);
            q = next;
            assert_eq!(q.coord_sum().rem_euclid(2), n % 2);
        }
    }

    #[test]
    fn fair_binomial_moments() {
        let mut rng = StepRng::new(5, 5);
        for k in [1u64, 7, 64, 100, 5000] {
            let n = 20_000;
            let xs: Vec<f64> = (0..n).map(|_| fair_binomial(k, &mut rng) as f64).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let sd_mean = (k as f64 / 4.0 / n as f64).sqrt();
            assert!((mean - k as f64 / 2.0).abs() < 5.0 * sd_mean, "k={k}");
            assert!((var / (k as f64 / 4.0) - 1.0).abs() < 0.1, "k={k}");
            assert!(xs.iter().all(|&x| x <= k as f64));
        }
    }

    #[test]
    fn digit_blocks() {
        assert_eq!(digit_block(3), (40, 12157665459056928801));
        assert_eq!(digit_block(4), (31, 1 << 62));
    }

    #[test]
    fn axis_counts_are_uniform() {
        let mut rng = StepRng::new(8, 8);
        let mut c = [0u64; MAX_DIM];
        axis_counts::<3>(300_000, &mut rng, &mut c);
        let mut t = [0u64; MAX_DIM];
        for _ in 0..3000 {
            axis_counts_3(100, &mut rng, &mut t);
        }
        axis_counts_3(7, &mut rng, &mut t);
        for counts in [c, t] {
            let total: u64 = counts.iter().sum();
            assert!(total == 300_000 || total == 300_007);
            let sd = (300_000.0f64 * 2.0 / 9.0).sqrt();
            for &x in &counts[..3] {
                assert!((x as f64 - 100_000.0).abs() < 5.0 * sd, "{counts:?}");
            }
        }
    }

    #[test]
    fn large_jumps_have_the_right_spread() {
        let mut rng = StepRng::new(4, 2);
        let m = 5000u64;
        let n = 4000;
        let mean2: f64 = (0..n)
            .map(|_| jump(&Point::origin(4), m, &mut rng).norm2() as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean2 / m as f64 - 1.0).abs() < 0.08, "{mean2}");
    }

    #[test]
    fn jump_matches_stepwise_moments() {
        // mean 0 and E‖S_m‖² = m for both samplers
        let m = 40u64;
        let trials = 40_000;
        let mut rng = StepRng::new(99, 0);
        let mut sum2 = 0.0;
        let mut sumx = 0.0;
        for _ in 0..trials {
            let q = jump(&Point::origin(3), m, &mut rng);
            assert_eq!(q.coord_sum().rem_euclid(2), (m % 2) as i64);
            assert!(q.l1_dist(&Point::origin(3)) <= m as i64);
            sum2 += q.norm2() as f64;
            sumx += q.coord(0) as f64;
        }
        let mean2 = sum2 / trials as f64;
        // sd of the mean of ‖S_m‖² is about 0.4% of m here
        assert!((mean2 - m as f64).abs() < 0.04 * m as f64, "{mean2}");
        assert!((sumx / trials as f64).abs() < 0.15);
    }
}
