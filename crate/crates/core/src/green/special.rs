//! Scaled modified Bessel functions and Gauss-Legendre rules.

/// Fills `out[n] = e^{-x} I_n(x)` for `n = 0..out.len()` by Miller's backward
/// recurrence, normalised with `e^{-x}(I_0 + 2 Σ_{n≥1} I_n) = 1`.
pub fn scaled_bessel_i(x: f64, out: &mut [f64]) {
    debug_assert!(x >= 0.0);
    if out.is_empty() {
        return;
    }
    if x == 0.0 {
        out.fill(0.0);
        out[0] = 1.0;
        return;
    }
    let nmax = out.len() - 1;
    let start = nmax + 30 + (10.0 * x.sqrt()).ceil() as usize;
    const BIG: f64 = 1e200;
    out.fill(0.0);
    let mut next = 0.0f64; // f_{n+1}
    let mut cur = 1e-300f64; // f_n
    let mut sum = 0.0f64;
    let inv = 2.0 / x;
    for n in (1..=start).rev() {
        if n <= nmax {
            out[n] = cur;
        }
        sum += 2.0 * cur;
        let prev = next + (n as f64) * inv * cur;
        next = cur;
        cur = prev;
        if cur > BIG {
            let s = 1.0 / BIG;
            cur *= s;
            next *= s;
            sum *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    out[0] = cur;
    sum += cur;
    let norm = 1.0 / sum;
    for v in out.iter_mut() {
        *v *= norm;
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Coefficients `a_k(ν)` of `e^{-x} I_ν(x) ~ (2πx)^{-1/2} Σ (−1)^k a_k(ν) x^{-k}`.
pub fn bessel_asymptotic_coeffs(nu: u32, terms: usize) -> Vec<f64> {
    let mu = 4.0 * (nu as f64) * (nu as f64);
    let mut a = Vec::with_capacity(terms);
    let mut c = 1.0;
    a.push(c);
    for k in 1..terms {
        let j = (2 * k - 1) as f64;
        c *= (mu - j * j) / (k as f64 * 8.0);
        a.push(c);
    }
    a
}
