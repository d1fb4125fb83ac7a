//! Dense symmetric solves and matrix-free conjugate gradient.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rayon::prelude::*;

/// Square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    /// Entry `(i, j)` is `f(i, j)`; rows are filled in parallel.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> T + Sync) -> Self {
        let mut data = vec![T::zero(); n * n];
        if n > 0 {
            data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, x) in row.iter_mut().enumerate() {
                    *x = f(i, j);
                }
            });
        }
        Self { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        if self.n == 0 {
            return Vec::new();
        }
        self.data
            .par_chunks(self.n)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[T]) -> T {
        dot(x, &self.matvec(x))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        Self::from_fn(n, |i, j| (0..n).map(|k| self.get(i, k) * other.get(k, j)).sum())
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // Four partial sums; the association is fixed so results are reproducible.
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for k in 0..4 {
            acc[k] = acc[k] + a[4 * c + k] * b[4 * c + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s = s + a[k] * b[k];
    }
    s
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: &DenseMatrix<T>) -> Result<Self> {
        let n = a.n;
        let mut l = a.data.clone();
        for j in 0..n {
            let (head, tail) = l.split_at_mut((j + 1) * n);
            let row_j = &mut head[j * n..(j + 1) * n];
            let s = row_j[j] - dot(&row_j[..j], &row_j[..j]);
            if !(s > T::zero()) {
                return Err(Error::IllConditioned {
                    condition: f64::INFINITY,
                });
            }
            let djj = s.sqrt();
            row_j[j] = djj;
            for x in row_j[j + 1..].iter_mut() {
                *x = T::zero();
            }
            let lj = &row_j[..j];
            tail.par_chunks_mut(n).for_each(|row_i| {
                let v = (row_i[j] - dot(&row_i[..j], lj)) / djj;
                row_i[j] = v;
            });
        }
        Ok(Self { n, l })
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> T {
        self.l[i * self.n + j]
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let s = b[i] - dot(&self.l[i * n..i * n + i], &y[..i]);
            y[i] = s / self.at(i, i);
        }
        let mut x = y;
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s = s - self.at(k, i) * x[k];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        let n = self.n;
        let cols: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![T::zero(); n];
                e[j] = T::one();
                self.solve(&e)
            })
            .collect();
        DenseMatrix::from_fn(n, |i, j| cols[j][i])
    }

    /// `(max L_ii / min L_ii)²`, a lower bound on the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let diag: Vec<f64> = (0..self.n).map(|i| self.at(i, i).to_f64_lossy()).collect();
        let mx = diag.iter().copied().fold(0.0, f64::max);
        let mn = diag.iter().copied().fold(f64::INFINITY, f64::min);
        (mx / mn).powi(2)
    }
}

/// Conjugate gradient for a symmetric positive definite operator given as a
/// matrix-vector product. Stops when `‖r‖ ≤ rel_tol·‖b‖`.
pub fn conjugate_gradient<T: Scalar>(
    apply: impl Fn(&[T], &mut [T]),
    b: &[T],
    rel_tol: f64,
    max_iter: usize,
) -> Result<(Vec<T>, usize)> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![T::zero(); n];
    let bnorm = dot(b, b).sqrt().to_f64_lossy();
    if bnorm == 0.0 {
        return Ok((x, 0));
    }
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.to_f64_lossy().sqrt() <= rel_tol * bnorm {
            return Ok((x, it));
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] = x[i] + alpha * p[i];
            r[i] = r[i] - alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    let res = rr.to_f64_lossy().sqrt() / bnorm;
    if res <= rel_tol {
        Ok((x, max_iter))
    } else {
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: res,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DenseMatrix<f64> {
        // 1/(1+|i-j|) plus a diagonal shift is comfortably SPD
        DenseMatrix::from_fn(n, |i, j| {
            1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 1.0 } else { 0.0 }
        })
    }

    #[test]
    fn cholesky_solves() {
        let a = spd(17);
        let x: Vec<f64> = (0..17).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let c = Cholesky::factor(&a).unwrap();
        let y = c.solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
        let inv = c.inverse();
        let id = a.matmul(&inv);
        for i in 0..17 {
            for j in 0..17 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id.get(i, j) - e).abs() < 1e-12);
            }
        }
        assert!(c.condition_estimate() >= 1.0);
    }

    #[test]
    fn cholesky_f32() {
        let a64 = spd(6);
        let a = DenseMatrix::from_fn(6, |i, j| a64.get(i, j) as f32);
        let c = Cholesky::factor(&a).unwrap();
        let x = c.solve(&[1.0; 6]);
        let back = a.matvec(&x);
        assert!(back.iter().all(|v| (v - 1.0).abs() < 1e-5));
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = DenseMatrix::<f64>::identity(3);
        a.set(2, 2, -1.0);
        assert!(matches!(
            Cholesky::factor(&a),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn cg_matches_direct() {
        let a = spd(40);
        let b: Vec<f64> = (0..40).map(|i| 1.0 + i as f64 * 0.1).collect();
        let (x, iters) =
            conjugate_gradient(|v, out| out.copy_from_slice(&a.matvec(v)), &b, 1e-13, 200).unwrap();
        assert!(iters > 0);
        let y = Cholesky::factor(&a).unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
        assert!(matches!(
            conjugate_gradient(|v, out| out.copy_from_slice(&a.matvec(v)), &b, 1e-30, 2),
            Err(Error::NoConvergence { .. })
        ));
    }
}
