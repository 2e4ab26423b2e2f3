//! Small dense linear algebra: row-major matrices, LU with partial pivoting,
//! and a cyclic Jacobi eigensolver for symmetric matrices.
//!
//! Sizes here never exceed a few hundred, so everything is unblocked. The LU
//! skips zero multipliers, which matters for the very sparse Liouvillians.

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{Float, One, Zero};

use crate::scalar::{LinScalar, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: LinScalar> DenseMatrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major buffer has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = S::zero());
    }

    pub fn mul_vec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).fold(S::zero(), |acc, (&a, &b)| acc + a * b))
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == S::zero() {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Largest entry modulus.
    pub fn max_modulus(&self) -> S::Modulus {
        self.data.iter().fold(S::Modulus::zero(), |m, x| m.max(x.modulus()))
    }

    /// Consumes the matrix and factors it in place.
    pub fn lu(self) -> Result<LuFactors<S>, SingularMatrix> {
        LuFactors::factor(self)
    }
}

impl<T: Real> DenseMatrix<Complex<T>> {
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// `max |A - A†|` entrywise.
    pub fn hermiticity_residual(&self) -> T {
        let n = self.rows;
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }
}

impl<S> Index<(usize, usize)> for DenseMatrix<S> {
    type Output = S;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for DenseMatrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is singular to working precision (zero pivot in column {column})")]
pub struct SingularMatrix {
    pub column: usize,
}

/// Packed `PA = LU` factors (unit lower triangle stored below the diagonal).
#[derive(Debug, Clone)]
pub struct LuFactors<S> {
    lu: DenseMatrix<S>,
    perm: Vec<usize>,
}

impl<S: LinScalar> LuFactors<S> {
    pub fn factor(mut a: DenseMatrix<S>) -> Result<Self, SingularMatrix> {
        assert_eq!(a.rows, a.cols, "LU needs a square matrix");
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].modulus();
            for i in k + 1..n {
                let m = a[(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            if best == S::Modulus::zero() || !best.is_finite() {
                return Err(SingularMatrix { column: k });
            }
            if p != k {
                perm.swap(p, k);
                let (lo, hi) = a.data.split_at_mut(p * n);
                lo[k * n..(k + 1) * n].swap_with_slice(&mut hi[..n]);
            }
            let inv_pivot = S::one() / a[(k, k)];
            let (head, tail) = a.data.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n + k + 1..k * n + n];
            for row in tail.chunks_exact_mut(n) {
                if row[k] == S::zero() {
                    continue;
                }
                let factor = row[k] * inv_pivot;
                row[k] = factor;
                for (x, &u) in row[k + 1..].iter_mut().zip(pivot_row) {
                    *x -= factor * u;
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for (j, &l) in row[..i].iter().enumerate() {
                if l != S::zero() {
                    acc -= l * x[j];
                }
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for (j, &u) in row.iter().enumerate().skip(i + 1) {
                acc -= u * x[j];
            }
            x[i] = acc / row[i];
        }
        x
    }

    /// Ratio of largest to smallest pivot modulus; a cheap lower bound on the
    /// condition number that flags rank deficiency reliably.
    pub fn pivot_ratio(&self) -> S::Modulus {
        let (lo, hi) = self.pivot_range();
        hi / lo
    }

    /// Smallest and largest pivot modulus.
    pub fn pivot_range(&self) -> (S::Modulus, S::Modulus) {
        let n = self.lu.rows;
        let (mut lo, mut hi) = (S::Modulus::infinity(), S::Modulus::zero());
        for i in 0..n {
            let m = self.lu[(i, i)].modulus();
            lo = lo.min(m);
            hi = hi.max(m);
        }
        (lo, hi)
    }
}

/// Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues<T: Real>(a: &DenseMatrix<T>) -> Vec<T> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += m[(i, i)] * m[(i, i)];
            for j in i + 1..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[(p, k)];
                    let aqk = m[(q, k)];
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    eig
}

/// Eigenvalues of a complex Hermitian matrix via its real symmetric embedding
/// `[[Re, -Im], [Im, Re]]`, whose spectrum is the Hermitian one doubled.
pub fn hermitian_eigenvalues<T: Real>(h: &DenseMatrix<Complex<T>>) -> Vec<T> {
    let n = h.rows();
    let big = DenseMatrix::from_fn(2 * n, 2 * n, |i, j| {
        // symmetrize so round-off in the input cannot break the Jacobi sweep
        let (a, b) = (i % n, j % n);
        let z = (h[(a, b)] + h[(b, a)].conj()) * T::lit(0.5);
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let all = symmetric_eigenvalues(&big);
    all.into_iter().step_by(2).collect()
}

/// True when `h + shift·I` admits a Cholesky factorization, i.e. every
/// eigenvalue of the Hermitian matrix `h` exceeds `-shift` (up to round-off).
pub fn is_positive_above<T: Real>(h: &DenseMatrix<Complex<T>>, shift: T) -> bool {
    let n = h.rows();
    let mut l = vec![Complex::<T>::zero(); n * n];
    for j in 0..n {
        let mut d = h[(j, j)].re + shift;
        for k in 0..j {
            d -= l[j * n + k].norm_sqr();
        }
        if !(d > T::zero()) {
            return false;
        }
        let d = d.sqrt();
        l[j * n + j] = Complex::new(d, T::zero());
        for i in j + 1..n {
            let mut s = (h[(i, j)] + h[(j, i)].conj()) * T::lit(0.5);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / d;
        }
    }
    true
}

/// Solves a real square system by LU; convenience for the fitting code.
pub fn solve_real<T: Real>(a: DenseMatrix<T>, b: &[T]) -> Result<Vec<T>, SingularMatrix> {
    Ok(a.lu()?.solve(b))
}

pub fn complex_identity<T: Real>(n: usize) -> DenseMatrix<Complex<T>> {
    let mut m = DenseMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex::<T>::one();
    }
    m
}
