//! Dense linear algebra kernels used throughout the crate.
//!
//! Matrices are stored row-major. The LU factorization is ordinary partial
//! pivoting, but row updates only touch the nonzero runs of the pivot row and
//! skip zero multipliers, so banded and periodic-banded matrices factor in far
//! less than `n^3/3` operations while producing the same result a plain dense
//! elimination would.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Field operations shared by `f64` and `Complex64`.
pub trait Scalar:
    Copy
    + PartialEq
    + Default
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + Send
    + Sync
    + 'static
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(x: f64) -> Self;
    fn modulus(self) -> f64;
    fn conj(self) -> Self;
    /// `self / |self|`, or one for zero.
    fn phase(self) -> Self;
    fn re(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn conj(self) -> Self {
        self
    }
    fn phase(self) -> Self {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
    fn re(self) -> f64 {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn phase(self) -> Self {
        let r = self.norm();
        if r == 0.0 {
            Self::one()
        } else {
            self / r
        }
    }
    fn re(self) -> f64 {
        self.re
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision (zero pivot at column {column})")]
    Singular { column: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("symmetric eigensolver did not converge")]
    NoConvergence,
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// `max_ij |a_ij|`
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, x| acc.max(x.modulus()))
    }

    /// Induced infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.modulus()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut sums = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (s, x) in sums.iter_mut().zip(self.row(i)) {
                *s += x.modulus();
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (&a, &b)| acc.max((a - b).modulus()))
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let mut acc = T::zero();
                for (&a, &b) in self.row(i).iter().zip(x) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    /// Dense product, accumulated row by row (`C_i += a_ik B_k`).
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let (a_row, out_row) = (self.row(i), &mut out.data[i * other.cols..(i + 1) * other.cols]);
            for (k, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                axpy(out_row, a, other.row(k));
            }
        }
        out
    }

    /// Copy with the rows and columns in `removed` deleted.
    pub fn submatrix_without(&self, removed: &[usize]) -> (Self, Vec<usize>) {
        let keep: Vec<usize> = (0..self.rows).filter(|i| !removed.contains(i)).collect();
        let sub = Self::from_fn(keep.len(), keep.len(), |a, b| self[(keep[a], keep[b])]);
        (sub, keep)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// `y -= a * x`
#[inline]
fn axmy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi -= a * xi;
    }
}

/// `y += a * x`
#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Gaps of zeros shorter than this are folded into a surrounding run.
const RUN_GAP: usize = 16;

/// Contiguous nonzero runs of `row`, offsets relative to the slice start.
fn nonzero_runs<T: Scalar>(row: &[T], runs: &mut Vec<(usize, usize)>) {
    runs.clear();
    let mut start: Option<usize> = None;
    let mut last_nz = 0usize;
    for (j, &x) in row.iter().enumerate() {
        if x != T::zero() {
            match start {
                None => start = Some(j),
                Some(s) if j - last_nz > RUN_GAP => {
                    runs.push((s, last_nz + 1));
                    start = Some(j);
                }
                Some(_) => {}
            }
            last_nz = j;
        }
    }
    if let Some(s) = start {
        runs.push((s, last_nz + 1));
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    lu: Matrix<T>,
    /// `perm[i]` is the original row stored at position `i`.
    perm: Vec<usize>,
    /// Per row of `L`: columns `< i` holding nonzero multipliers.
    lower_nz: Vec<Vec<usize>>,
}

impl<T: Scalar> Lu<T> {
    pub fn factor(mut a: Matrix<T>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch {
                expected: a.rows,
                found: a.cols,
            });
        }
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut lower_nz: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut runs = Vec::new();
        let mut targets = Vec::new();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].modulus();
            for i in k + 1..n {
                let v = a[(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(LinalgError::Singular { column: k });
            }
            if p != k {
                let (lo, hi) = a.data.split_at_mut(p * n);
                lo[k * n..(k + 1) * n].swap_with_slice(&mut hi[..n]);
                perm.swap(k, p);
                lower_nz.swap(k, p);
            }
            targets.clear();
            for i in k + 1..n {
                if a[(i, k)] != T::zero() {
                    targets.push(i);
                }
            }
            if targets.is_empty() {
                continue;
            }
            let pivot = a[(k, k)];
            let (head, tail) = a.data.split_at_mut((k + 1) * n);
            let pivot_row = &head[k * n..];
            nonzero_runs(&pivot_row[k + 1..], &mut runs);
            for &i in &targets {
                let row = &mut tail[(i - k - 1) * n..(i - k) * n];
                let l = row[k] / pivot;
                row[k] = l;
                lower_nz[i].push(k);
                for &(s, e) in &runs {
                    axmy(&mut row[k + 1 + s..k + 1 + e], l, &pivot_row[k + 1 + s..k + 1 + e]);
                }
            }
        }
        Ok(Self { lu: a, perm, lower_nz })
    }

    pub fn dim(&self) -> usize {
        self.lu.rows
    }

    /// Smallest and largest pivot moduli.
    pub fn pivot_range(&self) -> (f64, f64) {
        (0..self.dim())
            .map(|i| self.lu[(i, i)].modulus())
            .fold((f64::INFINITY, 0.0), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for &j in &self.lower_nz[i] {
                acc -= row[j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= row[j] * x[j];
            }
            x[i] = acc / row[i];
        }
        x
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        // A = P^T L U, so A^H = U^H L^H P.
        let mut w = b.to_vec();
        for i in 0..n {
            w[i] = w[i] / self.lu[(i, i)].conj();
            let wi = w[i];
            let row = self.lu.row(i);
            for j in i + 1..n {
                w[j] -= row[j].conj() * wi;
            }
        }
        for i in (0..n).rev() {
            let wi = w[i];
            let row = self.lu.row(i);
            for &j in &self.lower_nz[i] {
                w[j] -= row[j].conj() * wi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = w[i];
        }
        x
    }

    /// Solves `A X = B` for a block of right-hand sides.
    pub fn solve_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let n = self.dim();
        assert_eq!(b.rows, n);
        let m = b.cols;
        let mut x = Matrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        self.substitute_rows(&mut x);
        x
    }

    /// `A^{-1}`
    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        let mut x = Matrix::zeros(n, n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[(i, p)] = T::one();
        }
        self.substitute_rows(&mut x);
        x
    }

    fn substitute_rows(&self, x: &mut Matrix<T>) {
        let n = self.dim();
        let m = x.cols;
        for i in 0..n {
            let (head, tail) = x.data.split_at_mut(i * m);
            let xi = &mut tail[..m];
            let row = self.lu.row(i);
            for &j in &self.lower_nz[i] {
                axmy(xi, row[j], &head[j * m..(j + 1) * m]);
            }
        }
        let mut runs = Vec::new();
        for i in (0..n).rev() {
            let (head, tail) = x.data.split_at_mut((i + 1) * m);
            let xi = &mut head[i * m..];
            let row = self.lu.row(i);
            nonzero_runs(&row[i + 1..], &mut runs);
            for &(s, e) in &runs {
                for j in i + 1 + s..i + 1 + e {
                    let u = row[j];
                    if u != T::zero() {
                        let off = (j - i - 1) * m;
                        axmy(xi, u, &tail[off..off + m]);
                    }
                }
            }
            let d = row[i];
            for v in xi.iter_mut() {
                *v = *v / d;
            }
        }
    }

    /// Hager–Higham estimate of `||A^{-1}||_1`.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![T::from_f64(1.0 / n as f64); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.modulus()).sum::<f64>();
            let xi: Vec<T> = y.iter().map(|v| v.phase()).collect();
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.modulus()))
                .fold((0, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            let ztx = z
                .iter()
                .zip(&x)
                .fold(T::zero(), |acc, (&a, &b)| acc + a.conj() * b)
                .re();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = vec![T::zero(); n];
            x[j] = T::one();
        }
        // Higham's alternating-sign probe guards against the rare underestimate.
        let alt: Vec<T> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                T::from_f64(s * (1.0 + i as f64 / (n as f64 - 1.0).max(1.0)))
            })
            .collect();
        let y = self.solve(&alt);
        let alt_est = 2.0 * y.iter().map(|v| v.modulus()).sum::<f64>() / (3.0 * n as f64);
        est.max(alt_est)
    }
}

/// 1-norm condition estimate `||A||_1 ||A^{-1}||_1`.
pub fn condition_estimate<T: Scalar>(a: &Matrix<T>, lu: &Lu<T>) -> f64 {
    a.norm_one() * lu.inverse_norm1_estimate()
}

/// Sparse row view (column index, value) of a matrix with few nonzeros per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseRows<T> {
    n_cols: usize,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseRows<T> {
    pub fn from_dense(m: &Matrix<T>) -> Self {
        let rows = (0..m.rows())
            .map(|i| {
                m.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, &v)| v != T::zero())
                    .map(|(j, &v)| (j, v))
                    .collect()
            })
            .collect();
        Self { n_cols: m.cols(), rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn matvec<U>(&self, x: &[U]) -> Vec<U>
    where
        U: Scalar + Mul<T, Output = U>,
    {
        self.rows
            .iter()
            .map(|r| r.iter().fold(U::zero(), |acc, &(j, v)| acc + x[j] * v))
            .collect()
    }

    /// `self * B` with `B` dense, accumulated row by row.
    pub fn mul_dense<U>(&self, b: &Matrix<U>) -> Matrix<U>
    where
        U: Scalar + Mul<T, Output = U>,
    {
        assert_eq!(self.n_cols, b.rows());
        let m = b.cols();
        let mut out = Matrix::zeros(self.rows.len(), m);
        for (i, r) in self.rows.iter().enumerate() {
            let out_row = out.row_mut(i);
            for &(k, v) in r {
                for (o, &x) in out_row.iter_mut().zip(b.row(k)) {
                    *o += x * v;
                }
            }
        }
        out
    }
}

/// Eigen-decomposition of a real symmetric matrix (Householder
/// tridiagonalization followed by implicit QL).
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix<f64>,
}

impl SymmetricEigen {
    pub fn new(a: &Matrix<f64>) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch {
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let n = a.rows();
        let mut v: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        if n == 0 {
            return Ok(Self {
                values: d,
                vectors: Matrix::zeros(0, 0),
            });
        }
        tred2(&mut v, &mut d, &mut e);
        tql2(&mut v, &mut d, &mut e)?;
        let vectors = Matrix::from_fn(n, n, |i, j| v[i][j]);
        Ok(Self { values: d, vectors })
    }
}

fn tred2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    d[..n].copy_from_slice(&v[n - 1][..n]);
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
                v[j][i] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[j][i] = f;
                g = e[j] + v[j][j] * f;
                for k in j + 1..i {
                    g += v[k][j] * d[k];
                    e[k] += v[k][j] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[k][j] -= f * e[k] + g * d[k];
                }
                d[j] = v[i - 1][j];
                v[i][j] = 0.0;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[n - 1][i] = v[i][i];
        v[i][i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[k][i + 1] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[k][i + 1] * v[k][j];
                }
                for k in 0..=i {
                    v[k][j] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[k][i + 1] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[n - 1][j];
        v[n - 1][j] = 0.0;
    }
    v[n - 1][n - 1] = 1.0;
    e[0] = 0.0;
}

fn tql2(v: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(LinalgError::NoConvergence);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    // Selection sort into ascending order, carrying vectors along.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for row in v.iter_mut() {
                row.swap(i, k);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> Matrix<Complex64> {
        // Deterministic, well conditioned, non-symmetric.
        Matrix::from_fn(n, n, |i, j| {
            let x = ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5;
            let y = ((i * 7 + j * 29) % 11) as f64 / 11.0 - 0.5;
            if i == j {
                Complex64::new(3.0 + x, y)
            } else {
                Complex64::new(x, y) / n as f64
            }
        })
    }

    #[test]
    fn lu_inverse_round_trip() {
        let a = test_matrix(37);
        let lu = Lu::factor(a.clone()).unwrap();
        let inv = lu.inverse();
        let id = a.matmul(&inv);
        assert!(id.max_abs_diff(&Matrix::identity(37)) < 1e-13);
        let b: Vec<Complex64> = (0..37).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = lu.solve(&b);
        let r = a.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).norm() < 1e-12);
        }
    }

    #[test]
    fn pivoting_is_exercised() {
        let a = Matrix::from_row_major(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let lu = Lu::factor(a).unwrap();
        assert_eq!(lu.solve(&[2.0, 3.0]), vec![3.0, 2.0]);
    }

    #[test]
    fn adjoint_solve_matches_transpose() {
        let a = test_matrix(20);
        let lu = Lu::factor(a.clone()).unwrap();
        let b: Vec<Complex64> = (0..20).map(|i| Complex64::new(1.0, i as f64)).collect();
        let x = lu.solve_adjoint(&b);
        let ah = a.transpose().map(|v| v.conj());
        let r = ah.matvec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(Lu::factor(a), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn condition_estimate_of_diagonal_is_exact() {
        let a = Matrix::from_fn(5, 5, |i, j| if i == j { 10f64.powi(i as i32) } else { 0.0 });
        let lu = Lu::factor(a.clone()).unwrap();
        let c = condition_estimate(&a, &lu);
        assert!((c - 1e4).abs() < 1e-6);
    }

    #[test]
    fn periodic_band_factorization_matches_dense_inverse() {
        let n = 60;
        let a = Matrix::from_fn(n, n, |i, j| {
            let d = (i as isize - j as isize).rem_euclid(n as isize) as usize;
            let d = d.min(n - d);
            if i == j {
                Complex64::new(1.5, 0.3)
            } else if d <= 4 {
                Complex64::new(0.1, -0.05)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let inv = Lu::factor(a.clone()).unwrap().inverse();
        assert!(a.matmul(&inv).max_abs_diff(&Matrix::identity(n)) < 1e-13);
    }

    #[test]
    fn symmetric_eigen_reconstructs() {
        let n = 12;
        let a = Matrix::from_fn(n, n, |i, j| {
            1.0 / (1.0 + i as f64 + j as f64) + if i == j { 1.0 } else { 0.0 }
        });
        let eig = SymmetricEigen::new(&a).unwrap();
        for w in eig.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
        for k in 0..n {
            let v = eig.vectors.column(k);
            let av = a.matvec(&v);
            for i in 0..n {
                assert!((av[i] - eig.values[k] * v[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparse_rows_agree_with_dense() {
        let a = Matrix::from_fn(8, 8, |i, j| {
            if (i as isize - j as isize).abs() <= 1 {
                (i + j) as f64
            } else {
                0.0
            }
        });
        let s = SparseRows::from_dense(&a);
        let x: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        assert_eq!(s.matvec(&x), a.matvec(&x));
        let b = Matrix::from_fn(8, 3, |i, j| (i * j) as f64);
        assert_eq!(s.mul_dense(&b), a.matmul(&b));
    }
}
