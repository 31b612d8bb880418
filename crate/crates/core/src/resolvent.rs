//! Generalized resolvent `G = (H - Z)^{-1}`, `Z = diag(z on the block, z~
//! elsewhere)`, its minors, the T-matrix and the exact algebraic identities
//! relating them.

use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{LinalgError, Lu, Matrix, Scalar, SparseRows};
use crate::profile::VarianceMatrices;
use crate::scalar::SpectralPoint;
use crate::stability::{StabilityError, TStabilityOperator};

/// Condition estimates above this mark a resolvent as near-singular.
pub const NEAR_SINGULAR_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ResolventError {
    #[error("SingularMatrix: H - Z is singular to working precision ({0})")]
    SingularMatrix(LinalgError),
    #[error("SingularMinor: reduced matrix is singular ({0})")]
    SingularMinor(LinalgError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("InvalidInput: {reason}")]
    InvalidInput { reason: &'static str },
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `H - Z` as a complex matrix.
pub fn shifted_matrix(h: &Matrix<f64>, point: &SpectralPoint, w: usize) -> Matrix<Complex64> {
    let n = h.rows();
    let mut a = h.map(c);
    for i in 0..n {
        a[(i, i)] -= point.z_at(i, w);
    }
    a
}

#[derive(Debug, Clone)]
pub struct GenResolvent {
    pub g: Matrix<Complex64>,
    pub point: SpectralPoint,
    pub w: usize,
    /// `||(H - Z) G - I||_max`
    pub inv_residual: f64,
    /// 1-norm condition estimate of `H - Z`.
    pub condition: f64,
    pub near_singular: bool,
}

/// Dense inversion of `H - Z` by LU with partial pivoting.
pub fn resolvent(h: &Matrix<f64>, point: &SpectralPoint, w: usize) -> Result<GenResolvent, ResolventError> {
    if !h.is_square() {
        return Err(ResolventError::InvalidInput {
            reason: "H must be square",
        });
    }
    let a = shifted_matrix(h, point, w);
    let lu = Lu::factor(a.clone()).map_err(ResolventError::SingularMatrix)?;
    let g = lu.inverse();
    let condition = crate::linalg::condition_estimate(&a, &lu);
    let inv_residual = product_identity_residual(&SparseRows::from_dense(&a), &g);
    Ok(GenResolvent {
        g,
        point: *point,
        w,
        inv_residual,
        condition,
        near_singular: !(condition <= NEAR_SINGULAR_CONDITION),
    })
}

/// `||A B - I||_max` for sparse `A`.
pub fn product_identity_residual(a: &SparseRows<Complex64>, b: &Matrix<Complex64>) -> f64 {
    let prod = a.mul_dense(b);
    let n = prod.rows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for (j, v) in prod.row(i).iter().enumerate() {
            let t = if i == j { v - 1.0 } else { *v };
            worst = worst.max(t.norm());
        }
    }
    worst
}

/// Minor of the first kind with index names kept: rows and columns in `t`
/// read as zero.
pub fn minor_first<T: Scalar>(a: &Matrix<T>, t: &[usize]) -> Matrix<T> {
    let mut out = a.clone();
    for &k in t {
        for j in 0..a.cols() {
            out[(k, j)] = T::zero();
        }
        for i in 0..a.rows() {
            out[(i, k)] = T::zero();
        }
    }
    out
}

/// `(A^{[T]})^{-1}` embedded back with zero fill on `T`.
///
/// With `A = B^{-1}` this is the minor of the second kind `B^{(T)}`.
pub fn inverse_of_minor<T: Scalar>(a: &Matrix<T>, t: &[usize]) -> Result<Matrix<T>, ResolventError> {
    let (sub, keep) = a.submatrix_without(t);
    let inv = Lu::factor(sub).map_err(ResolventError::SingularMinor)?.inverse();
    let n = a.rows();
    let mut out = Matrix::zeros(n, n);
    for (p, &i) in keep.iter().enumerate() {
        for (q, &j) in keep.iter().enumerate() {
            out[(i, j)] = inv[(p, q)];
        }
    }
    Ok(out)
}

/// Minor of the second kind `B^{(T)} = ((B^{-1})^{[T]})^{-1}`.
pub fn minor_second<T: Scalar>(b: &Matrix<T>, t: &[usize]) -> Result<Matrix<T>, ResolventError> {
    let inv = Lu::factor(b.clone()).map_err(ResolventError::SingularMinor)?.inverse();
    inverse_of_minor(&inv, t)
}

fn rel(lhs: Complex64, rhs: Complex64) -> f64 {
    (lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1.0)
}

/// Residuals of the resolvent identities for `B` with known inverse `A`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolventIdentityResiduals {
    /// `B_ab = B^{(k)}_ab + B_ak B_kb / B_kk`, worst over `a, b != k`.
    pub entry_split: f64,
    /// `1/B_aa = 1/B^{(k)}_aa - B_ak B_ka / (B^{(k)}_aa B_aa B_kk)`, worst over `a != k`.
    pub diagonal_split: f64,
    /// `1/B_ii = A_ii - sum_{k,l != i} A_ik B^{(i)}_kl A_li`.
    pub diagonal_expansion: f64,
    /// `B_ib = -B_ii sum_{k != i} A_ik B^{(i)}_kb`, worst over `b != i`.
    pub row_expansion: f64,
    /// `B_aj = -B_jj sum_{k != j} B^{(j)}_ak A_kj`, worst over `a != j`.
    pub column_expansion: f64,
}

impl ResolventIdentityResiduals {
    pub fn max(&self) -> f64 {
        self.entry_split
            .max(self.diagonal_split)
            .max(self.diagonal_expansion)
            .max(self.row_expansion)
            .max(self.column_expansion)
    }
}

/// Evaluates the identities at removal indices `k`, `i`, `j`, given
/// `B`, its inverse `A` and the minors `B^{(k)}`, `B^{(i)}`, `B^{(j)}`.
#[allow(clippy::too_many_arguments)]
pub fn resolvent_identity_residuals(
    b: &Matrix<Complex64>,
    a: &Matrix<Complex64>,
    k: usize,
    b_k: &Matrix<Complex64>,
    i: usize,
    b_i: &Matrix<Complex64>,
    j: usize,
    b_j: &Matrix<Complex64>,
) -> ResolventIdentityResiduals {
    let n = b.rows();
    let mut r = ResolventIdentityResiduals::default();
    let bkk = b[(k, k)];
    for p in (0..n).filter(|&p| p != k) {
        for q in (0..n).filter(|&q| q != k) {
            let rhs = b_k[(p, q)] + b[(p, k)] * b[(k, q)] / bkk;
            r.entry_split = r.entry_split.max(rel(b[(p, q)], rhs));
        }
        let lhs = b[(p, p)].inv();
        let rhs = b_k[(p, p)].inv() - b[(p, k)] * b[(k, p)] / (b_k[(p, p)] * b[(p, p)] * bkk);
        r.diagonal_split = r.diagonal_split.max(rel(lhs, rhs));
    }

    let a_rows = SparseRows::from_dense(a);
    let a_row_i: Vec<(usize, Complex64)> = a_rows.row(i).iter().copied().filter(|&(q, _)| q != i).collect();
    let mut quad = Complex64::new(0.0, 0.0);
    for &(p, apv) in &a_row_i {
        for q in (0..n).filter(|&q| q != i) {
            let aqi = a[(q, i)];
            if aqi != Complex64::new(0.0, 0.0) {
                quad += apv * b_i[(p, q)] * aqi;
            }
        }
    }
    r.diagonal_expansion = rel(b[(i, i)].inv(), a[(i, i)] - quad);

    for col in (0..n).filter(|&col| col != i) {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(p, apv) in &a_row_i {
            acc += apv * b_i[(p, col)];
        }
        r.row_expansion = r.row_expansion.max(rel(b[(i, col)], -b[(i, i)] * acc));
    }

    let a_col_j: Vec<(usize, Complex64)> = (0..n)
        .filter(|&q| q != j)
        .map(|q| (q, a[(q, j)]))
        .filter(|&(_, v)| v != Complex64::new(0.0, 0.0))
        .collect();
    for row in (0..n).filter(|&row| row != j) {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(q, aqj) in &a_col_j {
            acc += b_j[(row, q)] * aqj;
        }
        r.column_expansion = r.column_expansion.max(rel(b[(row, j)], -b[(j, j)] * acc));
    }
    r
}

/// `T_ij = sum_k S_ik |G_kj|^2` with `S = S_zeta`.
#[derive(Debug, Clone)]
pub struct TMatrix {
    pub t: Matrix<f64>,
}

pub fn abs_squared(g: &Matrix<Complex64>) -> Matrix<f64> {
    g.map(|v| v.norm_sqr())
}

pub fn t_matrix(g: &Matrix<Complex64>, vars: &VarianceMatrices) -> TMatrix {
    TMatrix {
        t: vars.szeta_rows().mul_dense(&abs_squared(g)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TEquationResiduals {
    /// `max_ij |T_ij - sum_k R_ik (|G_kj|^2 - |M_k|^2 T_kj)|`, `R = (1 - S|M|^2)^{-1} S`.
    pub full: f64,
    /// Same identity with the `k = j` term split off as `T^0_ij`.
    pub diagonal_split: f64,
}

/// Residuals of the T-equation; `R` is applied as `K^{-1}(S X)`.
pub fn t_equation_residual(
    t: &TMatrix,
    g: &Matrix<Complex64>,
    big_m: &[Complex64],
    vars: &VarianceMatrices,
) -> Result<TEquationResiduals, ResolventError> {
    let n = vars.n();
    if big_m.len() != n || g.rows() != n {
        return Err(ResolventError::InvalidInput {
            reason: "dimension mismatch",
        });
    }
    let op = TStabilityOperator::new(vars, big_m)?;
    let abs_m2 = op.abs_m2();
    let g2 = abs_squared(g);
    let x = Matrix::from_fn(n, n, |k, j| g2[(k, j)] - abs_m2[k] * t.t[(k, j)]);
    let rx = op.solve_block(&vars.szeta_rows().mul_dense(&x));
    let full = t.t.max_abs_diff(&rx);

    // T_ij - T^0_ij against the explicit k != j sum, with T^0_ij = R_ij X_jj.
    let r = op.full();
    let mut diagonal_split = 0.0f64;
    for i in 0..n {
        let r_row = r.row(i);
        for j in 0..n {
            let t0 = r_row[j] * x[(j, j)];
            let mut off = 0.0;
            for (k, &rik) in r_row.iter().enumerate() {
                if k != j {
                    off += rik * x[(k, j)];
                }
            }
            diagonal_split = diagonal_split.max((t.t[(i, j)] - t0 - off).abs());
        }
    }
    Ok(TEquationResiduals { full, diagonal_split })
}

/// `||G(z, w) - G(z, w') - G(z, w)(w - w') J G(z, w')||_max`, where `J`
/// selects the complement of the block (`block = false`) or the block itself
/// (`block = true`, the spectral parameter varied is then `z`).
pub fn interpolation_residual(
    h: &Matrix<f64>,
    w_block: usize,
    fixed: Complex64,
    w: Complex64,
    w_prime: Complex64,
    block: bool,
) -> Result<f64, ResolventError> {
    let point = |v: Complex64| {
        let p = if block {
            SpectralPoint::new(v, fixed)
        } else {
            SpectralPoint::new(fixed, v)
        };
        p.map_err(|_| ResolventError::InvalidInput {
            reason: "invalid spectral point",
        })
    };
    let g1 = resolvent(h, &point(w)?, w_block)?.g;
    let g2 = resolvent(h, &point(w_prime)?, w_block)?.g;
    Ok(interpolation_residual_from(&g1, &g2, w - w_prime, w_block, block))
}

/// [`interpolation_residual`] for resolvents already at hand, `dw = w - w'`.
pub fn interpolation_residual_from(
    g1: &Matrix<Complex64>,
    g2: &Matrix<Complex64>,
    dw: Complex64,
    w_block: usize,
    block: bool,
) -> f64 {
    let n = g1.rows();
    // G1 (dw J) G2: scale the selected rows of G2.
    let mut jg2 = g2.clone();
    for k in 0..n {
        let selected = (k < w_block) == block;
        let factor = if selected { dw } else { Complex64::new(0.0, 0.0) };
        for v in jg2.row_mut(k) {
            *v *= factor;
        }
    }
    let prod = g1.matmul(&jg2);
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((g1[(i, j)] - g2[(i, j)] - prod[(i, j)]).norm());
        }
    }
    worst
}

/// Worst relative deviation from `sum_k |G_kj|^2 = Im G_jj / eta` at `z = z~`.
pub fn ward_residual(gr: &GenResolvent) -> Result<f64, ResolventError> {
    if gr.point.z() != gr.point.ztilde() {
        return Err(ResolventError::InvalidInput {
            reason: "the Ward identity needs z = z~",
        });
    }
    let eta = gr.point.z().im;
    let sums = column_norms2(&gr.g);
    let mut worst = 0.0f64;
    for (j, s) in sums.iter().enumerate() {
        let rhs = gr.g[(j, j)].im / eta;
        worst = worst.max((s - rhs).abs() / rhs.abs().max(1e-300));
    }
    Ok(worst)
}

/// `sum_i |G_ij|^2` per column `j`.
pub fn column_norms2(g: &Matrix<Complex64>) -> Vec<f64> {
    let mut sums = alloc::vec![0.0; g.cols()];
    for i in 0..g.rows() {
        for (s, v) in sums.iter_mut().zip(g.row(i)) {
            *s += v.norm_sqr();
        }
    }
    sums
}

/// `||G - M||_max`, `|||G|||^2` and `||T||_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventStats {
    pub lambda: f64,
    pub tnorm2: f64,
    pub t_max: f64,
}

pub fn stats(g: &Matrix<Complex64>, big_m: &[Complex64], t: &TMatrix) -> ResolventStats {
    let n = g.rows();
    let mut lambda = 0.0f64;
    for i in 0..n {
        for (j, v) in g.row(i).iter().enumerate() {
            let d = if i == j { v - big_m[i] } else { *v };
            lambda = lambda.max(d.norm());
        }
    }
    ResolventStats {
        lambda,
        tnorm2: column_norms2(g).into_iter().fold(0.0, f64::max),
        t_max: t.t.max_abs(),
    }
}

/// Power-iteration estimate of the largest singular value (from below).
pub fn spectral_norm_estimate(g: &Matrix<Complex64>, iterations: usize) -> f64 {
    let n = g.cols();
    let gh = g.transpose().map(|v| v.conj());
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.1))
        .collect();
    let mut sigma = 0.0;
    for _ in 0..iterations {
        let norm = libm::sqrt(v.iter().map(|x| x.norm_sqr()).sum::<f64>());
        for x in &mut v {
            *x /= norm;
        }
        let gv = g.matvec(&v);
        sigma = libm::sqrt(gv.iter().map(|x| x.norm_sqr()).sum::<f64>());
        v = gh.matvec(&gv);
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix_resolvent() {
        let h = Matrix::<f64>::zeros(5, 5);
        let p = SpectralPoint::diagonal(Complex64::new(0.0, 1.0)).unwrap();
        let gr = resolvent(&h, &p, 2).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j {
                    Complex64::new(0.0, 1.0)
                } else {
                    Complex64::new(0.0, 0.0)
                };
                assert!((gr.g[(i, j)] - want).norm() < 1e-15);
            }
        }
        assert!(!gr.near_singular);
    }

    #[test]
    fn minor_nesting_and_empty_set() {
        let a = Matrix::from_fn(6, 6, |i, j| (i * 6 + j) as f64);
        assert_eq!(minor_first(&a, &[]), a);
        assert_eq!(minor_first(&minor_first(&a, &[1]), &[4]), minor_first(&a, &[1, 4]));
    }

    #[test]
    fn diagonal_second_minor_is_first_minor() {
        let b = Matrix::from_fn(5, 5, |i, j| {
            if i == j {
                Complex64::new(1.0 + i as f64, 0.5)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let m2 = minor_second(&b, &[2]).unwrap();
        assert!(m2.max_abs_diff(&minor_first(&b, &[2])) < 1e-14);
    }
}
