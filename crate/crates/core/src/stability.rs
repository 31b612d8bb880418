//! Stability operators `(1 - m^2 S_0)^{-1}` and `(1 - S|M|^2)^{-1} S`, the
//! energy identity behind their lower bound, and the spectral gap of the
//! periodic hopping form.

use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{condition_estimate, LinalgError, Lu, Matrix, SymmetricEigen};
use crate::profile::{circular_distance, VarianceMatrices};
use crate::vde::DysonSolution;

/// Condition estimates above this are treated as "1 in the spectrum".
pub const CONDITION_CUTOFF: f64 = 1e12;

/// Regularization used for the shifted Neumann series.
pub const DEFAULT_TAU: f64 = 0.1;

/// Default far-field radius in units of `W`.
pub const DEFAULT_FAR_MULTIPLE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum StabilityError {
    #[error("SingularSolve: {0}")]
    Factorization(LinalgError),
    #[error("SingularSolve: condition estimate {condition:e} exceeds {CONDITION_CUTOFF:e}")]
    IllConditioned { condition: f64 },
    #[error("InvalidDimensions: W = {w} must satisfy 1 <= W < Tlen/2 = {half}")]
    InvalidDimensions { w: usize, half: usize },
    #[error("EigensolveFailure: {0}")]
    EigensolveFailure(LinalgError),
    #[error("InvalidInput: {reason}")]
    InvalidInput { reason: &'static str },
}

/// `(1 - m^2 S_0)^{-1}` together with its structural certificates.
#[derive(Debug, Clone)]
pub struct InverseStability {
    pub inverse: Matrix<Complex64>,
    /// `max_i |[inverse]_ii - 1|`
    pub diag_deviation: f64,
    /// Largest entry at circular distance beyond `far_radius`.
    pub far_max: f64,
    pub far_radius: usize,
    /// `||((m^2 S_0 + tau)/(1 + tau))^2||_inf`
    pub tau_square_norm: f64,
    pub tau: f64,
    /// Max of `|[inverse - I]_ij|` over pairs at each circular distance.
    pub decay_table: Vec<f64>,
}

fn one_minus_m2_s0(m: Complex64, vars: &VarianceMatrices) -> Matrix<Complex64> {
    let m2 = m * m;
    let s0 = vars.s0();
    Matrix::from_fn(vars.n(), vars.n(), |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        Complex64::new(d, 0.0) - m2 * s0[(i, j)]
    })
}

/// Dense inverse of `1 - m^2 S_0` with the far-field radius `far_multiple * W`.
pub fn inverse_stability(
    m: Complex64,
    vars: &VarianceMatrices,
    far_multiple: usize,
    tau: f64,
) -> Result<InverseStability, StabilityError> {
    let n = vars.n();
    let lu = Lu::factor(one_minus_m2_s0(m, vars)).map_err(StabilityError::Factorization)?;
    let inverse = lu.inverse();
    let far_radius = far_multiple * vars.w();
    let mut decay_table = alloc::vec![0.0f64; n / 2 + 1];
    let mut diag_deviation = 0.0f64;
    for i in 0..n {
        let row = inverse.row(i);
        for (j, v) in row.iter().enumerate() {
            let d = circular_distance(i, j, n);
            let dev = if i == j { (v - 1.0).norm() } else { v.norm() };
            if i == j {
                diag_deviation = diag_deviation.max(dev);
            }
            decay_table[d] = decay_table[d].max(dev);
        }
    }
    let far_max = decay_table.iter().skip(far_radius + 1).copied().fold(0.0, f64::max);
    Ok(InverseStability {
        inverse,
        diag_deviation,
        far_max,
        far_radius,
        tau_square_norm: tau_square_norm(m, vars, tau),
        tau,
        decay_table,
    })
}

/// `||((m^2 S_0 + tau)/(1 + tau))^2||_inf`.
///
/// `S_0` is circulant, so the square is too and every row has the same
/// absolute sum; the first row is obtained by a circular self-convolution.
pub fn tau_square_norm(m: Complex64, vars: &VarianceMatrices, tau: f64) -> f64 {
    let n = vars.n();
    let m2 = m * m;
    let f = vars.profile().kernel_by_distance();
    let radius = vars.profile().support_radius();
    // Circulant symbol a(d), d in 0..n (offset j - i mod n).
    let mut a = alloc::vec![Complex64::new(0.0, 0.0); n];
    for (d, slot) in a.iter_mut().enumerate() {
        let dist = d.min(n - d);
        *slot = m2 * f[dist];
    }
    a[0] += tau;
    for v in &mut a {
        *v /= 1.0 + tau;
    }
    let support: Vec<usize> = (0..n).filter(|&d| d.min(n - d) <= radius).collect();
    let mut sq = alloc::vec![Complex64::new(0.0, 0.0); n];
    for &p in &support {
        for &q in &support {
            sq[(p + q) % n] += a[p] * a[q];
        }
    }
    sq.iter().map(|v| v.norm()).sum()
}

/// First column of `(1 - m^2 S_0)^{-1} - I`, folded into per-distance maxima.
///
/// The operator is circulant, so one column determines every entry.
pub fn circulant_decay_table(m: Complex64, vars: &VarianceMatrices) -> Result<Vec<f64>, StabilityError> {
    let n = vars.n();
    let lu = Lu::factor(one_minus_m2_s0(m, vars)).map_err(StabilityError::Factorization)?;
    let mut e0 = alloc::vec![Complex64::new(0.0, 0.0); n];
    e0[0] = Complex64::new(1.0, 0.0);
    let col = lu.solve(&e0);
    let mut table = alloc::vec![0.0f64; n / 2 + 1];
    for (i, v) in col.iter().enumerate() {
        let d = circular_distance(i, 0, n);
        let dev = if i == 0 { (v - 1.0).norm() } else { v.norm() };
        table[d] = table[d].max(dev);
    }
    Ok(table)
}

/// Factored `K = 1 - S|M|^2` for column solves of `K^{-1} S`.
#[derive(Debug, Clone)]
pub struct TStabilityOperator<'a> {
    vars: &'a VarianceMatrices,
    abs_m2: Vec<f64>,
    lu: Lu<f64>,
    pub condition: f64,
}

impl<'a> TStabilityOperator<'a> {
    pub fn new(vars: &'a VarianceMatrices, big_m: &[Complex64]) -> Result<Self, StabilityError> {
        let n = vars.n();
        if big_m.len() != n {
            return Err(StabilityError::InvalidInput {
                reason: "M must have length N",
            });
        }
        let abs_m2: Vec<f64> = big_m.iter().map(|v| v.norm_sqr()).collect();
        let k = k_matrix(vars, &abs_m2);
        let lu = Lu::factor(k.clone()).map_err(StabilityError::Factorization)?;
        let condition = condition_estimate(&k, &lu);
        if !(condition <= CONDITION_CUTOFF) {
            return Err(StabilityError::IllConditioned { condition });
        }
        Ok(Self {
            vars,
            abs_m2,
            lu,
            condition,
        })
    }

    pub fn abs_m2(&self) -> &[f64] {
        &self.abs_m2
    }

    /// `K^{-1} B` for a dense block `B`.
    pub fn solve_block(&self, b: &Matrix<f64>) -> Matrix<f64> {
        self.lu.solve_matrix(b)
    }

    /// Columns `cols` of `R = K^{-1} S`, returned as a row-major `N x cols.len()` block.
    pub fn columns(&self, cols: core::ops::Range<usize>) -> Matrix<f64> {
        let n = self.vars.n();
        let s = self.vars.szeta();
        let rhs = Matrix::from_fn(n, cols.len(), |i, j| s[(i, cols.start + j)]);
        self.lu.solve_matrix(&rhs)
    }

    /// `||K U - S e_cols||_max` for a block from [`Self::columns`].
    pub fn column_residual(&self, cols: core::ops::Range<usize>, block: &Matrix<f64>) -> f64 {
        let n = self.vars.n();
        let rows = self.vars.szeta_rows();
        let s = self.vars.szeta();
        let width = cols.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut acc = block.row(i).to_vec();
            for &(k, v) in rows.row(i) {
                let coeff = v * self.abs_m2[k];
                for (a, &u) in acc.iter_mut().zip(block.row(k)) {
                    *a -= coeff * u;
                }
            }
            for (c, a) in acc.iter().enumerate().take(width) {
                worst = worst.max((a - s[(i, cols.start + c)]).abs());
            }
        }
        worst
    }

    /// The full operator `(1 - S|M|^2)^{-1} S`.
    pub fn full(&self) -> Matrix<f64> {
        self.columns(0..self.vars.n())
    }
}

fn k_matrix(vars: &VarianceMatrices, abs_m2: &[f64]) -> Matrix<f64> {
    let s = vars.szeta();
    Matrix::from_fn(vars.n(), vars.n(), |i, j| {
        let d = if i == j { 1.0 } else { 0.0 };
        d - s[(i, j)] * abs_m2[j]
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `||(1 - S|M|^2)^{-1} S||_max`
    pub max_norm: f64,
    /// `1/(W Im z) + N/W^2`
    pub bound_rhs: f64,
    /// `max_norm / bound_rhs`
    pub fitted_c: f64,
    /// `max_j ||K u_j - S e_j||_inf`
    pub column_residual: f64,
    pub condition: f64,
    /// Per-distance maxima of `|(1 - m^2 S_0)^{-1} - I|`.
    pub decay_table: Vec<f64>,
}

/// `1/(W Im z) + N/W^2`
pub fn t_stability_bound(n: usize, w: usize, im_z: f64) -> f64 {
    let (nf, wf) = (n as f64, w as f64);
    1.0 / (wf * im_z) + nf / (wf * wf)
}

/// Sequential evaluation of the full report; callers wanting parallel column
/// solves can drive [`TStabilityOperator::columns`] directly and fold the maxima.
pub fn t_stability_max_norm(vars: &VarianceMatrices, sol: &DysonSolution) -> Result<StabilityReport, StabilityError> {
    let op = TStabilityOperator::new(vars, &sol.big_m)?;
    let n = vars.n();
    let chunk = 256usize;
    let mut max_norm = 0.0f64;
    let mut column_residual = 0.0f64;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let block = op.columns(start..end);
        max_norm = max_norm.max(block.max_abs());
        column_residual = column_residual.max(op.column_residual(start..end, &block));
        start = end;
    }
    let bound_rhs = t_stability_bound(n, vars.w(), sol.point.z().im);
    let decay_table = circulant_decay_table(sol.m, vars)?;
    Ok(StabilityReport {
        max_norm,
        bound_rhs,
        fitted_c: max_norm / bound_rhs,
        column_residual,
        condition: op.condition,
        decay_table,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForm {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / max(|lhs|, |rhs|, 1)`
    pub relative_error: f64,
}

/// Energy identity for a real vector `u`:
///
/// `sum (|M_i|^-2 - 1) u_i^2 + zeta (1 + 1/W) sum_{i<W} u_i^2 + 1/2 sum S_ij (u_i - u_j)^2
///  = (u, |M|^-2 v)`, `v = (1 - |M|^2 S) u`, with `S = S_zeta`.
pub fn quadratic_form_identity(
    u: &[f64],
    vars: &VarianceMatrices,
    big_m: &[Complex64],
) -> Result<QuadraticForm, StabilityError> {
    let n = vars.n();
    if u.len() != n || big_m.len() != n {
        return Err(StabilityError::InvalidInput {
            reason: "u and M must have length N",
        });
    }
    let w = vars.w();
    let wf = w as f64;
    let abs_m2: Vec<f64> = big_m.iter().map(|v| v.norm_sqr()).collect();
    let rows = vars.szeta_rows();

    let mut lhs = 0.0;
    for i in 0..n {
        lhs += (1.0 / abs_m2[i] - 1.0) * u[i] * u[i];
    }
    let block: f64 = u[..w].iter().map(|v| v * v).sum();
    lhs += vars.zeta() * (1.0 + 1.0 / wf) * block;
    let mut dirichlet = 0.0;
    for i in 0..n {
        for &(j, s) in rows.row(i) {
            let d = u[i] - u[j];
            dirichlet += s * d * d;
        }
    }
    lhs += 0.5 * dirichlet;

    let su = rows.matvec(u);
    let mut rhs = 0.0;
    for i in 0..n {
        let v = u[i] - abs_m2[i] * su[i];
        rhs += u[i] * v / abs_m2[i];
    }
    let relative_error = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);
    Ok(QuadraticForm {
        lhs,
        rhs,
        relative_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGap {
    pub tlen: usize,
    pub w: usize,
    pub log_n5: f64,
    /// Second-smallest eigenvalue of the hopping form by eigensolve.
    pub e1_eig: f64,
    /// `min_{p != 0} (1/(W L)) sum_{|k|<=W} 2(1 - cos(p k))`, `L = log_n5`.
    pub e1_fourier: f64,
    /// Fourier index `n` (with `p = 2 pi n / Tlen`) attaining the minimum.
    pub argmin_mode: usize,
    pub smallest_eig: f64,
    /// Overlap of the lowest eigenvector with the normalized constant vector.
    pub ground_overlap: f64,
    /// `e1_eig / (W^2 / (Tlen^2 L))`
    pub implied_c: f64,
    pub relative_mismatch: f64,
}

/// Hopping-form energy of Fourier mode `n`.
pub fn hopping_mode_energy(tlen: usize, w: usize, log_n5: f64, mode: usize) -> f64 {
    let p = 2.0 * core::f64::consts::PI * mode as f64 / tlen as f64;
    let mut acc = 0.0;
    for k in 1..=w {
        acc += 2.0 * 2.0 * (1.0 - libm::cos(p * k as f64));
    }
    acc / (w as f64 * log_n5)
}

/// Matrix of the form `(u, F v) = sum_{i,j} a_ij (u_i - u_j)(v_i - v_j)`,
/// i.e. `2 (D - A)` for the symmetric weights `a`.
fn dirichlet_matrix(tlen: usize, weight: impl Fn(usize, usize) -> f64) -> Matrix<f64> {
    let mut f = Matrix::zeros(tlen, tlen);
    for i in 0..tlen {
        for j in 0..tlen {
            if i == j {
                continue;
            }
            let a = weight(i, j);
            if a != 0.0 {
                f[(i, j)] -= 2.0 * a;
                f[(i, i)] += 2.0 * a;
            }
        }
    }
    f
}

/// Periodic hopping form over `|i - j|_T <= W` with weight `1/(W log_n5)`.
pub fn hopping_form(tlen: usize, w: usize, log_n5: f64) -> Matrix<f64> {
    let c = 1.0 / (w as f64 * log_n5);
    dirichlet_matrix(tlen, |i, j| if circular_distance(i, j, tlen) <= w { c } else { 0.0 })
}

/// Remainder form with weights `1{|i-j| <= W}/W - 1{|i-j|_T <= W}/(W log_n5)`
/// (first term non-periodic).
pub fn remainder_form(tlen: usize, w: usize, log_n5: f64) -> Matrix<f64> {
    let wf = w as f64;
    dirichlet_matrix(tlen, |i, j| {
        let linear = if i.abs_diff(j) <= w { 1.0 / wf } else { 0.0 };
        let periodic = if circular_distance(i, j, tlen) <= w {
            1.0 / (wf * log_n5)
        } else {
            0.0
        };
        linear - periodic
    })
}

fn check_gap_dims(tlen: usize, w: usize) -> Result<(), StabilityError> {
    if w < 1 || 2 * w >= tlen {
        return Err(StabilityError::InvalidDimensions { w, half: tlen / 2 });
    }
    Ok(())
}

pub fn spectral_gap(tlen: usize, w: usize, log_n5: f64) -> Result<SpectralGap, StabilityError> {
    check_gap_dims(tlen, w)?;
    if !(log_n5 > 0.0) {
        return Err(StabilityError::InvalidInput {
            reason: "log_n5 must be positive",
        });
    }
    let form = hopping_form(tlen, w, log_n5);
    let eig = SymmetricEigen::new(&form).map_err(StabilityError::EigensolveFailure)?;
    let e1_eig = eig.values[1];
    // Modes n and Tlen - n coincide, so only 1..=Tlen/2 is scanned.
    let (argmin_mode, e1_fourier) = (1..=tlen / 2)
        .map(|k| (k, hopping_mode_energy(tlen, w, log_n5, k)))
        .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    let ground = eig.vectors.column(0);
    let norm = libm::sqrt(tlen as f64);
    let ground_overlap = ground.iter().map(|v| v / norm).sum::<f64>().abs();
    let shape = (w * w) as f64 / ((tlen * tlen) as f64 * log_n5);
    Ok(SpectralGap {
        tlen,
        w,
        log_n5,
        e1_eig,
        e1_fourier,
        argmin_mode,
        smallest_eig: eig.values[0],
        ground_overlap,
        implied_c: e1_eig / shape,
        relative_mismatch: (e1_eig - e1_fourier).abs() / e1_fourier.max(1.0),
    })
}

/// Smallest eigenvalue of [`remainder_form`].
pub fn remainder_min_eigenvalue(tlen: usize, w: usize, log_n5: f64) -> Result<f64, StabilityError> {
    check_gap_dims(tlen, w)?;
    let eig = SymmetricEigen::new(&remainder_form(tlen, w, log_n5)).map_err(StabilityError::EigensolveFailure)?;
    Ok(eig.values[0])
}

/// Default `log_n5` for remainder positivity at desk sizes: `2 Tlen / W`.
pub fn default_remainder_log_n5(tlen: usize, w: usize) -> f64 {
    2.0 * tlen as f64 / w as f64
}
