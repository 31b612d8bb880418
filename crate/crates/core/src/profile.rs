//! Band variance profiles and the perturbation matrices built on them.
//!
//! Storage indices run over `0..N`. Storage index `s` corresponds to the
//! centered label `s + 1` reduced into `(-N/2, N/2]`, so the distinguished
//! block of size `W` is storage `0..W` and the translation-invariant kernel
//! only ever sees the circular distance between two indices.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, SparseRows};
use crate::scalar::SpectralPoint;

/// Absolute tolerance on `sum_x f(x) = 1`.
pub const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ProfileError {
    #[error("InvalidDimensions: {reason} (N = {n}, W = {w})")]
    InvalidDimensions { n: usize, w: usize, reason: &'static str },
    #[error("KernelViolation: {reason}")]
    KernelViolation { reason: &'static str },
    #[error("ZetaTooLarge: S_zeta[{i}][{j}] = {value:e} is negative")]
    ZetaTooLarge { i: usize, j: usize, value: f64 },
    #[error("InvalidPerturbation: {reason}")]
    InvalidPerturbation { reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Uniform,
    Triangular,
    TruncatedGaussian,
}

impl KernelKind {
    /// Support radius in units of `W`.
    fn radius_multiple(self) -> usize {
        match self {
            KernelKind::Uniform => 1,
            KernelKind::Triangular => 2,
            KernelKind::TruncatedGaussian => 3,
        }
    }

    fn weight(self, d: usize, w: usize) -> f64 {
        let (d, wf) = (d as f64, w as f64);
        match self {
            KernelKind::Uniform => 1.0,
            KernelKind::Triangular => 2.0 * wf + 1.0 - d,
            KernelKind::TruncatedGaussian => libm::exp(-d * d / (2.0 * wf * wf)),
        }
    }
}

/// Circular distance `|i - j|` on `Z_N`.
#[inline]
pub fn circular_distance(i: usize, j: usize, n: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

/// Storage index to centered label in `(-N/2, N/2]`.
pub fn centered_label(s: usize, n: usize) -> i64 {
    let p = s as i64 + 1;
    if 2 * p <= n as i64 {
        p
    } else {
        p - n as i64
    }
}

/// Inverse of [`centered_label`].
pub fn storage_index(label: i64, n: usize) -> usize {
    (label - 1).rem_euclid(n as i64) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandProfile {
    n: usize,
    w: usize,
    kind: KernelKind,
    /// `f` at circular distance `d`, for `d = 0..=N/2`.
    by_distance: Vec<f64>,
    support_radius: usize,
    c_lower: f64,
    c_upper: f64,
}

/// JSON form of a profile: `kernel[x]` is `f(x)` for `x = 0..=floor(C_s W)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub kind: KernelKind,
    pub c_s: f64,
    #[serde(rename = "C_s")]
    pub big_c_s: f64,
    pub kernel: Vec<f64>,
}

impl BandProfile {
    pub fn build(n: usize, w: usize, kind: KernelKind) -> Result<Self, ProfileError> {
        if w < 1 {
            return Err(ProfileError::InvalidDimensions {
                n,
                w,
                reason: "W must be at least 1",
            });
        }
        if 2 * w >= n {
            return Err(ProfileError::InvalidDimensions {
                n,
                w,
                reason: "W must be below N/2",
            });
        }
        let radius = kind.radius_multiple() * w;
        if 2 * radius + 1 > n {
            return Err(ProfileError::InvalidDimensions {
                n,
                w,
                reason: "kernel support does not fit in Z_N",
            });
        }
        let mut by_distance = alloc::vec![0.0; n / 2 + 1];
        for (d, v) in by_distance.iter_mut().enumerate().take(radius + 1) {
            *v = kind.weight(d, w);
        }
        let total: f64 = (0..n).map(|s| by_distance[circular_distance(s, 0, n)]).sum();
        for v in &mut by_distance {
            *v /= total;
        }

        let wf = w as f64;
        let c_lower = wf * by_distance[..=w].iter().copied().fold(f64::INFINITY, f64::min);
        let f_max = by_distance.iter().copied().fold(0.0, f64::max);
        let c_upper = (wf * f_max).max(radius as f64 / wf);
        let profile = Self {
            n,
            w,
            kind,
            by_distance,
            support_radius: radius,
            c_lower,
            c_upper,
        };
        profile.check_invariants()?;
        Ok(profile)
    }

    fn check_invariants(&self) -> Result<(), ProfileError> {
        let sum: f64 = (0..self.n).map(|s| self.f(s, 0)).sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(ProfileError::KernelViolation {
                reason: "kernel does not sum to one",
            });
        }
        if !(self.c_lower > 0.0) {
            return Err(ProfileError::KernelViolation {
                reason: "kernel vanishes inside the band",
            });
        }
        if !self.satisfies_band_bounds(self.c_lower, self.c_upper) {
            return Err(ProfileError::KernelViolation {
                reason: "realized constants do not bound the kernel",
            });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Realized lower constant `c_s = W min_{|x|<=W} f(x)`.
    pub fn c_s(&self) -> f64 {
        self.c_lower
    }

    /// Realized upper constant `C_s`, covering both the height and the support.
    pub fn big_c_s(&self) -> f64 {
        self.c_upper
    }

    pub fn support_radius(&self) -> usize {
        self.support_radius
    }

    /// `f(x)` for a centered label `x`.
    pub fn kernel(&self, x: i64) -> f64 {
        let d = x.unsigned_abs() as usize % self.n;
        self.by_distance[d.min(self.n - d)]
    }

    /// `s_ij = f(i - j)` for storage indices.
    #[inline]
    pub fn f(&self, i: usize, j: usize) -> f64 {
        self.by_distance[circular_distance(i, j, self.n)]
    }

    /// `f` indexed by circular distance `0..=N/2`.
    pub fn kernel_by_distance(&self) -> &[f64] {
        &self.by_distance
    }

    /// Whether `c W^-1 1{|x|<=W} <= f(x) <= C W^-1 1{|x|<=C W}` for all `x`.
    pub fn satisfies_band_bounds(&self, c: f64, big_c: f64) -> bool {
        let wf = self.w as f64;
        self.by_distance.iter().enumerate().all(|(d, &v)| {
            let lower = if d <= self.w { c / wf } else { 0.0 };
            let upper = if d as f64 <= big_c * wf { big_c / wf } else { 0.0 };
            // Relative slack for the rounding in the normalization.
            lower <= v * (1.0 + 1e-12) && v <= upper * (1.0 + 1e-12)
        })
    }

    pub fn s0(&self) -> Matrix<f64> {
        Matrix::from_fn(self.n, self.n, |i, j| self.f(i, j))
    }

    pub fn to_record(&self) -> ProfileRecord {
        let reach = libm::floor(self.c_upper * self.w as f64) as usize;
        let reach = reach.min(self.n / 2);
        ProfileRecord {
            n: self.n,
            w: self.w,
            kind: self.kind,
            c_s: self.c_lower,
            big_c_s: self.c_upper,
            kernel: self.by_distance[..=reach].to_vec(),
        }
    }
}

/// `S_0`, `Sigma` and `S_zeta = S_0 - zeta Sigma`.
#[derive(Debug, Clone)]
pub struct VarianceMatrices {
    profile: BandProfile,
    zeta: f64,
    s0: Matrix<f64>,
    szeta: Matrix<f64>,
    szeta_rows: SparseRows<f64>,
}

impl VarianceMatrices {
    pub fn build(profile: &BandProfile, zeta: f64) -> Result<Self, ProfileError> {
        if !(zeta >= 0.0) || !zeta.is_finite() {
            return Err(ProfileError::InvalidPerturbation {
                reason: "zeta must be finite and nonnegative",
            });
        }
        let s0 = profile.s0();
        let mut szeta = s0.clone();
        let w = profile.w();
        if zeta > 0.0 {
            for i in 0..w {
                for j in 0..w {
                    let v = s0[(i, j)] - zeta * sigma_entry(i, j, w);
                    if v < 0.0 {
                        return Err(ProfileError::ZetaTooLarge { i, j, value: v });
                    }
                    szeta[(i, j)] = v;
                }
            }
        }
        let szeta_rows = SparseRows::from_dense(&szeta);
        Ok(Self {
            profile: profile.clone(),
            zeta,
            s0,
            szeta,
            szeta_rows,
        })
    }

    pub fn profile(&self) -> &BandProfile {
        &self.profile
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }

    pub fn w(&self) -> usize {
        self.profile.w()
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn s0(&self) -> &Matrix<f64> {
        &self.s0
    }

    pub fn szeta(&self) -> &Matrix<f64> {
        &self.szeta
    }

    /// Nonzero pattern of `S_zeta` by rows.
    pub fn szeta_rows(&self) -> &SparseRows<f64> {
        &self.szeta_rows
    }

    /// Dense `Sigma`.
    pub fn sigma(&self) -> Matrix<f64> {
        let w = self.w();
        Matrix::from_fn(self.n(), self.n(), |i, j| {
            if i < w && j < w {
                sigma_entry(i, j, w)
            } else {
                0.0
            }
        })
    }

    /// `Sigma e`, the row sums of `Sigma`.
    pub fn sigma_row_sums(&self) -> Vec<f64> {
        let w = self.w();
        let wf = w as f64;
        (0..self.n())
            .map(|i| if i < w { 1.0 + 1.0 / wf } else { 0.0 })
            .collect()
    }

    /// `Sigma v` without forming `Sigma`.
    pub fn sigma_apply<T>(&self, v: &[T]) -> Vec<T>
    where
        T: crate::linalg::Scalar,
    {
        let w = self.w();
        let wf = w as f64;
        let mut block_sum = T::zero();
        for &x in &v[..w] {
            block_sum += x;
        }
        (0..self.n())
            .map(|i| {
                if i < w {
                    (block_sum + v[i]) * T::from_f64(1.0 / wf)
                } else {
                    T::zero()
                }
            })
            .collect()
    }
}

#[inline]
fn sigma_entry(i: usize, j: usize, w: usize) -> f64 {
    if i == j {
        2.0 / w as f64
    } else {
        1.0 / w as f64
    }
}

/// The scalar shift `zeta` and the diagonal potential `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub zeta: f64,
    pub g: Vec<f64>,
}

impl PerturbationSpec {
    pub fn new(zeta: f64, g: Vec<f64>) -> Result<Self, ProfileError> {
        if !(zeta >= 0.0) || !zeta.is_finite() {
            return Err(ProfileError::InvalidPerturbation {
                reason: "zeta must be finite and nonnegative",
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(ProfileError::InvalidPerturbation {
                reason: "g must be finite",
            });
        }
        Ok(Self { zeta, g })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            zeta: 0.0,
            g: alloc::vec![0.0; n],
        }
    }

    pub fn g_norm_inf(&self) -> f64 {
        self.g.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Advisory check of the spectral window and bandwidth conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub log_n_w: f64,
    /// `eta_* = N^-eps_*`
    pub eta_lower: f64,
    /// `eta^* = N^-eps^*`
    pub eta_upper: f64,
    /// `r = N^(-eps_* + 3 eps^*)`
    pub r: f64,
    /// `T = N^(-eps_* + eps^*)`
    pub t_param: f64,
    pub exponents_ok: bool,
    pub im_z_in_window: bool,
    pub re_z_near_e: bool,
    pub zeta_small: bool,
    pub g_small: bool,
    pub spectral_window_ok: bool,
    pub weak_bandwidth_ok: bool,
    pub strong_bandwidth_ok: bool,
}

/// Relative slack applied at the boundaries of every advisory inequality.
const REGIME_SLACK: f64 = 1e-12;

fn le(a: f64, b: f64) -> bool {
    a <= b + REGIME_SLACK * b.abs().max(a.abs())
}

pub fn validate_regime(
    profile: &BandProfile,
    point: &SpectralPoint,
    pert: &PerturbationSpec,
    eps_star: f64,
    eps_upstar: f64,
) -> RegimeReport {
    let nf = profile.n() as f64;
    let wf = profile.w() as f64;
    let pow = |x: f64| libm::pow(nf, x);
    let eta_lower = pow(-eps_star);
    let eta_upper = pow(-eps_upstar);
    let r = pow(-eps_star + 3.0 * eps_upstar);
    let t_param = pow(-eps_star + eps_upstar);
    let z = point.z();
    let im_z_in_window = le(eta_lower, z.im) && le(z.im, eta_upper);
    let re_z_near_e = le((z.re - point.e()).abs(), r);
    let zeta_small = le(pert.zeta, t_param);
    let g_small = le(pert.g_norm_inf(), libm::pow(wf, -0.75));
    let log_n_w = libm::log(wf) / libm::log(nf);
    let weak = (6.0 / 7.0 + eps_upstar).max(0.75 + 0.75 * eps_star + eps_upstar);
    let strong = (0.75 + eps_upstar).max(0.5 + eps_star + eps_upstar);
    RegimeReport {
        log_n_w,
        eta_lower,
        eta_upper,
        r,
        t_param,
        exponents_ok: eps_upstar > 0.0 && le(eps_upstar, eps_star / 20.0),
        im_z_in_window,
        re_z_near_e,
        zeta_small,
        g_small,
        spectral_window_ok: im_z_in_window && re_z_near_e && zeta_small && g_small,
        weak_bandwidth_ok: le(weak, log_n_w),
        strong_bandwidth_ok: le(strong, log_n_w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn uniform_small_example() {
        let p = BandProfile::build(10, 2, KernelKind::Uniform).unwrap();
        for x in -2..=2 {
            assert!((p.kernel(x) - 0.2).abs() < 1e-15);
        }
        assert_eq!(p.kernel(3), 0.0);
        assert!(p.satisfies_band_bounds(1.0 / 3.0, 1.0));
        assert!((p.c_s() - 0.4).abs() < 1e-12);
        assert_eq!(p.big_c_s(), 1.0);
        let s0 = p.s0();
        for i in 0..10 {
            assert!((s0.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_checks() {
        assert!(matches!(
            BandProfile::build(10, 5, KernelKind::Uniform),
            Err(ProfileError::InvalidDimensions { .. })
        ));
        assert!(matches!(
            BandProfile::build(10, 0, KernelKind::Uniform),
            Err(ProfileError::InvalidDimensions { .. })
        ));
        assert!(matches!(
            BandProfile::build(10, 4, KernelKind::Triangular),
            Err(ProfileError::InvalidDimensions { .. })
        ));
    }

    #[test]
    fn index_bijection_round_trips() {
        for n in [7usize, 10] {
            for s in 0..n {
                let p = centered_label(s, n);
                assert!(2 * p <= n as i64 && 2 * p > -(n as i64));
                assert_eq!(storage_index(p, n), s);
            }
        }
        assert_eq!(centered_label(0, 10), 1);
        assert_eq!(centered_label(4, 10), 5);
        assert_eq!(centered_label(5, 10), -4);
    }

    #[test]
    fn zeta_examples() {
        let p = BandProfile::build(10, 2, KernelKind::Uniform).unwrap();
        let v0 = VarianceMatrices::build(&p, 0.0).unwrap();
        assert_eq!(v0.szeta(), v0.s0());
        let v = VarianceMatrices::build(&p, 0.1).unwrap();
        assert!((v.szeta()[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((v.szeta()[(0, 1)] - 0.15).abs() < 1e-15);
        assert!(matches!(
            VarianceMatrices::build(&p, 1.0),
            Err(ProfileError::ZetaTooLarge { .. })
        ));
    }

    #[test]
    fn sigma_apply_matches_dense() {
        let p = BandProfile::build(16, 3, KernelKind::Triangular).unwrap();
        let v = VarianceMatrices::build(&p, 0.05).unwrap();
        let x: Vec<f64> = (0..16).map(|i| i as f64 - 3.0).collect();
        let dense = v.sigma().matvec(&x);
        let fast = v.sigma_apply(&x);
        for (a, b) in dense.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-14);
        }
        let ones = alloc::vec![1.0; 16];
        assert_eq!(v.sigma_apply(&ones)[0], v.sigma_row_sums()[0]);
    }

    #[test]
    fn regime_examples() {
        let p = BandProfile::build(4096, 512, KernelKind::Uniform).unwrap();
        let pt = SpectralPoint::diagonal(Complex64::new(0.0, 0.5)).unwrap();
        let rep = validate_regime(&p, &pt, &PerturbationSpec::zero(4096), 0.2, 0.01);
        assert!((rep.log_n_w - 0.75).abs() < 1e-12);
        assert!(!rep.strong_bandwidth_ok);
        assert!(!rep.weak_bandwidth_ok);

        let eta = libm::pow(4096.0, -0.2);
        let pt = SpectralPoint::diagonal(Complex64::new(0.0, eta)).unwrap();
        let rep = validate_regime(&p, &pt, &PerturbationSpec::zero(4096), 0.2, 0.01);
        assert!(rep.spectral_window_ok);

        let mut pert = PerturbationSpec::zero(4096);
        pert.g[7] = 2.0 * libm::pow(512.0, -0.75);
        let rep = validate_regime(&p, &pt, &pert, 0.2, 0.01);
        assert!(!rep.g_small);
        assert!(!rep.spectral_window_ok);
    }
}
