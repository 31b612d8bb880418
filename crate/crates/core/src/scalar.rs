//! Semicircle Stieltjes transform and spectral points.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Imaginary part substituted for a real argument `E + i0+`.
///
/// Every downstream tolerance is at least two orders of magnitude above the
/// error this regularization introduces.
pub const BOUNDARY_ETA: f64 = 1e-12;

/// Default distance kept from the spectral edges `±2`.
pub const DEFAULT_KAPPA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ScalarError {
    #[error("EdgePoint: real argument {re} is not inside the bulk (-2, 2)")]
    EdgePoint { re: f64 },
    #[error("InvalidPoint: {reason}")]
    InvalidPoint { reason: &'static str },
    #[error("IdentityViolation: bulk identity off by {deviation:e} at a = {a}")]
    IdentityViolation { a: f64, deviation: f64 },
}

/// The two spectral parameters `z` (first `W` indices) and `z~` (the rest).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    z: Complex64,
    ztilde: Complex64,
    kappa: f64,
}

impl SpectralPoint {
    pub fn new(z: Complex64, ztilde: Complex64) -> Result<Self, ScalarError> {
        Self::with_kappa(z, ztilde, DEFAULT_KAPPA)
    }

    pub fn with_kappa(z: Complex64, ztilde: Complex64, kappa: f64) -> Result<Self, ScalarError> {
        if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
            return Err(ScalarError::InvalidPoint {
                reason: "Im z must be positive and finite",
            });
        }
        if !(ztilde.im >= 0.0) || !ztilde.re.is_finite() || !ztilde.im.is_finite() {
            return Err(ScalarError::InvalidPoint {
                reason: "Im z~ must be nonnegative and finite",
            });
        }
        if !(kappa > 0.0 && kappa < 2.0) {
            return Err(ScalarError::InvalidPoint {
                reason: "kappa must lie in (0, 2)",
            });
        }
        if ztilde.re.abs() >= 2.0 - kappa {
            return Err(ScalarError::InvalidPoint {
                reason: "Re z~ must satisfy |e| < 2 - kappa",
            });
        }
        Ok(Self { z, ztilde, kappa })
    }

    /// `z = z~`, the unperturbed diagonal case.
    pub fn diagonal(z: Complex64) -> Result<Self, ScalarError> {
        Self::new(z, z)
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn ztilde(&self) -> Complex64 {
        self.ztilde
    }

    /// `e = Re z~`
    pub fn e(&self) -> f64 {
        self.ztilde.re
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Spectral parameter carried by storage index `i` when the block has size `w`.
    pub fn z_at(&self, i: usize, w: usize) -> Complex64 {
        if i < w {
            self.z
        } else {
            self.ztilde
        }
    }

    /// `m_sc(z~ + i0+)`
    pub fn m_tilde(&self) -> Complex64 {
        // The constructor already guarantees |Re z~| < 2.
        msc(self.ztilde).expect("bulk point")
    }

    pub fn min_im(&self) -> f64 {
        self.z.im.min(self.ztilde.im)
    }
}

/// `m_sc(z)`: the root of `m^2 + z m + 1 = 0` with `Im m >= 0`.
///
/// A real argument is read as `z + i0+` and evaluated at `Im z = BOUNDARY_ETA`.
pub fn msc(z: Complex64) -> Result<Complex64, ScalarError> {
    let z = if z.im == 0.0 {
        if z.re.abs() >= 2.0 || !z.re.is_finite() {
            return Err(ScalarError::EdgePoint { re: z.re });
        }
        Complex64::new(z.re, BOUNDARY_ETA)
    } else if z.im < 0.0 {
        return Err(ScalarError::InvalidPoint {
            reason: "m_sc is evaluated on the closed upper half plane only",
        });
    } else {
        z
    };
    let disc = (z * z - 4.0).sqrt();
    // Larger-modulus root first, the other from the product of roots being 1.
    let big = if (z + disc).norm() >= (z - disc).norm() {
        -(z + disc) / 2.0
    } else {
        -(z - disc) / 2.0
    };
    let small = big.inv();
    let m = if small.im >= 0.0 { small } else { big };
    Ok(m)
}

/// `dm_sc/dz = -m / (2m + z)`
pub fn msc_derivative(z: Complex64) -> Result<Complex64, ScalarError> {
    let m = msc(z)?;
    let z = if z.im == 0.0 {
        Complex64::new(z.re, BOUNDARY_ETA)
    } else {
        z
    };
    Ok(-m / (2.0 * m + z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkIdentities {
    /// `Re[m / (1 - m^2)]`, expected 0.
    pub re_ratio: f64,
    /// `Im[m / (1 - m^2)]`, expected `1/sqrt(4 - a^2)`.
    pub im_ratio: f64,
    /// `Re[m^2 / (1 - m^2)]`, expected `-1/2`.
    pub re_sq_ratio: f64,
}

/// Boundary-value ratios of `m = m_sc(a + i0+)` for bulk `a`, checked
/// against their closed forms to `1e-10`.
pub fn msc_bulk_identities(a: f64) -> Result<BulkIdentities, ScalarError> {
    msc_bulk_identities_with_kappa(a, DEFAULT_KAPPA)
}

pub fn msc_bulk_identities_with_kappa(a: f64, kappa: f64) -> Result<BulkIdentities, ScalarError> {
    if !(a.abs() < 2.0 - kappa) {
        return Err(ScalarError::EdgePoint { re: a });
    }
    let m = msc(Complex64::new(a, 0.0))?;
    let denom = 1.0 - m * m;
    let ratio = m / denom;
    let got = [ratio.re, ratio.im, (m * m / denom).re];
    let expected = [0.0, 1.0 / libm::sqrt(4.0 - a * a), -0.5];
    let deviation = got.iter().zip(expected).map(|(g, e)| (g - e).abs()).fold(0.0, f64::max);
    if deviation > 1e-10 {
        return Err(ScalarError::IdentityViolation { a, deviation });
    }
    Ok(BulkIdentities {
        re_ratio: got[0],
        im_ratio: got[1],
        re_sq_ratio: got[2],
    })
}
