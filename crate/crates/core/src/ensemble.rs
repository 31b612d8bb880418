//! Reproducible sampling of band matrices.
//!
//! Every matrix entry is a pure function of
//! `(master_seed, trial, subtrial, min(i, j), max(i, j))` through the
//! Philox4x32-10 counter-based generator, so trials parallelize without
//! coordination and a single row can be redrawn while every other entry stays
//! bit-identical. Subtrial 0 is the original sample.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::profile::{PerturbationSpec, VarianceMatrices};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// Uniform in the open interval `(0, 1)` from the top 53 bits.
#[inline]
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Gaussian,
    Rademacher,
    Uniform,
}

impl EnsembleKind {
    /// Standardized draw (mean 0, variance 1) from one Philox block.
    fn standard(self, block: [u32; 4]) -> f64 {
        let a = ((block[0] as u64) << 32) | block[1] as u64;
        let b = ((block[2] as u64) << 32) | block[3] as u64;
        match self {
            EnsembleKind::Gaussian => {
                let r = libm::sqrt(-2.0 * libm::log(open_unit(a)));
                r * libm::cos(2.0 * core::f64::consts::PI * open_unit(b))
            }
            EnsembleKind::Rademacher => {
                if a >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            EnsembleKind::Uniform => {
                let s3 = libm::sqrt(3.0);
                (2.0 * open_unit(a) - 1.0) * s3
            }
        }
    }

    /// Exact `E|xi|^p` of the standardized law.
    pub fn absolute_moment(self, p: u32) -> f64 {
        match self {
            EnsembleKind::Gaussian => {
                // E|xi|^p = (p-1)!! for even p; Gamma form otherwise.
                let pf = p as f64;
                libm::pow(2.0, pf / 2.0) * libm::tgamma((pf + 1.0) / 2.0) / libm::sqrt(core::f64::consts::PI)
            }
            EnsembleKind::Rademacher => 1.0,
            EnsembleKind::Uniform => libm::pow(3.0, p as f64 / 2.0) / (p as f64 + 1.0),
        }
    }

    /// `mu_p = (E|xi|^p)^{1/p}`
    pub fn mu(self, p: u32) -> f64 {
        libm::pow(self.absolute_moment(p), 1.0 / p as f64)
    }
}

/// Entry law together with its moment certificate for `p = 4, 6, 8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub moment_certificate: Vec<(u32, f64)>,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind) -> Self {
        Self {
            kind,
            moment_certificate: [4u32, 6, 8].iter().map(|&p| (p, kind.mu(p))).collect(),
        }
    }
}

/// Seeded access to the entries of `H_zeta^g`.
#[derive(Debug, Clone, Copy)]
pub struct Sampler<'a> {
    vars: &'a VarianceMatrices,
    pert: &'a PerturbationSpec,
    kind: EnsembleKind,
    master_seed: u64,
}

impl<'a> Sampler<'a> {
    pub fn new(vars: &'a VarianceMatrices, pert: &'a PerturbationSpec, kind: EnsembleKind, master_seed: u64) -> Self {
        Self {
            vars,
            pert,
            kind,
            master_seed,
        }
    }

    pub fn kind(&self) -> EnsembleKind {
        self.kind
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    fn key(&self) -> [u32; 2] {
        [self.master_seed as u32, (self.master_seed >> 32) as u32]
    }

    /// Standardized variable behind entry `(i, j)`.
    pub fn xi(&self, trial: u32, subtrial: u32, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let block = philox4x32_10([trial, subtrial, lo as u32, hi as u32], self.key());
        self.kind.standard(block)
    }

    /// Entry `(i, j)` of the matrix drawn from stream `subtrial`, including
    /// the diagonal shift `-g_i`.
    pub fn entry(&self, trial: u32, subtrial: u32, i: usize, j: usize) -> f64 {
        let s = self.vars.szeta()[(i, j)];
        let mut v = if s > 0.0 {
            libm::sqrt(s) * self.xi(trial, subtrial, i, j)
        } else {
            0.0
        };
        if i == j {
            v -= self.pert.g[i];
        }
        v
    }

    /// Nonzero-variance entries of row `k` drawn from stream `subtrial`,
    /// as `(column, value)` pairs in column order.
    pub fn row(&self, trial: u32, subtrial: u32, k: usize) -> Vec<(usize, f64)> {
        self.vars
            .szeta_rows()
            .row(k)
            .iter()
            .map(|&(j, _)| (j, self.entry(trial, subtrial, k, j)))
            .chain(
                // Diagonal shift survives even where the variance vanishes.
                (self.vars.szeta()[(k, k)] == 0.0).then(|| (k, -self.pert.g[k])),
            )
            .collect()
    }

    pub fn sample(&self, trial: u32) -> SampledMatrix {
        let n = self.vars.n();
        let mut h = Matrix::zeros(n, n);
        let rows = self.vars.szeta_rows();
        for i in 0..n {
            for &(j, s) in rows.row(i) {
                if j < i {
                    continue;
                }
                let v = libm::sqrt(s) * self.xi(trial, 0, i, j);
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
            h[(i, i)] -= self.pert.g[i];
        }
        SampledMatrix {
            h,
            seed: self.master_seed,
            trial,
            ensemble: EnsembleSpec::new(self.kind),
            redrawn: None,
        }
    }

    /// Copy of `base` with row and column `k` replaced by stream `subtrial`.
    pub fn resample_row(&self, base: &SampledMatrix, k: usize, subtrial: u32) -> SampledMatrix {
        let n = self.vars.n();
        let mut h = base.h.clone();
        for j in 0..n {
            h[(k, j)] = 0.0;
            h[(j, k)] = 0.0;
        }
        for (j, v) in self.row(base.trial, subtrial, k) {
            h[(k, j)] = v;
            h[(j, k)] = v;
        }
        SampledMatrix {
            h,
            seed: base.seed,
            trial: base.trial,
            ensemble: base.ensemble.clone(),
            redrawn: Some((k, subtrial)),
        }
    }
}

/// One realization of `H_zeta^g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledMatrix {
    pub h: Matrix<f64>,
    pub seed: u64,
    pub trial: u32,
    pub ensemble: EnsembleSpec,
    /// Row and stream redrawn from the original sample, if any.
    pub redrawn: Option<(usize, u32)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{BandProfile, KernelKind};

    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn moment_certificates() {
        assert!((EnsembleKind::Gaussian.absolute_moment(4) - 3.0).abs() < 1e-12);
        assert!((EnsembleKind::Gaussian.absolute_moment(6) - 15.0).abs() < 1e-10);
        assert!((EnsembleKind::Gaussian.absolute_moment(8) - 105.0).abs() < 1e-9);
        assert!((EnsembleKind::Uniform.absolute_moment(4) - 9.0 / 5.0).abs() < 1e-12);
        assert_eq!(EnsembleKind::Rademacher.mu(8), 1.0);
        let spec = EnsembleSpec::new(EnsembleKind::Gaussian);
        assert_eq!(spec.moment_certificate.len(), 3);
    }

    #[test]
    fn sample_is_symmetric_and_banded() {
        let p = BandProfile::build(40, 3, KernelKind::Uniform).unwrap();
        let v = VarianceMatrices::build(&p, 0.0).unwrap();
        let pert = PerturbationSpec::zero(40);
        let s = Sampler::new(&v, &pert, EnsembleKind::Gaussian, 9);
        let a = s.sample(2);
        assert_eq!(a, s.sample(2));
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(a.h[(i, j)], a.h[(j, i)]);
                if v.szeta()[(i, j)] == 0.0 {
                    assert_eq!(a.h[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn resampling_touches_only_one_row() {
        let p = BandProfile::build(30, 3, KernelKind::Triangular).unwrap();
        let v = VarianceMatrices::build(&p, 0.01).unwrap();
        let pert = PerturbationSpec::new(0.01, (0..30).map(|i| 0.001 * i as f64).collect()).unwrap();
        let s = Sampler::new(&v, &pert, EnsembleKind::Uniform, 77);
        let a = s.sample(0);
        assert_eq!(s.resample_row(&a, 4, 0).h, a.h);
        let b = s.resample_row(&a, 4, 3);
        let mut changed = false;
        for i in 0..30 {
            for j in 0..30 {
                if i != 4 && j != 4 {
                    assert_eq!(a.h[(i, j)].to_bits(), b.h[(i, j)].to_bits());
                } else if a.h[(i, j)] != b.h[(i, j)] {
                    changed = true;
                }
            }
        }
        assert!(changed);
    }
}
