//! Vector self-consistent equation
//!
//! `1/M_i = -z_i - g_i - (S_zeta M)_i`
//!
//! solved around the constant solution `m = m_sc(z~)` by the contraction
//! `x -> (1 - m^2 S_0)^{-1} [c + q(x) - zeta m^2 Sigma x]` with `M = m + x` and
//! `q(x) = x^2 / (m + x)`.

use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{LinalgError, Lu, Matrix};
use crate::profile::{centered_label, PerturbationSpec, VarianceMatrices};
use crate::scalar::{msc, ScalarError, SpectralPoint};

/// Consecutive expanding steps tolerated before declaring divergence.
const EXPANSION_PATIENCE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum VdeError {
    #[error(
        "NonContraction: iterate differences grew for {EXPANSION_PATIENCE} consecutive steps (iteration {iteration})"
    )]
    NonContraction { iteration: usize },
    #[error("MaxIterations: residual {residual:e} after {iterations} iterations")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("SingularStability: (1 - m^2 S_0) could not be factored: {0}")]
    SingularStability(LinalgError),
    #[error("DegenerateInputs: input distance {distance:e} is below 1e-14")]
    DegenerateInputs { distance: f64 },
    #[error("FlatProfile: unperturbed inputs leave nothing to fit")]
    FlatProfile,
    #[error("InvalidInput: {reason}")]
    InvalidInput { reason: &'static str },
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Stop once the equation residual falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Advisory size bound on `zeta + ||g|| + |z - z~|`.
    pub contraction_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 500,
            contraction_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DysonSolution {
    pub point: SpectralPoint,
    pub zeta: f64,
    pub g: Vec<f64>,
    pub w: usize,
    /// `m_sc(z~ + i0+)`
    pub m: Complex64,
    /// The solution vector `M`.
    pub big_m: Vec<Complex64>,
    /// `M - m`
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub residual: f64,
    /// Last observed ratio of successive iterate differences.
    pub contraction_rate: f64,
    /// Whether the inputs were inside the configured contraction threshold.
    pub within_threshold: bool,
}

/// JSON form of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub point: SpectralPoint,
    pub pert: PerturbationSpec,
    pub residual: f64,
    pub iterations: usize,
    #[serde(rename = "M")]
    pub big_m: Vec<[f64; 2]>,
}

impl DysonSolution {
    pub fn n(&self) -> usize {
        self.big_m.len()
    }

    pub fn x_norm_inf(&self) -> f64 {
        self.x.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    pub fn g_norm_inf(&self) -> f64 {
        self.g.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// `|z - z~| + zeta + ||g||_inf`
    pub fn perturbation_size(&self) -> f64 {
        (self.point.z() - self.point.ztilde()).norm() + self.zeta + self.g_norm_inf()
    }

    /// `min_i Im M_i`, a diagnostic only.
    pub fn min_im(&self) -> f64 {
        self.big_m.iter().fold(f64::INFINITY, |a, v| a.min(v.im))
    }

    pub fn to_record(&self) -> SolutionRecord {
        SolutionRecord {
            point: self.point,
            pert: PerturbationSpec {
                zeta: self.zeta,
                g: self.g.clone(),
            },
            residual: self.residual,
            iterations: self.iterations,
            big_m: self.big_m.iter().map(|v| [v.re, v.im]).collect(),
        }
    }
}

/// Factored `(1 - m^2 S_0)` for one value of `z~`, reusable across solves.
#[derive(Debug, Clone)]
pub struct DysonSolver<'a> {
    vars: &'a VarianceMatrices,
    ztilde: Complex64,
    m: Complex64,
    stability: Lu<Complex64>,
}

impl<'a> DysonSolver<'a> {
    pub fn new(vars: &'a VarianceMatrices, ztilde: Complex64) -> Result<Self, VdeError> {
        let m = msc(ztilde)?;
        let m2 = m * m;
        let s0 = vars.s0();
        let n = vars.n();
        let a = Matrix::from_fn(n, n, |i, j| {
            let d = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            d - m2 * s0[(i, j)]
        });
        let stability = Lu::factor(a).map_err(VdeError::SingularStability)?;
        Ok(Self {
            vars,
            ztilde,
            m,
            stability,
        })
    }

    pub fn m(&self) -> Complex64 {
        self.m
    }

    pub fn solve(
        &self,
        pert: &PerturbationSpec,
        point: &SpectralPoint,
        opts: &SolverOptions,
    ) -> Result<DysonSolution, VdeError> {
        self.solve_from(pert, point, opts, None)
    }

    /// Runs the iteration from `start` (zero when absent).
    pub fn solve_from(
        &self,
        pert: &PerturbationSpec,
        point: &SpectralPoint,
        opts: &SolverOptions,
        start: Option<&[Complex64]>,
    ) -> Result<DysonSolution, VdeError> {
        let vars = self.vars;
        let n = vars.n();
        let w = vars.w();
        if pert.g.len() != n {
            return Err(VdeError::InvalidInput {
                reason: "g must have length N",
            });
        }
        if point.ztilde() != self.ztilde {
            return Err(VdeError::InvalidInput {
                reason: "solver was factored for a different z~",
            });
        }
        if (pert.zeta - vars.zeta()).abs() > 0.0 {
            return Err(VdeError::InvalidInput {
                reason: "zeta differs from the variance matrices",
            });
        }
        if let Some(s) = start {
            if s.len() != n {
                return Err(VdeError::InvalidInput {
                    reason: "start vector must have length N",
                });
            }
        }
        let m = self.m;
        let m2 = m * m;
        let zeta = pert.zeta;
        let ztilde = point.ztilde();
        // On the real axis m is only a regularized root; the defect keeps the
        // fixed point an exact solution of the equation at the real z~.
        let defect = if ztilde.im == 0.0 {
            m.inv() + m + ztilde
        } else {
            Complex64::new(0.0, 0.0)
        };
        let sigma_e = vars.sigma_row_sums();
        let constant: Vec<Complex64> = (0..n)
            .map(|i| m2 * (defect + pert.g[i] + point.z_at(i, w) - ztilde) - zeta * m2 * m * sigma_e[i])
            .collect();

        let mut x: Vec<Complex64> = match start {
            Some(s) => s.to_vec(),
            None => alloc::vec![Complex64::new(0.0, 0.0); n],
        };
        let mut prev_diff = f64::INFINITY;
        let mut expanding = 0usize;
        let mut rate = 0.0;
        let mut residual = f64::INFINITY;
        for iteration in 1..=opts.max_iter {
            let sigma_x = if zeta > 0.0 {
                vars.sigma_apply(&x)
            } else {
                alloc::vec![Complex64::new(0.0, 0.0); n]
            };
            let rhs: Vec<Complex64> = (0..n)
                .map(|i| {
                    let xi = x[i];
                    constant[i] + xi * xi / (m + xi) - zeta * m2 * sigma_x[i]
                })
                .collect();
            let next = self.stability.solve(&rhs);
            let diff = next.iter().zip(&x).fold(0.0f64, |a, (p, q)| a.max((p - q).norm()));
            if !diff.is_finite() {
                return Err(VdeError::NonContraction { iteration });
            }
            if prev_diff.is_finite() && prev_diff > 0.0 {
                rate = diff / prev_diff;
                if rate > 1.0 {
                    expanding += 1;
                    if expanding >= EXPANSION_PATIENCE {
                        return Err(VdeError::NonContraction { iteration });
                    }
                } else {
                    expanding = 0;
                }
            }
            prev_diff = diff;
            x = next;
            let big_m: Vec<Complex64> = x.iter().map(|v| m + v).collect();
            residual = equation_residual(vars, pert, point, &big_m);
            if residual < opts.tol {
                let within_threshold =
                    pert.zeta + pert.g_norm_inf() + (point.z() - ztilde).norm() <= opts.contraction_threshold;
                return Ok(DysonSolution {
                    point: *point,
                    zeta,
                    g: pert.g.clone(),
                    w,
                    m,
                    big_m,
                    x,
                    iterations: iteration,
                    residual,
                    contraction_rate: rate,
                    within_threshold,
                });
            }
        }
        Err(VdeError::MaxIterations {
            iterations: opts.max_iter,
            residual,
        })
    }
}

/// `max_i |1/M_i + z_i + g_i + (S_zeta M)_i|`
pub fn equation_residual(
    vars: &VarianceMatrices,
    pert: &PerturbationSpec,
    point: &SpectralPoint,
    big_m: &[Complex64],
) -> f64 {
    let w = vars.w();
    let sm = vars.szeta_rows().matvec(big_m);
    big_m
        .iter()
        .enumerate()
        .map(|(i, &mi)| (mi.inv() + point.z_at(i, w) + pert.g[i] + sm[i]).norm())
        .fold(0.0, f64::max)
}

/// One-shot solve: factor `(1 - m^2 S_0)` and iterate from zero.
pub fn solve_m(
    vars: &VarianceMatrices,
    pert: &PerturbationSpec,
    point: &SpectralPoint,
    opts: &SolverOptions,
) -> Result<DysonSolution, VdeError> {
    DysonSolver::new(vars, point.ztilde())?.solve(pert, point, opts)
}

/// `||M' - M||_inf / (||g - g'|| + |z - z'| + |z~ - z~'| + |zeta - zeta'|)`.
pub fn lipschitz_ratio(a: &DysonSolution, b: &DysonSolution) -> Result<f64, VdeError> {
    if a.n() != b.n() {
        return Err(VdeError::InvalidInput {
            reason: "solutions have different dimensions",
        });
    }
    let dg = a.g.iter().zip(&b.g).fold(0.0f64, |acc, (p, q)| acc.max((p - q).abs()));
    let distance = dg
        + (a.point.z() - b.point.z()).norm()
        + (a.point.ztilde() - b.point.ztilde()).norm()
        + (a.zeta - b.zeta).abs();
    if distance < 1e-14 {
        return Err(VdeError::DegenerateInputs { distance });
    }
    let dm = a
        .big_m
        .iter()
        .zip(&b.big_m)
        .fold(0.0f64, |acc, (p, q)| acc.max((p - q).norm()));
    Ok(dm / distance)
}

/// Default bound on [`lipschitz_ratio`].
pub const LIPSCHITZ_BOUND: f64 = 10.0;

/// Spatial decay of `x` away from the distinguished block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    /// `|x|` indexed by `|n|`, the modulus of the centered label, maximized
    /// over `n` and `-n`.
    pub abs_x: Vec<f64>,
    /// Fitted exponential rate in units of `1/W`.
    pub rate: f64,
    /// Smallest `C` with `||M_n|^2 - |m|^2| <= C s e^{-rate |n| / W}`,
    /// `s = |z - z~| + zeta + ||g||`.
    pub amplitude: f64,
    /// Fit window in `|n|`.
    pub window: (usize, usize),
}

/// Fits `log max_{|n'| >= |n|} |x_{n'}|` against `|n| / W` over `[W, 5W]`.
pub fn decay_of_x(sol: &DysonSolution) -> Result<DecayProfile, VdeError> {
    let n = sol.n();
    let w = sol.w;
    if sol.zeta == 0.0 && sol.point.z() == sol.point.ztilde() && sol.g_norm_inf() == 0.0 {
        return Err(VdeError::FlatProfile);
    }
    let half = n / 2;
    let mut abs_x = alloc::vec![0.0f64; half + 1];
    for (s, v) in sol.x.iter().enumerate() {
        let d = centered_label(s, n).unsigned_abs() as usize;
        abs_x[d] = abs_x[d].max(v.norm());
    }
    let mut envelope = abs_x.clone();
    for d in (0..half).rev() {
        envelope[d] = envelope[d].max(envelope[d + 1]);
    }
    let lo = w.min(half);
    let hi = (5 * w).min(half);
    let pts: Vec<(f64, f64)> = (lo..=hi)
        .filter(|&d| envelope[d] > 0.0)
        .map(|d| (d as f64 / w as f64, libm::log(envelope[d])))
        .collect();
    if pts.len() < 2 {
        return Err(VdeError::InvalidInput {
            reason: "too few nonzero points in the fit window",
        });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let rate = -sxy / sxx;
    let scale = sol.perturbation_size();
    let m_abs2 = sol.m.norm_sqr();
    let amplitude = sol
        .big_m
        .iter()
        .enumerate()
        .map(|(s, v)| {
            let d = centered_label(s, n).unsigned_abs() as f64;
            (v.norm_sqr() - m_abs2).abs() * libm::exp(rate * d / w as f64) / scale
        })
        .fold(0.0, f64::max);
    Ok(DecayProfile {
        abs_x,
        rate,
        amplitude,
        window: (lo, hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SumRuleOptions {
    /// Lower constant `c`; `None` uses `1/sqrt(4 - e^2)`.
    pub c: Option<f64>,
    pub slack_multiple: f64,
    pub eps_star: f64,
    pub eps_upstar: f64,
}

impl Default for SumRuleOptions {
    fn default() -> Self {
        Self {
            c: None,
            slack_multiple: 1.0,
            eps_star: 0.2,
            eps_upstar: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumRule {
    /// `(1/W) sum_n (|m|^2 / |M_n|^2 - 1)`
    pub value: f64,
    /// `c (Im z - Im z~) - zeta - slack`
    pub lower_bound: f64,
    pub c: f64,
    pub slack: f64,
    /// `(value + zeta) / (Im z - Im z~)` when the denominator is nonzero.
    pub implied_c: Option<f64>,
    pub holds: bool,
}

pub fn sum_rule_check(sol: &DysonSolution, opts: &SumRuleOptions) -> Result<SumRule, VdeError> {
    if sol.g_norm_inf() != 0.0 {
        return Err(VdeError::InvalidInput {
            reason: "the sum rule is stated for g = 0",
        });
    }
    let n = sol.n() as f64;
    let w = sol.w as f64;
    let m_abs2 = sol.m.norm_sqr();
    let value = sol.big_m.iter().map(|v| m_abs2 / v.norm_sqr() - 1.0).sum::<f64>() / w;
    let e = sol.point.e();
    let c = opts.c.unwrap_or(1.0 / libm::sqrt(4.0 - e * e));
    let d_eta = sol.point.z().im - sol.point.ztilde().im;
    let slack = opts.slack_multiple
        * (libm::pow(n, -1.5 * opts.eps_star) + libm::pow(n, -opts.eps_upstar) * sol.point.ztilde().im);
    let lower_bound = c * d_eta - sol.zeta - slack;
    let implied_c = if d_eta != 0.0 {
        Some((value + sol.zeta) / d_eta)
    } else {
        None
    };
    Ok(SumRule {
        value,
        lower_bound,
        c,
        slack,
        implied_c,
        holds: value >= lower_bound,
    })
}
