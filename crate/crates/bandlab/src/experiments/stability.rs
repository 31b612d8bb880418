//! `stability`: the T-stability operator norm over a grid of sizes.

use bandlab_core::profile::{BandProfile, PerturbationSpec, VarianceMatrices};
use bandlab_core::stability::{circulant_decay_table, t_stability_bound, tau_square_norm, TStabilityOperator};
use bandlab_core::vde::DysonSolver;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::ExperimentError;
use crate::config::{ConfigError, StabilityConfig};
use crate::io::RunOutput;

/// Columns solved per block.
const COLUMN_BLOCK: usize = 128;

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub n: usize,
    pub w: usize,
    pub im_z: f64,
    pub im_ztilde: f64,
    pub zeta: f64,
    pub max_norm: f64,
    pub bound_rhs: f64,
    pub fitted_c: f64,
    pub column_residual: f64,
    pub condition: f64,
    pub diag_deviation: f64,
    pub far_radius: usize,
    pub far_max: f64,
    pub tau_square_norm: f64,
    pub solver_iterations: usize,
    pub solver_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayRow {
    pub n: usize,
    pub w: usize,
    pub distance: usize,
    pub max_abs_entry: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilitySummary {
    pub fitted_c_min: f64,
    pub fitted_c_max: f64,
    /// `fitted_c_max / fitted_c_min`
    pub spread: f64,
    pub max_spread: f64,
    pub within_spread: bool,
    pub max_column_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityGridReport {
    pub rows: Vec<StabilityRow>,
    pub decay: Vec<DecayRow>,
    pub summary: StabilitySummary,
}

impl StabilityGridReport {
    pub fn output(&self) -> std::io::Result<RunOutput> {
        let mut out = RunOutput::default();
        out.add_csv("stability", &self.rows)?;
        out.add_csv("decay", &self.decay)?;
        out.add_json("summary", &self.summary)?;
        Ok(out)
    }
}

/// `||(1 - S|M|^2)^{-1} S||_max` and the worst column residual, solving
/// column blocks in parallel.
pub fn parallel_max_norm(op: &TStabilityOperator<'_>, n: usize) -> (f64, f64) {
    let starts: Vec<usize> = (0..n).step_by(COLUMN_BLOCK).collect();
    let parts: Vec<(f64, f64)> = starts
        .par_iter()
        .map(|&start| {
            let cols = start..(start + COLUMN_BLOCK).min(n);
            let block = op.columns(cols.clone());
            (block.max_abs(), op.column_residual(cols, &block))
        })
        .collect();
    parts
        .into_iter()
        .fold((0.0f64, 0.0f64), |acc, p| (acc.0.max(p.0), acc.1.max(p.1)))
}

pub fn run_stability(cfg: &StabilityConfig) -> Result<StabilityGridReport, ExperimentError> {
    if cfg.cases.is_empty() {
        return Err(ConfigError::new("cases", "must not be empty").into());
    }
    let z = Complex64::new(cfg.e, cfg.im_z);
    let ztilde = Complex64::new(cfg.e, cfg.im_ztilde);
    let mut rows = Vec::new();
    let mut decay = Vec::new();
    for (idx, case) in cfg.cases.iter().enumerate() {
        let field = format!("cases[{idx}]");
        let profile = BandProfile::build(case.n, case.w, cfg.kind).map_err(|e| ConfigError::new(&field, e))?;
        let vars = VarianceMatrices::build(&profile, cfg.zeta).map_err(|e| ConfigError::new("zeta", e))?;
        let pert = PerturbationSpec::new(cfg.zeta, vec![0.0; case.n]).map_err(|e| ConfigError::new("zeta", e))?;
        let point = bandlab_core::scalar::SpectralPoint::new(z, ztilde).map_err(|e| ConfigError::new("e", e))?;
        let sol = DysonSolver::new(&vars, ztilde)?.solve(&pert, &point, &cfg.solver)?;
        let op = TStabilityOperator::new(&vars, &sol.big_m)?;
        let (max_norm, column_residual) = parallel_max_norm(&op, case.n);
        let bound_rhs = t_stability_bound(case.n, case.w, cfg.im_z);
        let table = circulant_decay_table(sol.m, &vars)?;
        let far_radius = cfg.far_multiple * case.w;
        rows.push(StabilityRow {
            n: case.n,
            w: case.w,
            im_z: cfg.im_z,
            im_ztilde: cfg.im_ztilde,
            zeta: cfg.zeta,
            max_norm,
            bound_rhs,
            fitted_c: max_norm / bound_rhs,
            column_residual,
            condition: op.condition,
            diag_deviation: table[0],
            far_radius,
            far_max: table.iter().skip(far_radius + 1).copied().fold(0.0, f64::max),
            tau_square_norm: tau_square_norm(sol.m, &vars, cfg.tau),
            solver_iterations: sol.iterations,
            solver_residual: sol.residual,
        });
        decay.extend(table.iter().enumerate().map(|(distance, &max_abs_entry)| DecayRow {
            n: case.n,
            w: case.w,
            distance,
            max_abs_entry,
        }));
    }
    let fitted_c_min = rows.iter().map(|r| r.fitted_c).fold(f64::INFINITY, f64::min);
    let fitted_c_max = rows.iter().map(|r| r.fitted_c).fold(0.0, f64::max);
    let spread = fitted_c_max / fitted_c_min;
    let summary = StabilitySummary {
        fitted_c_min,
        fitted_c_max,
        spread,
        max_spread: cfg.max_spread,
        within_spread: spread < cfg.max_spread,
        max_column_residual: rows.iter().map(|r| r.column_residual).fold(0.0, f64::max),
    };
    Ok(StabilityGridReport { rows, decay, summary })
}
