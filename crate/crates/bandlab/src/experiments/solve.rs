//! `solve-m`: one solution of the vector equation with its certificates, and
//! the optional perturbation sweep.

use bandlab_core::profile::{
    centered_label, validate_regime, PerturbationSpec, ProfileRecord, RegimeReport, VarianceMatrices,
};
use bandlab_core::scalar::SpectralPoint;
use bandlab_core::stability::{circulant_decay_table, tau_square_norm, DEFAULT_TAU};
use bandlab_core::vde::{decay_of_x, sum_rule_check, DysonSolver, SolutionRecord, SumRule, SumRuleOptions, VdeError};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::ExperimentError;
use crate::config::{ConfigError, Model, SolveConfig};
use crate::io::RunOutput;

#[derive(Debug, Clone, Serialize)]
pub struct SolutionRow {
    pub index: usize,
    pub label: i64,
    pub re_m: f64,
    pub im_m: f64,
    pub abs_x: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecaySummary {
    pub rate: f64,
    pub amplitude: f64,
    pub window: (usize, usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityCertificate {
    /// `max |[(1 - m^2 S_0)^{-1}]_ii - 1|`
    pub diag_deviation: f64,
    pub far_radius: usize,
    /// Largest entry at circular distance beyond `far_radius`.
    pub far_max: f64,
    pub tau: f64,
    pub tau_square_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub zeta: f64,
    pub g: f64,
    pub dz: f64,
    pub x_norm_inf: f64,
    /// `zeta + ||g|| + |z - z~|`
    pub size: f64,
    pub ratio: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    /// Smallest single `C` with `||x|| <= C size` on every point.
    pub fitted_c: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub residual: f64,
    pub iterations: usize,
    pub contraction_rate: f64,
    pub within_threshold: bool,
    pub x_norm_inf: f64,
    pub m: [f64; 2],
    /// Smallest `Im M_i`; recorded, never asserted.
    pub min_im_m: f64,
    pub regime: RegimeReport,
    pub decay: Option<DecaySummary>,
    pub sum_rule: Option<SumRule>,
    pub stability: StabilityCertificate,
    pub sweep: Option<SweepSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub profile: ProfileRecord,
    pub solution: SolutionRecord,
    pub rows: Vec<SolutionRow>,
    pub summary: SolveSummary,
    pub sweep: Vec<SweepRow>,
    pub decay_table: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct DecayRow {
    distance: usize,
    max_abs_entry: f64,
}

impl SolveReport {
    pub fn output(&self) -> std::io::Result<RunOutput> {
        let mut out = RunOutput::default();
        out.add_csv("solution", &self.rows)?;
        let decay: Vec<DecayRow> = self
            .decay_table
            .iter()
            .enumerate()
            .map(|(distance, &max_abs_entry)| DecayRow {
                distance,
                max_abs_entry,
            })
            .collect();
        out.add_csv("decay", &decay)?;
        if !self.sweep.is_empty() {
            out.add_csv("sweep", &self.sweep)?;
        }
        out.add_json("profile", &self.profile)?;
        out.add_json("solution", &self.solution)?;
        out.add_json("summary", &self.summary)?;
        Ok(out)
    }
}

pub fn run_solve(cfg: &SolveConfig) -> Result<SolveReport, ExperimentError> {
    let model = Model::build(&cfg.profile, &cfg.pert)?;
    let point = cfg.point.build("point")?;
    let solver = DysonSolver::new(&model.vars, point.ztilde())?;
    let sol = solver.solve(&model.pert, &point, &cfg.solver)?;
    let n = model.n();
    let w = model.w();

    let rows = (0..n)
        .map(|i| SolutionRow {
            index: i,
            label: centered_label(i, n),
            re_m: sol.big_m[i].re,
            im_m: sol.big_m[i].im,
            abs_x: sol.x[i].norm(),
        })
        .collect();

    let decay = match decay_of_x(&sol) {
        Ok(d) => Some(DecaySummary {
            rate: d.rate,
            amplitude: d.amplitude,
            window: d.window,
        }),
        Err(VdeError::FlatProfile) | Err(VdeError::InvalidInput { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let sum_rule = if sol.g_norm_inf() == 0.0 {
        Some(sum_rule_check(&sol, &SumRuleOptions::default())?)
    } else {
        None
    };

    let decay_table = circulant_decay_table(sol.m, &model.vars)?;
    let far_radius = cfg.far_multiple * w;
    let stability = StabilityCertificate {
        diag_deviation: decay_table[0],
        far_radius,
        far_max: decay_table.iter().skip(far_radius + 1).copied().fold(0.0, f64::max),
        tau: DEFAULT_TAU,
        tau_square_norm: tau_square_norm(sol.m, &model.vars, DEFAULT_TAU),
    };

    let (sweep, sweep_summary) = match &cfg.sweep {
        Some(sw) => {
            let rows = perturbation_sweep(&model, point.ztilde(), sw, cfg)?;
            let fitted_c = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            let summary = SweepSummary {
                fitted_c,
                points: rows.len(),
            };
            (rows, Some(summary))
        }
        None => (Vec::new(), None),
    };

    let summary = SolveSummary {
        residual: sol.residual,
        iterations: sol.iterations,
        contraction_rate: sol.contraction_rate,
        within_threshold: sol.within_threshold,
        x_norm_inf: sol.x_norm_inf(),
        m: [sol.m.re, sol.m.im],
        min_im_m: sol.min_im(),
        regime: validate_regime(&model.profile, &point, &model.pert, 0.2, 0.01),
        decay,
        sum_rule,
        stability,
        sweep: sweep_summary,
    };
    Ok(SolveReport {
        profile: model.profile.to_record(),
        solution: sol.to_record(),
        rows,
        summary,
        sweep,
        decay_table,
    })
}

/// The `3 x 3 x 3` grid of `(zeta, g, Im z - Im z~)` with constant `g`,
/// ordered with `zeta` slowest.
pub fn perturbation_sweep(
    model: &Model,
    ztilde: Complex64,
    sw: &crate::config::SweepConfig,
    cfg: &SolveConfig,
) -> Result<Vec<SweepRow>, ExperimentError> {
    let n = model.n();
    let per_zeta: Vec<Result<Vec<SweepRow>, ExperimentError>> = sw
        .zeta
        .par_iter()
        .map(|&zeta| {
            let vars = VarianceMatrices::build(&model.profile, zeta).map_err(|e| ConfigError::new("sweep.zeta", e))?;
            let solver = DysonSolver::new(&vars, ztilde)?;
            let mut rows = Vec::with_capacity(9);
            for &g in &sw.g {
                let pert = PerturbationSpec::new(zeta, vec![g; n]).map_err(|e| ConfigError::new("sweep.g", e))?;
                for &dz in &sw.dz {
                    let point = SpectralPoint::with_kappa(ztilde + Complex64::new(0.0, dz), ztilde, cfg.point.kappa)
                        .map_err(|e| ConfigError::new("sweep.dz", e))?;
                    let sol = solver.solve(&pert, &point, &cfg.solver)?;
                    let size = sol.perturbation_size();
                    rows.push(SweepRow {
                        zeta,
                        g,
                        dz,
                        x_norm_inf: sol.x_norm_inf(),
                        size,
                        ratio: sol.x_norm_inf() / size,
                        iterations: sol.iterations,
                        residual: sol.residual,
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::with_capacity(27);
    for r in per_zeta {
        rows.extend(r?);
    }
    Ok(rows)
}
