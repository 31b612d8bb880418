//! `identities`: exact algebraic identities of the generalized resolvent,
//! evaluated on every sampled trial.

use bandlab_core::ensemble::Sampler;
use bandlab_core::resolvent::{
    interpolation_residual_from, inverse_of_minor, resolvent, resolvent_identity_residuals, shifted_matrix,
    t_equation_residual, t_matrix, ward_residual,
};
use bandlab_core::scalar::SpectralPoint;
use bandlab_core::stability::quadratic_form_identity;
use bandlab_core::vde::{DysonSolution, DysonSolver};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{aux_gaussian, aux_index, ExperimentError};
use crate::config::{check_dense_size, check_trials, ConfigError, IdentitiesConfig, Model};
use crate::io::RunOutput;

#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub trial: u32,
    pub seed: u64,
    pub n: usize,
    pub w: usize,
    pub k: usize,
    pub i: usize,
    pub j: usize,
    pub entry_split: f64,
    pub diagonal_split: f64,
    pub diagonal_expansion: f64,
    pub row_expansion: f64,
    pub column_expansion: f64,
    pub t_equation: f64,
    pub t_equation_split: f64,
    pub interpolation: f64,
    pub interpolation_block: f64,
    pub ward: f64,
    pub quadratic_form: f64,
    pub inv_residual: f64,
    pub near_singular: bool,
    pub worst: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IdentitiesSummary {
    pub trials: usize,
    pub tol: f64,
    pub resolvent_identities: f64,
    pub t_equation: f64,
    pub interpolation: f64,
    pub ward: f64,
    pub quadratic_form: f64,
    pub inv_residual: f64,
    pub worst: f64,
    pub failing_trials: usize,
    pub near_singular_trials: usize,
    pub all_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentitiesReport {
    pub rows: Vec<IdentityRow>,
    pub summary: IdentitiesSummary,
}

impl IdentitiesReport {
    pub fn output(&self) -> std::io::Result<RunOutput> {
        let mut out = RunOutput::default();
        out.add_csv("identities", &self.rows)?;
        out.add_json("summary", &self.summary)?;
        Ok(out)
    }
}

// Auxiliary stream tags.
const TAG_K: u32 = 1;
const TAG_I: u32 = 2;
const TAG_J: u32 = 3;
const TAG_U: u32 = 4;

struct Shared<'a> {
    cfg: &'a IdentitiesConfig,
    model: &'a Model,
    point: SpectralPoint,
    sol: DysonSolution,
    seed: u64,
}

pub fn run_identities(cfg: &IdentitiesConfig, seed: u64) -> Result<IdentitiesReport, ExperimentError> {
    check_dense_size(&cfg.profile, cfg.max_n)?;
    check_trials(cfg.trials, "trials")?;
    if !(cfg.interp_shift > 0.0) {
        return Err(ConfigError::new("interp_shift", "must be positive").into());
    }
    let model = Model::build(&cfg.profile, &cfg.pert)?;
    let point = cfg.point.build("point")?;
    let sol = DysonSolver::new(&model.vars, point.ztilde())?.solve(&model.pert, &point, &cfg.solver)?;
    let shared = Shared {
        cfg,
        model: &model,
        point,
        sol,
        seed,
    };
    let rows: Vec<Result<IdentityRow, ExperimentError>> =
        (0..cfg.trials).into_par_iter().map(|t| one_trial(&shared, t)).collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    let max_of = |f: fn(&IdentityRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let summary = IdentitiesSummary {
        trials: rows.len(),
        tol: cfg.tol,
        resolvent_identities: max_of(|r| {
            r.entry_split
                .max(r.diagonal_split)
                .max(r.diagonal_expansion)
                .max(r.row_expansion)
                .max(r.column_expansion)
        }),
        t_equation: max_of(|r| r.t_equation.max(r.t_equation_split)),
        interpolation: max_of(|r| r.interpolation.max(r.interpolation_block)),
        ward: max_of(|r| r.ward),
        quadratic_form: max_of(|r| r.quadratic_form),
        inv_residual: max_of(|r| r.inv_residual),
        worst: max_of(|r| r.worst),
        failing_trials: rows.iter().filter(|r| !r.pass).count(),
        near_singular_trials: rows.iter().filter(|r| r.near_singular).count(),
        all_pass: rows.iter().all(|r| r.pass),
    };
    Ok(IdentitiesReport { rows, summary })
}

fn one_trial(sh: &Shared<'_>, trial: u32) -> Result<IdentityRow, ExperimentError> {
    let model = sh.model;
    let n = model.n();
    let w = model.w();
    let sampler = Sampler::new(&model.vars, &model.pert, sh.cfg.ensemble, sh.seed);
    let h = sampler.sample(trial).h;
    let gr = resolvent(&h, &sh.point, w)?;
    let a = shifted_matrix(&h, &sh.point, w);

    let k = aux_index(sh.seed, trial, TAG_K, n);
    let i = aux_index(sh.seed, trial, TAG_I, n);
    let j = aux_index(sh.seed, trial, TAG_J, n);
    let b_k = inverse_of_minor(&a, &[k])?;
    let b_i = if i == k {
        b_k.clone()
    } else {
        inverse_of_minor(&a, &[i])?
    };
    let b_j = if j == k {
        b_k.clone()
    } else if j == i {
        b_i.clone()
    } else {
        inverse_of_minor(&a, &[j])?
    };
    let ids = resolvent_identity_residuals(&gr.g, &a, k, &b_k, i, &b_i, j, &b_j);

    let t = t_matrix(&gr.g, &model.vars);
    let teq = t_equation_residual(&t, &gr.g, &sh.sol.big_m, &model.vars)?;

    // z~ varied with z fixed, then z varied with z~ fixed.
    let shift = Complex64::new(0.0, sh.cfg.interp_shift);
    let z = sh.point.z();
    let zt = sh.point.ztilde();
    let kappa = sh.point.kappa();
    let invalid = |e| ExperimentError::from(ConfigError::new("interp_shift", e));
    let outer_point = SpectralPoint::with_kappa(z, zt + shift, kappa).map_err(invalid)?;
    let g_outer = resolvent(&h, &outer_point, w)?.g;
    let interpolation = interpolation_residual_from(&gr.g, &g_outer, -shift, w, false);
    let block_point = SpectralPoint::with_kappa(z + shift, zt, kappa).map_err(invalid)?;
    let g_block = resolvent(&h, &block_point, w)?.g;
    let interpolation_block = interpolation_residual_from(&gr.g, &g_block, -shift, w, true);

    let diag_point = SpectralPoint::with_kappa(z, z, kappa).map_err(|e| ConfigError::new("point", e))?;
    let ward = ward_residual(&resolvent(&h, &diag_point, w)?)?;

    let u: Vec<f64> = (0..n)
        .map(|idx| aux_gaussian(sh.seed, trial, TAG_U, idx as u32))
        .collect();
    let quadratic_form = quadratic_form_identity(&u, &model.vars, &sh.sol.big_m)?.relative_error;

    let worst = [
        ids.max(),
        teq.full,
        teq.diagonal_split,
        interpolation,
        interpolation_block,
        ward,
        quadratic_form,
        gr.inv_residual,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(IdentityRow {
        trial,
        seed: sh.seed,
        n,
        w,
        k,
        i,
        j,
        entry_split: ids.entry_split,
        diagonal_split: ids.diagonal_split,
        diagonal_expansion: ids.diagonal_expansion,
        row_expansion: ids.row_expansion,
        column_expansion: ids.column_expansion,
        t_equation: teq.full,
        t_equation_split: teq.diagonal_split,
        interpolation,
        interpolation_block,
        ward,
        quadratic_form,
        inv_residual: gr.inv_residual,
        near_singular: gr.near_singular,
        worst,
        pass: worst < sh.cfg.tol,
    })
}
