//! `ladder`: Monte Carlo statistics of `G(z, z~_n)` along
//! `z~_n = e + i N^{-n eps0} Im z`, one sampled matrix per trial shared by
//! all levels.

use bandlab_core::ensemble::Sampler;
use bandlab_core::profile::{validate_regime, RegimeReport};
use bandlab_core::resolvent::{resolvent, stats, t_matrix, ResolventError};
use bandlab_core::scalar::SpectralPoint;
use bandlab_core::vde::{DysonSolution, DysonSolver};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::stats::{median, percentile, slope};
use super::ExperimentError;
use crate::config::{ConfigError, LadderConfig, Model};
use crate::io::RunOutput;

/// A level fails once more than this fraction of its trials is singular.
pub const MAX_SINGULAR_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Serialize)]
pub struct LadderRow {
    pub level: usize,
    pub trial: u32,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "Im_z")]
    pub im_z: f64,
    #[serde(rename = "Im_ztilde")]
    pub im_ztilde: f64,
    pub zeta: f64,
    #[serde(rename = "Lambda")]
    pub lambda: Option<f64>,
    #[serde(rename = "Tmax")]
    pub t_max: Option<f64>,
    pub tnorm2: Option<f64>,
    pub inv_residual: Option<f64>,
    pub near_singular: bool,
    pub singular: bool,
    pub phi_goal: f64,
    pub phi_tilde: f64,
    pub phi0: f64,
    pub phi1: f64,
    /// `sqrt(tnorm2 / N)`
    pub phi_tilde_measured: Option<f64>,
    /// `sqrt(C_s tnorm2 / W)`
    pub phi0_measured: Option<f64>,
    /// The first bootstrap bound with the measured values plugged in.
    pub phi1_measured: Option<f64>,
    pub lambda_over_phi_goal: Option<f64>,
    /// `Tmax <= (C_s/W) tnorm2`, exact.
    pub t_bound_holds: Option<bool>,
    /// `tnorm2 <= slack N phi_tilde^2`
    pub l2_within_slack: Option<bool>,
    /// Relative gap between `tnorm2` and `max_j Im G_jj / Im z`, level 0 only.
    pub ward_gap: Option<f64>,
}

impl LadderRow {
    fn usable(&self) -> bool {
        !self.singular && !self.near_singular
    }
}

/// Fraction of trials satisfying `Lambda^2 <= factor Tmax` among those with
/// `Lambda <= N^-delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeReport {
    pub delta: f64,
    pub factor: f64,
    pub included: usize,
    pub excluded: usize,
    pub satisfied: usize,
    pub fraction: Option<f64>,
}

pub fn self_consistent_probe(samples: &[(f64, f64)], n: usize, delta: f64, factor: f64) -> ProbeReport {
    let threshold = (n as f64).powf(-delta);
    let (inside, outside): (Vec<_>, Vec<_>) = samples.iter().partition(|(lambda, _)| *lambda <= threshold);
    let satisfied = inside
        .iter()
        .filter(|(lambda, t_max)| lambda * lambda <= factor * t_max)
        .count();
    ProbeReport {
        delta,
        factor,
        included: inside.len(),
        excluded: outside.len(),
        satisfied,
        fraction: (!inside.is_empty()).then(|| satisfied as f64 / inside.len() as f64),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub im_ztilde: f64,
    pub trials: usize,
    pub singular: usize,
    pub used: usize,
    pub lambda_median: Option<f64>,
    pub lambda_p95: Option<f64>,
    pub t_max_median: Option<f64>,
    pub t_max_p95: Option<f64>,
    pub tnorm2_median: Option<f64>,
    pub tnorm2_p95: Option<f64>,
    pub phi_goal: f64,
    pub phi_tilde: f64,
    pub phi0: f64,
    pub phi1: f64,
    pub lambda_over_phi_goal_median: Option<f64>,
    pub phi1_measured_median: Option<f64>,
    pub t_bound_violations: usize,
    pub l2_within_slack_fraction: Option<f64>,
    /// Fraction of trials with `1/W <= phi_tilde^2 <= Lambda^2 <= phi_tilde`,
    /// all measured.
    pub chain_fraction: Option<f64>,
    pub ward_gap_max: Option<f64>,
    pub probe: ProbeReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub c_s: f64,
    #[serde(rename = "C_s")]
    pub big_c_s: f64,
    pub e: f64,
    pub im_z: f64,
    pub eps0: f64,
    /// `N^{-eps_star + eps_upstar}`
    pub t_parameter: f64,
    pub regime: RegimeReport,
    pub levels: Vec<LevelSummary>,
    /// Slope of `log median Lambda` against `log Im z~_n`.
    pub lambda_exponent: Option<f64>,
    pub t_bound_all: bool,
    pub probe: ProbeReport,
    pub complete: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderReport {
    pub rows: Vec<LadderRow>,
    pub summary: LadderSummary,
}

impl LadderReport {
    pub fn output(&self) -> std::io::Result<RunOutput> {
        let mut out = RunOutput::default();
        out.add_csv("ladder", &self.rows)?;
        out.add_json("summary", &self.summary)?;
        Ok(out)
    }

    /// Median `Lambda` on `level`.
    pub fn median_lambda(&self, level: usize) -> Option<f64> {
        self.summary.levels.get(level).and_then(|l| l.lambda_median)
    }
}

/// `1/sqrt(W Im z) + sqrt(N)/W`
pub fn phi_goal(n: usize, w: usize, im_z: f64) -> f64 {
    let (nf, wf) = (n as f64, w as f64);
    1.0 / (wf * im_z).sqrt() + nf.sqrt() / wf
}

/// `Phi^(1) = Phi_goal^2 + (N/(W Im z) + N^2/W^2)(phi_tilde^2 + N^{-1/2}) phi0^2`
pub fn phi1(n: usize, w: usize, im_z: f64, phi_tilde: f64, phi0: f64) -> f64 {
    let (nf, wf) = (n as f64, w as f64);
    let goal = phi_goal(n, w, im_z);
    goal * goal + (nf / (wf * im_z) + nf * nf / (wf * wf)) * (phi_tilde * phi_tilde + nf.powf(-0.5)) * phi0 * phi0
}

struct Level {
    point: SpectralPoint,
    sol: DysonSolution,
}

pub fn run_ladder(cfg: &LadderConfig, seed: u64) -> Result<LadderReport, ExperimentError> {
    cfg.validate()?;
    let model = Model::build(&cfg.profile, &cfg.pert)?;
    let n = model.n();
    let w = model.w();
    let z = Complex64::new(cfg.e, cfg.im_z);
    let levels: Vec<Level> = (0..cfg.levels)
        .map(|level| {
            let zt = Complex64::new(cfg.e, cfg.level_im_ztilde(level));
            let point = SpectralPoint::with_kappa(z, zt, cfg.kappa).map_err(|e| ConfigError::new("e", e))?;
            let sol = DysonSolver::new(&model.vars, zt)?.solve(&model.pert, &point, &cfg.solver)?;
            Ok(Level { point, sol })
        })
        .collect::<Result<_, ExperimentError>>()?;

    let big_c_s = model.profile.big_c_s();
    let goal = phi_goal(n, w, cfg.im_z);
    let phi_tilde = (n as f64).powf(cfg.eps0) * goal;
    let phi0 = (n as f64 / w as f64).sqrt() * phi_tilde;
    let phi1_nominal = phi1(n, w, cfg.im_z, phi_tilde, phi0);

    let per_trial: Vec<Vec<LadderRow>> = (0..cfg.trials_per_level)
        .into_par_iter()
        .map(|trial| {
            let sampler = Sampler::new(&model.vars, &model.pert, cfg.ensemble, seed);
            let h = sampler.sample(trial).h;
            levels
                .iter()
                .enumerate()
                .map(|(level, lv)| {
                    let mut row = LadderRow {
                        level,
                        trial,
                        seed,
                        n,
                        w,
                        im_z: cfg.im_z,
                        im_ztilde: lv.point.ztilde().im,
                        zeta: model.pert.zeta,
                        lambda: None,
                        t_max: None,
                        tnorm2: None,
                        inv_residual: None,
                        near_singular: false,
                        singular: false,
                        phi_goal: goal,
                        phi_tilde,
                        phi0,
                        phi1: phi1_nominal,
                        phi_tilde_measured: None,
                        phi0_measured: None,
                        phi1_measured: None,
                        lambda_over_phi_goal: None,
                        t_bound_holds: None,
                        l2_within_slack: None,
                        ward_gap: None,
                    };
                    let gr = match resolvent(&h, &lv.point, w) {
                        Ok(gr) => gr,
                        Err(ResolventError::SingularMatrix(_)) => {
                            row.singular = true;
                            return row;
                        }
                        Err(e) => unreachable!("resolvent only fails on singular input: {e}"),
                    };
                    let t = t_matrix(&gr.g, &model.vars);
                    let st = stats(&gr.g, &lv.sol.big_m, &t);
                    let pt_meas = (st.tnorm2 / n as f64).sqrt();
                    let p0_meas = (big_c_s * st.tnorm2 / w as f64).sqrt();
                    row.lambda = Some(st.lambda);
                    row.t_max = Some(st.t_max);
                    row.tnorm2 = Some(st.tnorm2);
                    row.inv_residual = Some(gr.inv_residual);
                    row.near_singular = gr.near_singular;
                    row.phi_tilde_measured = Some(pt_meas);
                    row.phi0_measured = Some(p0_meas);
                    row.phi1_measured = Some(phi1(n, w, cfg.im_z, pt_meas, p0_meas));
                    row.lambda_over_phi_goal = Some(st.lambda / goal);
                    row.t_bound_holds = Some(st.t_max <= big_c_s / w as f64 * st.tnorm2);
                    row.l2_within_slack = Some(st.tnorm2 <= cfg.slack * n as f64 * phi_tilde * phi_tilde);
                    if lv.point.z() == lv.point.ztilde() {
                        let ward = (0..n).map(|j| gr.g[(j, j)].im).fold(f64::NEG_INFINITY, f64::max) / cfg.im_z;
                        row.ward_gap = Some((st.tnorm2 - ward).abs() / st.tnorm2);
                    }
                    row
                })
                .collect()
        })
        .collect();

    // Reorder to (level, trial).
    let mut rows: Vec<LadderRow> = Vec::with_capacity(per_trial.len() * cfg.levels);
    for level in 0..cfg.levels {
        rows.extend(per_trial.iter().map(|r| r[level].clone()));
    }

    let level_summaries: Vec<LevelSummary> = (0..cfg.levels)
        .map(|level| summarize_level(cfg, &rows, level, n, w, levels[level].point.ztilde().im))
        .collect();
    let lambda_points: Vec<(f64, f64)> = level_summaries
        .iter()
        .filter_map(|l| l.lambda_median.filter(|v| *v > 0.0).map(|v| (l.im_ztilde.ln(), v.ln())))
        .collect();
    let usable: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.usable())
        .filter_map(|r| Some((r.lambda?, r.t_max?)))
        .collect();
    let failure = level_summaries
        .iter()
        .find(|l| l.singular as f64 > MAX_SINGULAR_FRACTION * l.trials as f64)
        .map(|l| (l.level, l.singular, l.trials));
    let report = LadderReport {
        summary: LadderSummary {
            n,
            w,
            c_s: model.profile.c_s(),
            big_c_s,
            e: cfg.e,
            im_z: cfg.im_z,
            eps0: cfg.eps0,
            t_parameter: (n as f64).powf(-cfg.eps_star + cfg.eps_upstar),
            regime: validate_regime(
                &model.profile,
                &levels[0].point,
                &model.pert,
                cfg.eps_star,
                cfg.eps_upstar,
            ),
            lambda_exponent: slope(&lambda_points),
            t_bound_all: rows.iter().all(|r| r.t_bound_holds != Some(false)),
            probe: self_consistent_probe(&usable, n, cfg.probe_delta, cfg.slack),
            complete: failure.is_none(),
            levels: level_summaries,
        },
        rows,
    };
    match failure {
        Some((level, singular, trials)) => Err(ExperimentError::InsufficientTrials {
            level,
            singular,
            trials,
            partial: Box::new(report),
        }),
        None => Ok(report),
    }
}

fn summarize_level(
    cfg: &LadderConfig,
    rows: &[LadderRow],
    level: usize,
    n: usize,
    w: usize,
    im_ztilde: f64,
) -> LevelSummary {
    let mine: Vec<&LadderRow> = rows.iter().filter(|r| r.level == level).collect();
    let used: Vec<&LadderRow> = mine.iter().copied().filter(|r| r.usable()).collect();
    let col = |f: fn(&LadderRow) -> Option<f64>| used.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
    let lambda = col(|r| r.lambda);
    let t_max = col(|r| r.t_max);
    let tnorm2 = col(|r| r.tnorm2);
    let fraction = |hits: usize, total: usize| (total > 0).then(|| hits as f64 / total as f64);
    let chain_hits = used
        .iter()
        .filter(|r| {
            let (Some(lam), Some(pt)) = (r.lambda, r.phi_tilde_measured) else {
                return false;
            };
            let pt2 = pt * pt;
            1.0 / w as f64 <= pt2 && pt2 <= lam * lam && lam * lam <= pt
        })
        .count();
    let pairs: Vec<(f64, f64)> = used.iter().filter_map(|r| Some((r.lambda?, r.t_max?))).collect();
    let first = mine[0];
    LevelSummary {
        level,
        im_ztilde,
        trials: mine.len(),
        singular: mine.iter().filter(|r| !r.usable()).count(),
        used: used.len(),
        lambda_median: median(&lambda),
        lambda_p95: percentile(&lambda, 0.95),
        t_max_median: median(&t_max),
        t_max_p95: percentile(&t_max, 0.95),
        tnorm2_median: median(&tnorm2),
        tnorm2_p95: percentile(&tnorm2, 0.95),
        phi_goal: first.phi_goal,
        phi_tilde: first.phi_tilde,
        phi0: first.phi0,
        phi1: first.phi1,
        lambda_over_phi_goal_median: median(&col(|r| r.lambda_over_phi_goal)),
        phi1_measured_median: median(&col(|r| r.phi1_measured)),
        t_bound_violations: used.iter().filter(|r| r.t_bound_holds == Some(false)).count(),
        l2_within_slack_fraction: fraction(
            used.iter().filter(|r| r.l2_within_slack == Some(true)).count(),
            used.len(),
        ),
        chain_fraction: fraction(chain_hits, used.len()),
        ward_gap_max: used.iter().filter_map(|r| r.ward_gap).reduce(f64::max),
        probe: self_consistent_probe(&pairs, n, cfg.probe_delta, cfg.slack),
    }
}
