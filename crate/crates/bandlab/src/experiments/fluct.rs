//! `fluct`: the partial expectation `E_k |G_kj|^2` estimated by redrawing row
//! `k`, and the averaged fluctuation `|sum_k b_k Q_k |G_kj|^2|`.
//!
//! Redrawing row `k` leaves the minor `G^(k)` untouched, so each redraw only
//! needs the Schur complement
//! `G'_kk = 1/(h_kk - z_k - h^T G^(k) h)`, `G'_jk = -G'_kk (G^(k) h)_j`
//! on the support of row `k` instead of a fresh inversion.

use bandlab_core::ensemble::Sampler;
use bandlab_core::linalg::Matrix;
use bandlab_core::resolvent::{resolvent, stats, t_matrix};
use bandlab_core::vde::DysonSolver;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::stats::{mean, mean_and_se, median};
use super::ExperimentError;
use crate::config::{FluctConfig, Model};
use crate::io::RunOutput;

/// Target of the averaging gain: `A < m1 / GAIN_TARGET`.
pub const GAIN_TARGET: f64 = 3.0;

/// `G^(k)` restricted to the support of row `k`, plus the row `G^(k)_{j, .}`.
#[derive(Debug, Clone)]
pub struct RowMinor {
    k: usize,
    j: usize,
    z_k: Complex64,
    support: Vec<usize>,
    /// Row-major `|support| x |support|` block.
    block: Vec<Complex64>,
    j_row: Vec<Complex64>,
}

impl RowMinor {
    /// `support` lists the off-diagonal columns of row `k` in the order the
    /// redrawn rows will present them.
    pub fn new(g: &Matrix<Complex64>, k: usize, j: usize, z_k: Complex64, support: Vec<usize>) -> Self {
        assert!(j != k, "column j must differ from the redrawn row");
        let gkk = g[(k, k)];
        let minor = |a: usize, b: usize| g[(a, b)] - g[(a, k)] * g[(k, b)] / gkk;
        let mut block = Vec::with_capacity(support.len() * support.len());
        for &a in &support {
            block.extend(support.iter().map(|&b| minor(a, b)));
        }
        let j_row = support.iter().map(|&a| minor(j, a)).collect();
        Self {
            k,
            j,
            z_k,
            support,
            block,
            j_row,
        }
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `(G'_kk, G'_jk)` after row `k` is replaced by `row`, given as
    /// `(column, value)` pairs covering the support and the diagonal.
    pub fn redrawn(&self, row: &[(usize, f64)]) -> (Complex64, Complex64) {
        let mut diag = 0.0;
        let mut h = Vec::with_capacity(self.support.len());
        for &(col, v) in row {
            if col == self.k {
                diag = v;
            } else {
                h.push(v);
            }
        }
        debug_assert_eq!(h.len(), self.support.len());
        let dim = h.len();
        let mut quad = Complex64::new(0.0, 0.0);
        for (a, &ha) in h.iter().enumerate() {
            if ha == 0.0 {
                continue;
            }
            let line = &self.block[a * dim..(a + 1) * dim];
            let mut acc = Complex64::new(0.0, 0.0);
            for (gab, &hb) in line.iter().zip(&h) {
                acc += gab * hb;
            }
            quad += acc * ha;
        }
        let gkk = (Complex64::new(diag, 0.0) - self.z_k - quad).inv();
        let mut gj = Complex64::new(0.0, 0.0);
        for (gja, &ha) in self.j_row.iter().zip(&h) {
            gj += gja * ha;
        }
        (gkk, -gkk * gj)
    }

    pub fn j(&self) -> usize {
        self.j
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctKRow {
    pub trial: u32,
    pub k: usize,
    /// `|G_kj|^2`
    pub g_kj2: f64,
    /// Estimate of `E_k |G_kj|^2`.
    pub e_k: f64,
    pub se: f64,
    /// `|G_kj|^2 - E_k |G_kj|^2`
    pub q_k: f64,
    pub b_k: f64,
    /// `T_kj`
    pub t_kj: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctRow {
    pub trial: u32,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub j: usize,
    pub subtrials: u32,
    /// `|sum_{k != j} b_k Q_k|`
    pub averaged: f64,
    /// `median_k |Q_k| N max|b|`
    pub m1: f64,
    pub ratio: f64,
    /// `median_k SE_k N max|b|`
    pub noise: f64,
    pub noise_ratio: f64,
    /// `|G'_kj - G_kj|` for the original stream, worst `k`.
    pub shortcut_residual: f64,
    /// `sum_{k != j} b_k (E_k |G_kj|^2 - |M_k|^2 T_kj)`
    pub combination: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub combination_over_lambda3: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctSummary {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub j: usize,
    pub subtrials: u32,
    pub outer_trials: u32,
    pub ratio_median: Option<f64>,
    pub gain_target: f64,
    pub averaging_gain: bool,
    pub noise_gate: f64,
    pub noise_ratio_max: Option<f64>,
    pub noise_gate_passed: bool,
    /// Mean of `A^2` over outer trials.
    pub second_moment: Option<f64>,
    pub averaged_mean: Option<f64>,
    pub averaged_se: Option<f64>,
    pub m1_median: Option<f64>,
    pub shortcut_residual_max: f64,
    pub combination_over_lambda3_median: Option<f64>,
    pub complete: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluctReport {
    pub rows: Vec<FluctRow>,
    pub per_k: Vec<FluctKRow>,
    pub summary: FluctSummary,
}

impl FluctReport {
    pub fn output(&self) -> std::io::Result<RunOutput> {
        let mut out = RunOutput::default();
        out.add_csv("fluct", &self.rows)?;
        out.add_csv("fluct_k", &self.per_k)?;
        out.add_json("summary", &self.summary)?;
        Ok(out)
    }
}

pub fn run_fluct(cfg: &FluctConfig, seed: u64) -> Result<FluctReport, ExperimentError> {
    cfg.validate()?;
    let model = Model::build(&cfg.profile, &cfg.pert)?;
    let n = model.n();
    let w = model.w();
    let b = cfg.b.vector(n)?;
    let point = cfg.point.build("point")?;
    let sol = DysonSolver::new(&model.vars, point.ztilde())?.solve(&model.pert, &point, &cfg.solver)?;
    let b_max = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let j = cfg.j;

    let trials: Vec<Result<(FluctRow, Vec<FluctKRow>), ExperimentError>> = (0..cfg.outer_trials)
        .into_par_iter()
        .map(|trial| {
            let sampler = Sampler::new(&model.vars, &model.pert, cfg.ensemble, seed);
            let h = sampler.sample(trial).h;
            let gr = resolvent(&h, &point, w)?;
            let g = &gr.g;
            let t = t_matrix(g, &model.vars);
            let st = stats(g, &sol.big_m, &t);

            let per_k: Vec<(FluctKRow, f64)> = (0..n)
                .into_par_iter()
                .filter(|&k| k != j)
                .map(|k| {
                    let original = sampler.row(trial, 0, k);
                    let support = original.iter().map(|&(c, _)| c).filter(|&c| c != k).collect();
                    let minor = RowMinor::new(g, k, j, point.z_at(k, w), support);
                    let residual = (minor.redrawn(&original).1 - g[(j, k)]).norm();
                    let draws: Vec<f64> = (1..=cfg.subtrials)
                        .map(|s| minor.redrawn(&sampler.row(trial, s, k)).1.norm_sqr())
                        .collect();
                    let (e_k, se) = mean_and_se(&draws).unwrap_or((draws[0], 0.0));
                    let g_kj2 = g[(k, j)].norm_sqr();
                    let row = FluctKRow {
                        trial,
                        k,
                        g_kj2,
                        e_k,
                        se,
                        q_k: g_kj2 - e_k,
                        b_k: b[k],
                        t_kj: t.t[(k, j)],
                    };
                    (row, residual)
                })
                .collect();

            let scale = n as f64 * b_max;
            let abs_q: Vec<f64> = per_k.iter().map(|(r, _)| r.q_k.abs()).collect();
            let ses: Vec<f64> = per_k.iter().map(|(r, _)| r.se).collect();
            let m1 = median(&abs_q).unwrap_or(0.0) * scale;
            let noise = median(&ses).unwrap_or(0.0) * scale;
            let averaged = per_k.iter().map(|(r, _)| r.b_k * r.q_k).sum::<f64>().abs();
            let combination: f64 = per_k
                .iter()
                .map(|(r, _)| r.b_k * (r.e_k - sol.big_m[r.k].norm_sqr() * r.t_kj))
                .sum();
            let row = FluctRow {
                trial,
                seed,
                n,
                w,
                j,
                subtrials: cfg.subtrials,
                averaged,
                m1,
                ratio: averaged / m1,
                noise,
                noise_ratio: noise / m1,
                shortcut_residual: per_k.iter().map(|(_, r)| *r).fold(0.0, f64::max),
                combination,
                lambda: st.lambda,
                combination_over_lambda3: combination / st.lambda.powi(3),
            };
            Ok((row, per_k.into_iter().map(|(r, _)| r).collect()))
        })
        .collect();

    let mut rows = Vec::with_capacity(trials.len());
    let mut per_k = Vec::new();
    for trial in trials {
        let (row, ks) = trial?;
        rows.push(row);
        per_k.extend(ks);
    }

    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let averaged: Vec<f64> = rows.iter().map(|r| r.averaged).collect();
    let noisy = rows
        .iter()
        .find(|r| !(r.noise <= cfg.noise_gate * r.m1))
        .map(|r| (r.trial, r.noise, r.m1));
    let ratio_median = median(&ratios);
    let averaged_stats = mean_and_se(&averaged);
    let summary = FluctSummary {
        n,
        w,
        j,
        subtrials: cfg.subtrials,
        outer_trials: cfg.outer_trials,
        ratio_median,
        gain_target: GAIN_TARGET,
        averaging_gain: ratio_median.is_some_and(|r| r < 1.0 / GAIN_TARGET),
        noise_gate: cfg.noise_gate,
        noise_ratio_max: rows.iter().map(|r| r.noise_ratio).reduce(f64::max),
        noise_gate_passed: noisy.is_none(),
        second_moment: mean(&averaged.iter().map(|a| a * a).collect::<Vec<_>>()),
        averaged_mean: averaged_stats.map(|(m, _)| m),
        averaged_se: averaged_stats.map(|(_, se)| se),
        m1_median: median(&rows.iter().map(|r| r.m1).collect::<Vec<_>>()),
        shortcut_residual_max: rows.iter().map(|r| r.shortcut_residual).fold(0.0, f64::max),
        combination_over_lambda3_median: median(&rows.iter().map(|r| r.combination_over_lambda3).collect::<Vec<_>>()),
        complete: noisy.is_none(),
    };
    let report = FluctReport { rows, per_k, summary };
    match noisy {
        Some((trial, noise, m1)) => Err(ExperimentError::EstimatorNoise {
            trial,
            noise,
            gate: cfg.noise_gate,
            limit: cfg.noise_gate * m1,
            partial: Box::new(report),
        }),
        None => Ok(report),
    }
}
