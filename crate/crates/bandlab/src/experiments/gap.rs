//! `gap`: spectral gap of the periodic hopping form against its Fourier
//! closed form, plus remainder positivity.

use bandlab_core::stability::{default_remainder_log_n5, remainder_min_eigenvalue, spectral_gap};
use rayon::prelude::*;
use serde::Serialize;

use super::ExperimentError;
use crate::config::{ConfigError, GapConfig};
use crate::io::RunOutput;

#[derive(Debug, Clone, Serialize)]
pub struct GapRow {
    pub tlen: usize,
    pub w: usize,
    pub log_n5: f64,
    pub e1_eig: f64,
    pub e1_fourier: f64,
    pub relative_mismatch: f64,
    pub argmin_mode: usize,
    pub smallest_eig: f64,
    pub ground_overlap: f64,
    pub implied_c: f64,
    pub remainder_log_n5: Option<f64>,
    pub remainder_min_eig: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapSummary {
    pub max_relative_mismatch: f64,
    pub matches: bool,
    pub remainder_positive: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    pub summary: GapSummary,
}

/// Tolerance on the eigensolve versus the closed form.
pub const GAP_TOL: f64 = 1e-10;

/// Remainder eigenvalues are positive up to this roundoff.
pub const REMAINDER_TOL: f64 = 1e-10;

impl GapReport {
    pub fn output(&self) -> std::io::Result<RunOutput> {
        let mut out = RunOutput::default();
        out.add_csv("gap", &self.rows)?;
        out.add_json("summary", &self.summary)?;
        Ok(out)
    }
}

pub fn run_gap(cfg: &GapConfig) -> Result<GapReport, ExperimentError> {
    if cfg.cases.is_empty() {
        return Err(ConfigError::new("cases", "must not be empty").into());
    }
    let rows: Vec<Result<GapRow, ExperimentError>> = cfg
        .cases
        .par_iter()
        .map(|case| {
            let g = spectral_gap(case.tlen, case.w, cfg.log_n5)?;
            let (remainder_log_n5, remainder_min_eig) = if cfg.remainder {
                let l = cfg
                    .remainder_log_n5
                    .unwrap_or_else(|| default_remainder_log_n5(case.tlen, case.w));
                (Some(l), Some(remainder_min_eigenvalue(case.tlen, case.w, l)?))
            } else {
                (None, None)
            };
            Ok(GapRow {
                tlen: g.tlen,
                w: g.w,
                log_n5: g.log_n5,
                e1_eig: g.e1_eig,
                e1_fourier: g.e1_fourier,
                relative_mismatch: g.relative_mismatch,
                argmin_mode: g.argmin_mode,
                smallest_eig: g.smallest_eig,
                ground_overlap: g.ground_overlap,
                implied_c: g.implied_c,
                remainder_log_n5,
                remainder_min_eig,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let max_relative_mismatch = rows.iter().map(|r| r.relative_mismatch).fold(0.0, f64::max);
    let remainder_positive = cfg.remainder.then(|| {
        rows.iter()
            .all(|r| r.remainder_min_eig.is_some_and(|v| v >= -REMAINDER_TOL))
    });
    Ok(GapReport {
        summary: GapSummary {
            max_relative_mismatch,
            matches: max_relative_mismatch < GAP_TOL,
            remainder_positive,
        },
        rows,
    })
}
