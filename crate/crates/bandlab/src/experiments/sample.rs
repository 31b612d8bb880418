//! `sample-check`: Monte Carlo certificates of the sampler.

use bandlab_core::ensemble::{EnsembleSpec, Sampler};
use rayon::prelude::*;
use serde::Serialize;

use super::stats::mean_and_se;
use super::ExperimentError;
use crate::config::{check_trials, ConfigError, Model, SampleCheckConfig};
use crate::io::{blab_bytes, RunOutput};

/// Spot checks pass within this many standard errors.
pub const Z_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, Serialize)]
pub struct SpotRow {
    pub i: usize,
    pub j: usize,
    pub variance: f64,
    pub empirical_variance: f64,
    pub variance_se: f64,
    pub expected_mean: f64,
    pub empirical_mean: f64,
    pub mean_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentRow {
    pub p: u32,
    pub analytic_mu: f64,
    pub empirical_mu: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub trials: u32,
    pub ensemble: EnsembleSpec,
    pub spots_passed: usize,
    pub spots: usize,
    pub zero_outside_band: bool,
    pub symmetric: bool,
    pub reproducible: bool,
    pub moments: Vec<MomentRow>,
    pub dumped_trial: Option<u32>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub rows: Vec<SpotRow>,
    pub summary: SampleSummary,
    #[serde(skip)]
    pub dump: Option<Vec<u8>>,
}

impl SampleReport {
    pub fn output(&self) -> std::io::Result<RunOutput> {
        let mut out = RunOutput::default();
        out.add_csv("sample_check", &self.rows)?;
        out.add_json("summary", &self.summary)?;
        if let Some(bytes) = &self.dump {
            out.add_binary("matrix.blab", bytes.clone());
        }
        Ok(out)
    }
}

fn spot(index: usize, n: usize, reach: usize) -> (usize, usize) {
    let i = (index * 37 + 3) % n;
    let j = (i + index % (reach + 1)) % n;
    (i, j)
}

pub fn run_sample_check(cfg: &SampleCheckConfig, seed: u64) -> Result<SampleReport, ExperimentError> {
    check_trials(cfg.trials, "trials")?;
    if cfg.trials < 2 {
        return Err(ConfigError::new("trials", "need at least 2 trials").into());
    }
    let model = Model::build(&cfg.profile, &cfg.pert)?;
    let n = model.n();
    let sampler = Sampler::new(&model.vars, &model.pert, cfg.ensemble, seed);
    let reach = model.w();
    let spots: Vec<(usize, usize)> = (0..cfg.spot_checks).map(|k| spot(k, n, reach)).collect();

    let rows: Vec<SpotRow> = spots
        .par_iter()
        .map(|&(i, j)| {
            let xs: Vec<f64> = (0..cfg.trials).map(|t| sampler.entry(t, 0, i, j)).collect();
            let (empirical_mean, mean_se) = mean_and_se(&xs).expect("two or more trials");
            let expected_mean = if i == j { -model.pert.g[i] } else { 0.0 };
            let dev: Vec<f64> = xs.iter().map(|x| (x - expected_mean).powi(2)).collect();
            let (empirical_variance, variance_se) = mean_and_se(&dev).expect("two or more trials");
            let variance = model.vars.szeta()[(i, j)];
            // Constant squares (Rademacher) leave only summation roundoff.
            let var_tol = (Z_LIMIT * variance_se).max(1e-12);
            let mean_tol = (Z_LIMIT * mean_se).max(1e-12);
            SpotRow {
                i,
                j,
                variance,
                empirical_variance,
                variance_se,
                expected_mean,
                empirical_mean,
                mean_se,
                pass: (empirical_variance - variance).abs() <= var_tol
                    && (empirical_mean - expected_mean).abs() <= mean_tol,
            }
        })
        .collect();

    let first = sampler.sample(0);
    let reproducible = first == sampler.sample(0);
    let mut zero_outside_band = true;
    let mut symmetric = true;
    for i in 0..n {
        for j in 0..n {
            let v = first.h[(i, j)];
            if v.to_bits() != first.h[(j, i)].to_bits() {
                symmetric = false;
            }
            if i != j && model.vars.szeta()[(i, j)] == 0.0 && v != 0.0 {
                zero_outside_band = false;
            }
        }
    }

    let spec = EnsembleSpec::new(cfg.ensemble);
    let draws: Vec<f64> = (0..cfg.trials)
        .flat_map(|t| spots.iter().map(move |&(i, j)| (t, i, j)))
        .map(|(t, i, j)| sampler.xi(t, 0, i, j))
        .collect();
    let moments = spec
        .moment_certificate
        .iter()
        .map(|&(p, analytic_mu)| {
            let m = draws.iter().map(|x| x.abs().powi(p as i32)).sum::<f64>() / draws.len() as f64;
            MomentRow {
                p,
                analytic_mu,
                empirical_mu: m.powf(1.0 / p as f64),
            }
        })
        .collect();

    let dump = cfg.dump_trial.map(|t| blab_bytes(&sampler.sample(t).h));
    Ok(SampleReport {
        summary: SampleSummary {
            trials: cfg.trials,
            ensemble: spec,
            spots_passed: rows.iter().filter(|r| r.pass).count(),
            spots: rows.len(),
            zero_outside_band,
            symmetric,
            reproducible,
            moments,
            dumped_trial: cfg.dump_trial,
        },
        rows,
        dump,
    })
}
