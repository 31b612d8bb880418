//! Experiment runners behind the subcommands.
//!
//! Every runner fans out over trials with rayon and collects results in trial
//! order, so outputs do not depend on the size of the worker pool.

pub mod fluct;
pub mod gap;
pub mod identities;
pub mod ladder;
pub mod sample;
pub mod solve;
pub mod stability;
pub mod stats;

use bandlab_core::ensemble::philox4x32_10;
use bandlab_core::resolvent::ResolventError;
use bandlab_core::scalar::ScalarError;
use bandlab_core::stability::StabilityError;
use bandlab_core::vde::VdeError;

use crate::config::ConfigError;
use crate::io::RunOutput;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("InsufficientTrials: level {level} had {singular} singular of {trials} trials")]
    InsufficientTrials {
        level: usize,
        singular: usize,
        trials: usize,
        partial: Box<ladder::LadderReport>,
    },
    #[error("EstimatorNoise: outer trial {trial} has standard error {noise:e} above {gate} m1 = {limit:e}")]
    EstimatorNoise {
        trial: u32,
        noise: f64,
        gate: f64,
        limit: f64,
        partial: Box<fluct::FluctReport>,
    },
    #[error(transparent)]
    Vde(#[from] VdeError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Resolvent(#[from] ResolventError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    /// Outputs gathered before the failure, if the runner kept any.
    pub fn partial_output(&self) -> Option<std::io::Result<RunOutput>> {
        match self {
            ExperimentError::InsufficientTrials { partial, .. } => Some(partial.output()),
            ExperimentError::EstimatorNoise { partial, .. } => Some(partial.output()),
            _ => None,
        }
    }
}

/// Stream tag reserved for auxiliary draws (index choices, test vectors);
/// matrix entries only ever use small subtrial numbers.
const AUX_STREAM: u32 = u32::MAX;

/// Uniform in `[0, 1)` from the auxiliary stream of `trial`.
pub(crate) fn aux_uniform(seed: u64, trial: u32, tag: u32, index: u32) -> f64 {
    let block = philox4x32_10([trial, AUX_STREAM, tag, index], [seed as u32, (seed >> 32) as u32]);
    ((((block[0] as u64) << 32) | block[1] as u64) >> 11) as f64 / (1u64 << 53) as f64
}

pub(crate) fn aux_index(seed: u64, trial: u32, tag: u32, n: usize) -> usize {
    ((aux_uniform(seed, trial, tag, 0) * n as f64) as usize).min(n - 1)
}

/// Standard normal from the auxiliary stream by Box-Muller.
pub(crate) fn aux_gaussian(seed: u64, trial: u32, tag: u32, index: u32) -> f64 {
    let block = philox4x32_10([trial, AUX_STREAM, tag, index], [seed as u32, (seed >> 32) as u32]);
    let u1 = ((((block[0] as u64) << 32) | block[1] as u64) >> 11) as f64 + 0.5;
    let u2 = ((((block[2] as u64) << 32) | block[3] as u64) >> 11) as f64 + 0.5;
    let scale = 1.0 / (1u64 << 53) as f64;
    (-2.0 * (u1 * scale).ln()).sqrt() * (std::f64::consts::TAU * u2 * scale).cos()
}
