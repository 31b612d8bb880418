//! JSON run configurations, one schema per subcommand.
//!
//! Unknown fields are rejected so that a typo never silently falls back to a
//! default.

use bandlab_core::ensemble::EnsembleKind;
use bandlab_core::profile::{BandProfile, KernelKind, PerturbationSpec, VarianceMatrices};
use bandlab_core::scalar::{SpectralPoint, DEFAULT_KAPPA};
use bandlab_core::vde::SolverOptions;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A configuration that cannot be used, with the dotted path of the field at fault.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error at `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl ToString) -> Self {
        Self {
            field: field.into(),
            reason: reason.to_string(),
        }
    }
}

/// Parses `text` as `T`, reporting the path and location of the first error.
pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let field = if path == "." { "<root>".to_string() } else { path };
        ConfigError::new(field, inner)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub n: usize,
    pub w: usize,
    #[serde(default = "default_kernel")]
    pub kind: KernelKind,
}

fn default_kernel() -> KernelKind {
    KernelKind::Uniform
}

impl ProfileConfig {
    pub fn build(&self, field: &str) -> Result<BandProfile, ConfigError> {
        BandProfile::build(self.n, self.w, self.kind).map_err(|e| ConfigError::new(field, e))
    }
}

/// Diagonal perturbation `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    /// A single nonzero entry at storage index `index`.
    Bump {
        index: usize,
        value: f64,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl GConfig {
    pub fn vector(&self, n: usize, field: &str) -> Result<Vec<f64>, ConfigError> {
        match self {
            GConfig::Zero => Ok(vec![0.0; n]),
            GConfig::Constant { value } => Ok(vec![*value; n]),
            GConfig::Bump { index, value } => {
                if *index >= n {
                    return Err(ConfigError::new(
                        format!("{field}.index"),
                        format!("must be below N = {n}"),
                    ));
                }
                let mut g = vec![0.0; n];
                g[*index] = *value;
                Ok(g)
            }
            GConfig::Explicit { values } => {
                if values.len() != n {
                    return Err(ConfigError::new(
                        format!("{field}.values"),
                        format!("has {} entries, expected N = {n}", values.len()),
                    ));
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PertConfig {
    #[serde(default)]
    pub zeta: f64,
    #[serde(default)]
    pub g: GConfig,
}

/// Profile, variance matrices and perturbation built together.
#[derive(Debug, Clone)]
pub struct Model {
    pub profile: BandProfile,
    pub vars: VarianceMatrices,
    pub pert: PerturbationSpec,
}

impl Model {
    pub fn build(profile: &ProfileConfig, pert: &PertConfig) -> Result<Self, ConfigError> {
        let built = profile.build("profile")?;
        let vars = VarianceMatrices::build(&built, pert.zeta).map_err(|e| ConfigError::new("pert.zeta", e))?;
        let g = pert.g.vector(profile.n, "pert.g")?;
        let pert = PerturbationSpec::new(pert.zeta, g).map_err(|e| ConfigError::new("pert", e))?;
        Ok(Self {
            profile: built,
            vars,
            pert,
        })
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }

    pub fn w(&self) -> usize {
        self.profile.w()
    }
}

/// `z = e + i im_z` on the block, `z~ = e + i im_ztilde` elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub e: f64,
    pub im_z: f64,
    pub im_ztilde: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

pub(crate) fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl PointConfig {
    pub fn build(&self, field: &str) -> Result<SpectralPoint, ConfigError> {
        SpectralPoint::with_kappa(
            Complex64::new(self.e, self.im_z),
            Complex64::new(self.e, self.im_ztilde),
            self.kappa,
        )
        .map_err(|e| ConfigError::new(field, e))
    }
}

fn default_ensemble() -> EnsembleKind {
    EnsembleKind::Gaussian
}

fn check_positive(value: usize, field: &str) -> Result<(), ConfigError> {
    if value == 0 {
        return Err(ConfigError::new(field, "must be positive"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub zeta: [f64; 3],
    pub g: [f64; 3],
    /// Values of `Im z - Im z~`.
    pub dz: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub profile: ProfileConfig,
    #[serde(default)]
    pub pert: PertConfig,
    pub point: PointConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Perturbation sweep around `z~` with constant `g`; overrides nothing above.
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_far_multiple")]
    pub far_multiple: usize,
}

fn default_far_multiple() -> usize {
    bandlab_core::stability::DEFAULT_FAR_MULTIPLE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeCase {
    pub n: usize,
    pub w: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default = "default_kernel")]
    pub kind: KernelKind,
    pub cases: Vec<SizeCase>,
    pub e: f64,
    pub im_z: f64,
    /// Real `z~ = e` unless set.
    #[serde(default)]
    pub im_ztilde: f64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default = "default_far_multiple")]
    pub far_multiple: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Largest allowed ratio between the extreme fitted constants.
    #[serde(default = "default_spread")]
    pub max_spread: f64,
}

fn default_tau() -> f64 {
    bandlab_core::stability::DEFAULT_TAU
}

fn default_spread() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapCase {
    pub tlen: usize,
    pub w: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    pub cases: Vec<GapCase>,
    #[serde(default = "default_log_n5")]
    pub log_n5: f64,
    /// Also check positivity of the remainder form; `None` uses `2 Tlen / W`.
    #[serde(default = "default_true")]
    pub remainder: bool,
    #[serde(default)]
    pub remainder_log_n5: Option<f64>,
}

fn default_log_n5() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCheckConfig {
    pub profile: ProfileConfig,
    #[serde(default)]
    pub pert: PertConfig,
    #[serde(default = "default_ensemble")]
    pub ensemble: EnsembleKind,
    pub trials: u32,
    #[serde(default = "default_spot_checks")]
    pub spot_checks: usize,
    /// Write trial `dump_trial` as a binary matrix file.
    #[serde(default)]
    pub dump_trial: Option<u32>,
    #[serde(default)]
    pub master_seed: Option<u64>,
}

fn default_spot_checks() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitiesConfig {
    pub profile: ProfileConfig,
    #[serde(default)]
    pub pert: PertConfig,
    #[serde(default = "default_ensemble")]
    pub ensemble: EnsembleKind,
    pub point: PointConfig,
    pub trials: u32,
    /// Imaginary offset between the two parameters of the interpolation identity.
    #[serde(default = "default_interp_shift")]
    pub interp_shift: f64,
    #[serde(default = "default_identity_tol")]
    pub tol: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub master_seed: Option<u64>,
    /// Largest N accepted for dense inversion.
    #[serde(default = "default_max_n")]
    pub max_n: usize,
}

fn default_interp_shift() -> f64 {
    0.5
}

fn default_identity_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub profile: ProfileConfig,
    #[serde(default)]
    pub pert: PertConfig,
    #[serde(default = "default_ensemble")]
    pub ensemble: EnsembleKind,
    pub e: f64,
    pub im_z: f64,
    pub eps0: f64,
    #[serde(default = "default_eps_star")]
    pub eps_star: f64,
    #[serde(default = "default_eps_upstar")]
    pub eps_upstar: f64,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_trials")]
    pub trials_per_level: u32,
    #[serde(default)]
    pub master_seed: Option<u64>,
    /// Largest N accepted for dense inversion.
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Exponent `delta` of the probe hypothesis `Lambda <= N^-delta`.
    #[serde(default = "default_probe_delta")]
    pub probe_delta: f64,
    /// Multiplicative slack standing in for `N^tau`.
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn default_eps_star() -> f64 {
    0.2
}

fn default_eps_upstar() -> f64 {
    0.01
}

fn default_levels() -> usize {
    4
}

fn default_trials() -> u32 {
    20
}

fn default_probe_delta() -> f64 {
    0.1
}

fn default_slack() -> f64 {
    10.0
}

/// Smallest admissible `Im z~_n` on the deepest level.
pub const LADDER_FLOOR: f64 = 1e-10;

impl LadderConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_dense_size(&self.profile, self.max_n)?;
        check_positive(self.levels, "levels")?;
        check_positive(self.trials_per_level as usize, "trials_per_level")?;
        if !(self.im_z > 0.0) {
            return Err(ConfigError::new("im_z", "must be positive"));
        }
        if !(self.eps0 > 0.0 && self.eps0 < self.eps_star / 5.0) {
            return Err(ConfigError::new(
                "eps0",
                format!("must lie in (0, eps_star/5) = (0, {})", self.eps_star / 5.0),
            ));
        }
        let deepest = self.level_im_ztilde(self.levels - 1);
        if deepest < LADDER_FLOOR {
            return Err(ConfigError::new(
                "levels",
                format!("Im z~ reaches {deepest:e} on the last level, below {LADDER_FLOOR:e}"),
            ));
        }
        if !(self.probe_delta > 0.0) {
            return Err(ConfigError::new("probe_delta", "must be positive"));
        }
        Ok(())
    }

    /// `Im z~_n = N^{-n eps0} Im z`
    pub fn level_im_ztilde(&self, level: usize) -> f64 {
        (self.profile.n as f64).powf(-(level as f64) * self.eps0) * self.im_z
    }
}

/// Deterministic weights `b_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightConfig {
    /// `b_k = 1/N`
    #[default]
    Uniform,
    Zero,
    Explicit {
        values: Vec<f64>,
    },
}

impl WeightConfig {
    pub fn vector(&self, n: usize) -> Result<Vec<f64>, ConfigError> {
        let b = match self {
            WeightConfig::Uniform => vec![1.0 / n as f64; n],
            WeightConfig::Zero => vec![0.0; n],
            WeightConfig::Explicit { values } => {
                if values.len() != n {
                    return Err(ConfigError::new(
                        "b.values",
                        format!("has {} entries, expected N = {n}", values.len()),
                    ));
                }
                values.clone()
            }
        };
        let limit = 1.0 / n as f64;
        if b.iter().any(|v| !(v.abs() <= limit * (1.0 + 1e-12))) {
            return Err(ConfigError::new(
                "b",
                format!("entries must satisfy |b_k| <= 1/N = {limit:e}"),
            ));
        }
        Ok(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluctConfig {
    pub profile: ProfileConfig,
    #[serde(default)]
    pub pert: PertConfig,
    #[serde(default = "default_ensemble")]
    pub ensemble: EnsembleKind,
    pub point: PointConfig,
    /// Column index `j` (storage order).
    #[serde(default)]
    pub j: usize,
    #[serde(default)]
    pub b: WeightConfig,
    #[serde(default = "default_subtrials")]
    pub subtrials: u32,
    #[serde(default = "default_trials")]
    pub outer_trials: u32,
    /// Ladder step bounding how far `Im z~` may sit below `Im z`.
    #[serde(default = "default_fluct_eps0")]
    pub eps0: f64,
    /// Largest allowed ratio of the estimator standard error to `m1`.
    #[serde(default = "default_noise_gate")]
    pub noise_gate: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub master_seed: Option<u64>,
    /// Largest N accepted for dense inversion.
    #[serde(default = "default_max_n")]
    pub max_n: usize,
}

fn default_subtrials() -> u32 {
    200
}

fn default_fluct_eps0() -> f64 {
    0.03
}

fn default_noise_gate() -> f64 {
    0.2
}

impl FluctConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_dense_size(&self.profile, self.max_n)?;
        check_positive(self.subtrials as usize, "subtrials")?;
        check_positive(self.outer_trials as usize, "outer_trials")?;
        if self.j >= self.profile.n {
            return Err(ConfigError::new("j", format!("must be below N = {}", self.profile.n)));
        }
        let floor = self.point.im_z * (self.profile.n as f64).powf(-self.eps0);
        if self.point.im_ztilde < floor {
            return Err(ConfigError::new(
                "point.im_ztilde",
                format!("must be at least Im z N^-eps0 = {floor:e}"),
            ));
        }
        Ok(())
    }
}

/// Default cap on `N` for commands that invert dense `N x N` matrices.
pub const DEFAULT_MAX_N: usize = 4096;

fn default_max_n() -> usize {
    DEFAULT_MAX_N
}

pub fn check_dense_size(profile: &ProfileConfig, max_n: usize) -> Result<(), ConfigError> {
    if profile.n > max_n {
        return Err(ConfigError::new(
            "profile.n",
            format!("N = {} exceeds max_n = {max_n}", profile.n),
        ));
    }
    Ok(())
}

pub fn check_trials(trials: u32, field: &str) -> Result<(), ConfigError> {
    check_positive(trials as usize, field)
}
