//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 when the config cannot be used, 3 when a run
//! fails after it started (partial outputs and an incomplete manifest are
//! left in the output directory).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use crate::config::{self, ConfigError};
use crate::experiments::{self, ExperimentError};
use crate::io::{Formats, RunOutput};
use crate::manifest::Manifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable that overrides `--seed`.
pub const SEED_ENV: &str = "BANDLAB_SEED";

#[derive(Debug, Parser)]
#[command(name = "bandlab", version, about = "Numerical experiments on random band matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the vector Dyson equation for M.
    SolveM(RunArgs),
    /// Stability operator norms over a grid of sizes.
    Stability(RunArgs),
    /// Spectral gap of the periodic hopping form.
    Gap(RunArgs),
    /// Statistical checks of the sampler.
    SampleCheck(RunArgs),
    /// Deterministic resolvent identities on sampled matrices.
    Identities(RunArgs),
    /// Monte Carlo statistics along the z~ ladder.
    Ladder(RunArgs),
    /// Fluctuation averaging via row resampling.
    Fluct(RunArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveM(_) => "solve-m",
            Command::Stability(_) => "stability",
            Command::Gap(_) => "gap",
            Command::SampleCheck(_) => "sample-check",
            Command::Identities(_) => "identities",
            Command::Ladder(_) => "ladder",
            Command::Fluct(_) => "fluct",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::SolveM(a)
            | Command::Stability(a)
            | Command::Gap(a)
            | Command::SampleCheck(a)
            | Command::Identities(a)
            | Command::Ladder(a)
            | Command::Fluct(a) => a,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct RunArgs {
    /// JSON config for the subcommand.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; BANDLAB_SEED takes precedence when set.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_threads)]
    threads: Threads,
    /// Output directory.
    #[arg(long, default_value = "bandlab-out")]
    out: PathBuf,
    /// Restrict outputs to one format; both are written by default.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Threads {
    Auto,
    Fixed(usize),
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s == "auto" {
        return Ok(Threads::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or `auto`, got `{s}`")),
        Ok(count) => Ok(Threads::Fixed(count)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<Option<FormatArg>> for Formats {
    fn from(arg: Option<FormatArg>) -> Self {
        match arg {
            None => Formats::BOTH,
            Some(FormatArg::Csv) => Formats { csv: true, json: false },
            Some(FormatArg::Json) => Formats { csv: false, json: true },
        }
    }
}

/// Seed precedence: `BANDLAB_SEED`, then `--seed`, then the config, then 0.
pub fn resolve_seed(env: Option<&str>, flag: Option<u64>, config: Option<u64>) -> Result<u64, ConfigError> {
    if let Some(raw) = env {
        return raw
            .trim()
            .parse()
            .map_err(|e| ConfigError::new(SEED_ENV, format!("`{raw}` is not an unsigned integer: {e}")));
    }
    Ok(flag.or(config).unwrap_or(0))
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(msg)) => {
            eprintln!("bandlab: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("bandlab: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn load<T: DeserializeOwned>(raw: &str) -> Result<T, ConfigError> {
    config::parse(raw)
}

fn execute(command: &Command) -> Result<(), Failure> {
    let args = command.args();
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", args.config.display())))?;
    let env_seed = std::env::var(SEED_ENV).ok();
    let env_seed = env_seed.as_deref();
    let formats = Formats::from(args.format);

    macro_rules! go {
        ($cfg:ty, $seeded:expr, $runner:expr) => {{
            let cfg: $cfg = load(&raw)?;
            let seed = resolve_seed(env_seed, args.seed, $seeded(&cfg))?;
            launch(command.name(), args, &raw, seed, formats, || $runner(&cfg, seed))
        }};
    }

    match command {
        Command::SolveM(_) => go!(config::SolveConfig, |_: &_| None, |c: &_, _| {
            experiments::solve::run_solve(c).and_then(|r| Ok(r.output()?))
        }),
        Command::Stability(_) => go!(config::StabilityConfig, |_: &_| None, |c: &_, _| {
            experiments::stability::run_stability(c).and_then(|r| Ok(r.output()?))
        }),
        Command::Gap(_) => go!(config::GapConfig, |_: &_| None, |c: &_, _| experiments::gap::run_gap(c)
            .and_then(|r| Ok(r.output()?))),
        Command::SampleCheck(_) => go!(
            config::SampleCheckConfig,
            |c: &config::SampleCheckConfig| c.master_seed,
            |c: &_, s| experiments::sample::run_sample_check(c, s).and_then(|r| Ok(r.output()?))
        ),
        Command::Identities(_) => go!(
            config::IdentitiesConfig,
            |c: &config::IdentitiesConfig| c.master_seed,
            |c: &_, s| experiments::identities::run_identities(c, s).and_then(|r| Ok(r.output()?))
        ),
        Command::Ladder(_) => go!(
            config::LadderConfig,
            |c: &config::LadderConfig| c.master_seed,
            |c: &_, s| experiments::ladder::run_ladder(c, s).and_then(|r| Ok(r.output()?))
        ),
        Command::Fluct(_) => go!(
            config::FluctConfig,
            |c: &config::FluctConfig| c.master_seed,
            |c: &_, s| experiments::fluct::run_fluct(c, s).and_then(|r| Ok(r.output()?))
        ),
    }
}

fn launch(
    command: &str,
    args: &RunArgs,
    raw: &str,
    seed: u64,
    formats: Formats,
    job: impl FnOnce() -> Result<RunOutput, ExperimentError> + Send,
) -> Result<(), Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(match args.threads {
            Threads::Auto => 0,
            Threads::Fixed(count) => count,
        })
        .build()
        .map_err(|e| Failure::Runtime(format!("cannot start worker pool: {e}")))?;
    let out = args.out.as_path();
    let mut manifest = Manifest::start(command, raw.as_bytes(), seed);
    manifest.write(out).map_err(|e| io_failure(out, e))?;

    match pool.install(job) {
        Ok(output) => {
            let written = output.write(out, formats).map_err(|e| io_failure(out, e))?;
            manifest.finish(written, None);
            manifest.write(out).map_err(|e| io_failure(out, e))
        }
        Err(err) => {
            let written = match err.partial_output() {
                Some(Ok(partial)) => partial.write(out, formats).unwrap_or_default(),
                _ => Vec::new(),
            };
            manifest.finish(written, Some(err.to_string()));
            manifest.write(out).map_err(|e| io_failure(out, e))?;
            match err {
                ExperimentError::Config(e) => Err(e.into()),
                other => Err(Failure::Runtime(other.to_string())),
            }
        }
    }
}

fn io_failure(dir: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("cannot write to {}: {e}", dir.display()))
}
