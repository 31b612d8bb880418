//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bandlab::config::{self, FluctConfig, GapConfig, IdentitiesConfig, LadderConfig, SolveConfig, StabilityConfig};
use bandlab::experiments::{fluct, gap, identities, ladder, solve, stability};
use bandlab_core::ensemble::philox4x32_10;
use bandlab_core::profile::{BandProfile, KernelKind, PerturbationSpec, VarianceMatrices};
use bandlab_core::scalar::{msc, SpectralPoint};
use bandlab_core::vde::{equation_residual, DysonSolver, SolverOptions};
use num_complex::Complex64;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn cfg<T: serde::de::DeserializeOwned>(text: &str) -> T {
    config::parse(text).unwrap_or_else(|e| panic!("acceptance config: {e}"))
}

fn identities_criterion() -> Verdict {
    let c: IdentitiesConfig = cfg(r#"{
        "profile": { "n": 400, "w": 40 },
        "pert": { "zeta": 0.01, "g": { "kind": "bump", "index": 7, "value": 0.01 } },
        "point": { "e": 0.2, "im_z": 0.1, "im_ztilde": 0.05 },
        "trials": 50, "tol": 1e-9
    }"#);
    let report = identities::run_identities(&c, 42).unwrap();
    let s = &report.summary;
    verdict(
        s.all_pass && s.worst < 1e-9 && report.rows.len() == 50,
        format!(
            "worst residual {:.2e} over {} trials (resolvent {:.1e}, T-eq {:.1e}, interp {:.1e}, Ward {:.1e}, quad {:.1e})",
            s.worst,
            report.rows.len(),
            s.resolvent_identities,
            s.t_equation,
            s.interpolation,
            s.ward,
            s.quadratic_form
        ),
    )
}

fn dyson_criterion() -> Verdict {
    let n = 2048;
    let profile = BandProfile::build(n, 64, KernelKind::Uniform).unwrap();
    let vars = VarianceMatrices::build(&profile, 0.01).unwrap();
    let g: Vec<f64> = (0..n).map(|i| 0.004 * ((i as f64) * 0.11).cos()).collect();
    let pert = PerturbationSpec::new(0.01, g).unwrap();
    let ztilde = Complex64::new(0.3, 0.05);
    let point = SpectralPoint::new(ztilde + Complex64::new(0.0, 0.01), ztilde).unwrap();
    let opts = SolverOptions::default();
    let solver = DysonSolver::new(&vars, ztilde).unwrap();
    let first = solver.solve(&pert, &point, &opts).unwrap();
    let residual = equation_residual(&vars, &pert, &point, &first.big_m);
    let start: Vec<Complex64> = (0..n)
        .map(|i| {
            let r = philox4x32_10([i as u32, 1, 0, 0], [5, 0]);
            Complex64::from_polar(
                0.05 * r[0] as f64 / u32::MAX as f64,
                r[1] as f64 / u32::MAX as f64 * std::f64::consts::TAU,
            )
        })
        .collect();
    let second = solver.solve_from(&pert, &point, &opts, Some(&start)).unwrap();
    let gap = first
        .big_m
        .iter()
        .zip(&second.big_m)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);

    let flat = VarianceMatrices::build(&profile, 0.0).unwrap();
    let z = Complex64::new(-0.5, 0.1);
    let trivial = DysonSolver::new(&flat, z)
        .unwrap()
        .solve(&PerturbationSpec::zero(n), &SpectralPoint::diagonal(z).unwrap(), &opts)
        .unwrap();
    let m = msc(z).unwrap();
    let exact = trivial.iterations == 1 && trivial.big_m.iter().all(|v| *v == m);
    verdict(
        residual < 1e-12 && gap < 1e-11 && exact,
        format!("residual {residual:.2e}, two-start gap {gap:.2e}, trivial case exact in one step: {exact}"),
    )
}

fn stability_criterion() -> Verdict {
    let c: StabilityConfig = cfg(r#"{
        "cases": [ { "n": 512, "w": 64 }, { "n": 1024, "w": 128 }, { "n": 2048, "w": 256 } ],
        "e": 0.0, "im_z": 0.05
    }"#);
    let report = stability::run_stability(&c).unwrap();
    let s = &report.summary;
    verdict(
        s.spread < 4.0,
        format!(
            "fitted constants in [{:.4}, {:.4}], spread {:.4}",
            s.fitted_c_min, s.fitted_c_max, s.spread
        ),
    )
}

fn decay_criterion() -> Verdict {
    let c: SolveConfig = cfg(r#"{
        "profile": { "n": 2000, "w": 100 },
        "point": { "e": 0.3, "im_z": 0.1, "im_ztilde": 0.1 },
        "sweep": { "zeta": [0.0, 0.005, 0.01], "g": [0.0, 0.005, 0.01], "dz": [0.0, 0.005, 0.01] }
    }"#);
    let report = solve::run_solve(&c).unwrap();
    let stab = &report.summary.stability;
    let sweep = report.summary.sweep.as_ref().expect("sweep requested");
    verdict(
        stab.far_radius == 800 && stab.far_max < 1e-8 && sweep.points == 27 && sweep.fitted_c < 20.0,
        format!(
            "max entry beyond distance {} is {:.2e}; fitted C {:.4} over {} sweep points",
            stab.far_radius, stab.far_max, sweep.fitted_c, sweep.points
        ),
    )
}

fn gap_criterion() -> Verdict {
    let c: GapConfig =
        cfg(r#"{ "cases": [ { "tlen": 64, "w": 8 }, { "tlen": 128, "w": 16 }, { "tlen": 256, "w": 32 } ] }"#);
    let report = gap::run_gap(&c).unwrap();
    let s = &report.summary;
    verdict(
        s.matches && s.max_relative_mismatch < 1e-10,
        format!("max relative mismatch {:.2e}", s.max_relative_mismatch),
    )
}

fn ladder_for(w: usize) -> ladder::LadderReport {
    let c: LadderConfig = cfg(&format!(
        r#"{{ "profile": {{ "n": 1024, "w": {w} }}, "e": 0.0, "im_z": 0.1, "eps0": 0.03,
             "levels": 1, "trials_per_level": 20, "ensemble": "gaussian" }}"#
    ));
    ladder::run_ladder(&c, 7).unwrap()
}

fn ladder_criterion() -> Verdict {
    let narrow = ladder_for(128);
    let wide = ladder_for(256);
    let (a, b) = (narrow.median_lambda(0).unwrap(), wide.median_lambda(0).unwrap());
    let ratio = b / a;
    let bound_all = |r: &ladder::LadderReport| r.rows.iter().all(|row| row.t_bound_holds == Some(true));
    let bounds = bound_all(&narrow) && bound_all(&wide);
    verdict(
        (0.49..=1.01).contains(&ratio) && bounds,
        format!("median Lambda {a:.4} (W=128) -> {b:.4} (W=256), ratio {ratio:.4}; T bound on all 40 trials: {bounds}"),
    )
}

fn fluct_criterion() -> Verdict {
    let c: FluctConfig = cfg(r#"{
        "profile": { "n": 1000, "w": 100 },
        "point": { "e": 0.0, "im_z": 0.1, "im_ztilde": 0.1 },
        "subtrials": 200, "outer_trials": 20
    }"#);
    match fluct::run_fluct(&c, 11) {
        Ok(report) => {
            let s = &report.summary;
            let ratio = s.ratio_median.unwrap_or(f64::INFINITY);
            verdict(
                ratio < 1.0 / 3.0 && s.noise_gate_passed,
                format!(
                    "median A/m1 {ratio:.4}; noise gate passed, worst SE/m1 {:.3}",
                    s.noise_ratio_max.unwrap_or(f64::NAN)
                ),
            )
        }
        Err(e) => verdict(false, e.to_string()),
    }
}

const DETERMINISM_CONFIGS: [(&str, &str); 7] = [
    (
        "solve-m",
        r#"{ "profile": { "n": 300, "w": 15 }, "pert": { "zeta": 0.01, "g": { "kind": "constant", "value": 0.002 } },
             "point": { "e": 0.1, "im_z": 0.1, "im_ztilde": 0.08 },
             "sweep": { "zeta": [0.0, 0.005, 0.01], "g": [0.0, 0.005, 0.01], "dz": [0.0, 0.005, 0.01] } }"#,
    ),
    (
        "stability",
        r#"{ "cases": [ { "n": 128, "w": 16 }, { "n": 256, "w": 32 } ], "e": 0.0, "im_z": 0.05 }"#,
    ),
    (
        "gap",
        r#"{ "cases": [ { "tlen": 32, "w": 4 }, { "tlen": 64, "w": 8 } ] }"#,
    ),
    (
        "sample-check",
        r#"{ "profile": { "n": 60, "w": 5 }, "trials": 40, "dump_trial": 1 }"#,
    ),
    (
        "identities",
        r#"{ "profile": { "n": 80, "w": 8 }, "point": { "e": 0.0, "im_z": 0.2, "im_ztilde": 0.1 }, "trials": 6 }"#,
    ),
    (
        "ladder",
        r#"{ "profile": { "n": 120, "w": 12 }, "e": 0.1, "im_z": 0.2, "eps0": 0.03, "levels": 3, "trials_per_level": 6 }"#,
    ),
    (
        "fluct",
        r#"{ "profile": { "n": 100, "w": 10 }, "point": { "e": 0.0, "im_z": 0.2, "im_ztilde": 0.2 },
             "subtrials": 200, "outer_trials": 3 }"#,
    ),
];

fn run_cli(command: &str, config: &Path, out: &Path, threads: &str) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_bandlab"))
        .args([command, "--config"])
        .arg(config)
        .args(["--seed", "7", "--threads", threads, "--out"])
        .arg(out)
        .env_remove("BANDLAB_SEED")
        .status()
        .expect("spawn bandlab")
        .code()
        .unwrap_or(-1)
}

/// Every output file except the manifest, sorted by name.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != bandlab::manifest::MANIFEST_NAME)
        .map(|p: PathBuf| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn determinism_criterion() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let mut failures = Vec::new();
    let mut compared = 0;
    for (command, text) in DETERMINISM_CONFIGS {
        let config = tmp.path().join(format!("{command}.json"));
        std::fs::write(&config, text).unwrap();
        let runs: Vec<_> = ["1", "3"]
            .iter()
            .map(|threads| {
                let out = tmp.path().join(format!("{command}-{threads}"));
                (run_cli(command, &config, &out, threads), outputs(&out))
            })
            .collect();
        let (code_a, files_a) = &runs[0];
        let (code_b, files_b) = &runs[1];
        if *code_a != 0 || *code_b != 0 {
            failures.push(format!("{command} exited {code_a}/{code_b}"));
        } else if files_a.is_empty() || files_a != files_b {
            failures.push(format!("{command} outputs differ"));
        } else {
            compared += files_a.len();
        }
    }
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{compared} files byte-identical across --threads 1 and 3 for all 7 subcommands")
        } else {
            failures.join("; ")
        },
    )
}

type Criterion = (&'static str, Duration, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 exact identities", Duration::from_secs(120), identities_criterion),
        ("2 Dyson solver", Duration::from_secs(10), dyson_criterion),
        ("3 stability scaling", Duration::from_secs(600), stability_criterion),
        ("4 decay certificates", Duration::from_secs(300), decay_criterion),
        ("5 spectral gap", Duration::from_secs(60), gap_criterion),
        ("6 local-law scaling", Duration::from_secs(1800), ladder_criterion),
        ("7 fluctuation averaging", Duration::from_secs(2700), fluct_criterion),
        ("8 determinism", Duration::from_secs(1800), determinism_criterion),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let v = check();
        let elapsed = start.elapsed();
        let pass = v.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            v.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
