use bandlab::config::{self, FluctConfig};
use bandlab::experiments::fluct::{run_fluct, RowMinor};
use bandlab::experiments::ExperimentError;
use bandlab_core::ensemble::{EnsembleKind, Sampler};
use bandlab_core::profile::{BandProfile, KernelKind, PerturbationSpec, VarianceMatrices};
use bandlab_core::resolvent::resolvent;
use bandlab_core::scalar::SpectralPoint;
use num_complex::Complex64;

fn fluct_cfg(text: &str) -> FluctConfig {
    config::parse(text).unwrap()
}

#[test]
fn shortcut_matches_full_reinversion() {
    let (n, w) = (60, 6);
    let profile = BandProfile::build(n, w, KernelKind::Triangular).unwrap();
    let vars = VarianceMatrices::build(&profile, 0.02).unwrap();
    let pert = PerturbationSpec::new(0.02, (0..n).map(|i| 0.01 * (i % 3) as f64).collect()).unwrap();
    let point = SpectralPoint::new(Complex64::new(0.4, 0.15), Complex64::new(0.4, 0.05)).unwrap();
    for kind in [EnsembleKind::Gaussian, EnsembleKind::Uniform] {
        let sampler = Sampler::new(&vars, &pert, kind, 99);
        let base = sampler.sample(2);
        let g = resolvent(&base.h, &point, w).unwrap().g;
        for (k, j) in [(0, 5), (3, 40), (30, 29), (59, 0)] {
            let original = sampler.row(2, 0, k);
            let support = original.iter().map(|&(c, _)| c).filter(|&c| c != k).collect();
            let minor = RowMinor::new(&g, k, j, point.z_at(k, w), support);
            let (gkk, gjk) = minor.redrawn(&original);
            assert!((gkk - g[(k, k)]).norm() < 1e-11);
            assert!((gjk - g[(j, k)]).norm() < 1e-11);
            for sub in 1..4 {
                let fresh = resolvent(&sampler.resample_row(&base, k, sub).h, &point, w).unwrap().g;
                let (gkk, gjk) = minor.redrawn(&sampler.row(2, sub, k));
                assert!((gkk - fresh[(k, k)]).norm() < 1e-10, "k={k} sub={sub}");
                assert!((gjk - fresh[(j, k)]).norm() < 1e-10, "k={k} j={j} sub={sub}");
            }
        }
    }
}

#[test]
fn zero_weights_give_zero_average() {
    let cfg = fluct_cfg(
        r#"{ "profile": { "n": 60, "w": 6 }, "point": { "e": 0.0, "im_z": 0.2, "im_ztilde": 0.2 },
             "b": { "kind": "zero" }, "subtrials": 20, "outer_trials": 3 }"#,
    );
    let report = run_fluct(&cfg, 4).unwrap();
    assert!(report.rows.iter().all(|r| r.averaged == 0.0));
    assert_eq!(report.summary.second_moment, Some(0.0));
}

#[test]
fn per_k_rows_are_consistent() {
    let cfg = fluct_cfg(
        r#"{ "profile": { "n": 80, "w": 8 }, "point": { "e": 0.1, "im_z": 0.3, "im_ztilde": 0.3 },
             "j": 17, "subtrials": 400, "outer_trials": 2 }"#,
    );
    let report = run_fluct(&cfg, 8).unwrap();
    assert_eq!(report.per_k.len(), 2 * 79);
    assert!(report.per_k.iter().all(|r| r.k != 17));
    for row in &report.rows {
        let ks: Vec<_> = report.per_k.iter().filter(|r| r.trial == row.trial).collect();
        let averaged: f64 = ks.iter().map(|r| r.b_k * r.q_k).sum::<f64>().abs();
        assert!((averaged - row.averaged).abs() <= 1e-15 * averaged.max(1.0));
        assert!(row.shortcut_residual < 1e-12);
        assert!(ks.iter().all(|r| (r.q_k - (r.g_kj2 - r.e_k)).abs() == 0.0));
    }
}

#[test]
fn second_moment_decreases_with_size() {
    let moment = |n: usize| {
        let cfg = fluct_cfg(&format!(
            r#"{{ "profile": {{ "n": {n}, "w": {} }}, "point": {{ "e": 0.0, "im_z": 0.2, "im_ztilde": 0.2 }},
                 "subtrials": 400, "outer_trials": 10 }}"#,
            n / 10
        ));
        run_fluct(&cfg, 21).unwrap().summary.second_moment.unwrap()
    };
    let (small, large) = (moment(100), moment(200));
    assert!(large < small, "{small:e} -> {large:e}");
}

#[test]
fn too_few_subtrials_trip_the_noise_gate() {
    let cfg = fluct_cfg(
        r#"{ "profile": { "n": 60, "w": 6 }, "point": { "e": 0.0, "im_z": 0.2, "im_ztilde": 0.2 },
             "subtrials": 2, "outer_trials": 2 }"#,
    );
    match run_fluct(&cfg, 0) {
        Err(ExperimentError::EstimatorNoise { partial, .. }) => {
            assert!(!partial.summary.complete);
            assert_eq!(partial.rows.len(), 2);
        }
        other => panic!("expected EstimatorNoise, got {other:?}"),
    }
}

#[test]
fn weights_and_point_are_validated() {
    let heavy = fluct_cfg(
        r#"{ "profile": { "n": 50, "w": 5 }, "point": { "e": 0.0, "im_z": 0.2, "im_ztilde": 0.2 },
             "b": { "kind": "explicit", "values": [0.5] } }"#,
    );
    assert!(matches!(run_fluct(&heavy, 0), Err(ExperimentError::Config(e)) if e.field == "b.values"));
    let low =
        fluct_cfg(r#"{ "profile": { "n": 50, "w": 5 }, "point": { "e": 0.0, "im_z": 0.2, "im_ztilde": 0.001 } }"#);
    assert!(matches!(run_fluct(&low, 0), Err(ExperimentError::Config(e)) if e.field == "point.im_ztilde"));
}
