use bandlab::config::{self, LadderConfig};
use bandlab::experiments::ladder::{phi1, phi_goal, run_ladder, self_consistent_probe};
use bandlab::experiments::ExperimentError;

fn ladder_cfg(text: &str) -> LadderConfig {
    config::parse(text).unwrap()
}

#[test]
fn probe_holds_far_from_the_axis() {
    let cfg = ladder_cfg(
        r#"{ "profile": { "n": 512, "w": 64 }, "e": 0.0, "im_z": 1.0, "eps0": 0.03, "levels": 1, "trials_per_level": 50 }"#,
    );
    let report = run_ladder(&cfg, 3).unwrap();
    let probe = report.summary.probe;
    assert_eq!(probe.included + probe.excluded, 50);
    assert!(probe.included > 0);
    assert_eq!(probe.fraction, Some(1.0), "{probe:?}");
}

#[test]
fn probe_with_small_zeta() {
    let cfg = ladder_cfg(
        r#"{ "profile": { "n": 512, "w": 64 }, "pert": { "zeta": 0.01 }, "e": 0.2, "im_z": 1.0, "eps0": 0.03,
             "levels": 1, "trials_per_level": 30 }"#,
    );
    let report = run_ladder(&cfg, 5).unwrap();
    let fraction = report.summary.probe.fraction.unwrap();
    assert!(fraction >= 0.9, "{fraction}");
}

#[test]
fn probe_filter_counts_exclusions() {
    // N = 100, delta = 0.5: threshold 0.1.
    let samples = [(0.05, 0.001), (0.05, 0.0), (0.2, 1.0), (0.1, 0.01)];
    let probe = self_consistent_probe(&samples, 100, 0.5, 10.0);
    assert_eq!((probe.included, probe.excluded, probe.satisfied), (3, 1, 2));
    assert!((probe.fraction.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(self_consistent_probe(&[(1.0, 1.0)], 100, 0.5, 10.0).fraction, None);
}

#[test]
fn ladder_invariants() {
    let cfg = ladder_cfg(
        r#"{ "profile": { "n": 200, "w": 20, "kind": "triangular" }, "e": -0.3, "im_z": 0.3, "eps0": 0.03,
             "levels": 4, "trials_per_level": 8 }"#,
    );
    let report = run_ladder(&cfg, 1).unwrap();
    let s = &report.summary;
    assert_eq!(report.rows.len(), 32);
    let step = 200f64.powf(-0.03);
    for pair in s.levels.windows(2) {
        let ratio = pair[1].im_ztilde / pair[0].im_ztilde;
        assert!((ratio - step).abs() < 1e-12);
    }
    assert_eq!(s.levels[0].im_ztilde, 0.3);
    for (index, row) in report.rows.iter().enumerate() {
        assert_eq!((row.level, row.trial as usize), (index / 8, index % 8));
        assert_eq!(row.t_bound_holds, Some(true));
        if row.level == 0 {
            assert!(row.ward_gap.unwrap() < 1e-8);
        } else {
            assert!(row.ward_gap.is_none());
        }
    }
    assert!(s.t_bound_all);
    // The same matrix feeds every level, so level 0 alone reproduces level 0.
    let single = run_ladder(
        &LadderConfig {
            levels: 1,
            ..cfg.clone()
        },
        1,
    )
    .unwrap();
    for (a, b) in single.rows.iter().zip(&report.rows) {
        assert_eq!(a.lambda, b.lambda);
    }
}

#[test]
fn bound_formulas() {
    let (n, w, eta) = (1024, 128, 0.1);
    let goal = phi_goal(n, w, eta);
    assert!((goal - (1.0 / (12.8f64).sqrt() + 32.0 / 128.0)).abs() < 1e-15);
    // With vanishing inputs only the goal term survives.
    assert!((phi1(n, w, eta, 0.0, 0.0) - goal * goal).abs() < 1e-15);
    let (pt, p0) = (0.3, 0.7);
    let expected = goal * goal + (1024.0 / 12.8 + 64.0) * (0.09 + 1.0 / 32.0) * 0.49;
    assert!((phi1(n, w, eta, pt, p0) - expected).abs() < 1e-12);
}

#[test]
fn invalid_ladders_are_config_errors() {
    let too_steep = ladder_cfg(r#"{ "profile": { "n": 100, "w": 10 }, "e": 0.0, "im_z": 0.1, "eps0": 0.05 }"#);
    match run_ladder(&too_steep, 0) {
        Err(ExperimentError::Config(e)) => assert_eq!(e.field, "eps0"),
        other => panic!("{other:?}"),
    }
    let too_deep =
        ladder_cfg(r#"{ "profile": { "n": 100, "w": 10 }, "e": 0.0, "im_z": 0.1, "eps0": 0.03, "levels": 200 }"#);
    match run_ladder(&too_deep, 0) {
        Err(ExperimentError::Config(e)) => assert_eq!(e.field, "levels"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn dense_size_is_capped() {
    let big = ladder_cfg(r#"{ "profile": { "n": 5000, "w": 100 }, "e": 0.0, "im_z": 0.1, "eps0": 0.03 }"#);
    match run_ladder(&big, 0) {
        Err(ExperimentError::Config(e)) => assert_eq!(e.field, "profile.n"),
        other => panic!("{other:?}"),
    }
}
