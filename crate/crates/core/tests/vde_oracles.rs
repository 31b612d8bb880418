use bandlab_core::ensemble::philox4x32_10;
use bandlab_core::profile::{centered_label, BandProfile, KernelKind, PerturbationSpec, VarianceMatrices};
use bandlab_core::scalar::{msc, SpectralPoint};
use bandlab_core::vde::{
    decay_of_x, equation_residual, lipschitz_ratio, solve_m, sum_rule_check, DysonSolver, SolverOptions,
    SumRuleOptions, VdeError, LIPSCHITZ_BOUND,
};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn vars(n: usize, w: usize, kind: KernelKind, zeta: f64) -> VarianceMatrices {
    VarianceMatrices::build(&BandProfile::build(n, w, kind).unwrap(), zeta).unwrap()
}

#[test]
fn perturbed_solution_is_close_to_msc() {
    let v = vars(400, 20, KernelKind::Uniform, 0.01);
    let pert = PerturbationSpec::new(0.01, vec![0.0; 400]).unwrap();
    let zt = c(0.3, 0.05);
    let pt = SpectralPoint::new(zt + c(0.0, 0.01), zt).unwrap();
    let sol = solve_m(&v, &pert, &pt, &SolverOptions::default()).unwrap();
    assert!(sol.residual < 1e-12);
    // Independent residual evaluation straight from the equation.
    let s = v.szeta();
    let mut worst = 0.0f64;
    for i in 0..400 {
        let zi = if i < 20 { pt.z() } else { zt };
        let sm: Complex64 = (0..400).map(|k| s[(i, k)] * sol.big_m[k]).sum();
        worst = worst.max((1.0 / sol.big_m[i] + zi + sm).norm());
    }
    assert!(worst < 1e-12, "{worst}");
    let fitted = sol.x_norm_inf() / 0.02;
    assert!(fitted < 20.0, "fitted C = {fitted}");
    assert!(sol.within_threshold);
    assert!(sol.contraction_rate < 1.0);
}

#[test]
fn trivial_case_is_exact_in_one_step() {
    for kind in [
        KernelKind::Uniform,
        KernelKind::Triangular,
        KernelKind::TruncatedGaussian,
    ] {
        let v = vars(300, 10, kind, 0.0);
        let z = c(-0.7, 0.2);
        let pt = SpectralPoint::diagonal(z).unwrap();
        let sol = solve_m(&v, &PerturbationSpec::zero(300), &pt, &SolverOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
        let m = msc(z).unwrap();
        assert!(sol.big_m.iter().all(|v| *v == m));
    }
}

#[test]
fn two_starts_reach_the_same_fixed_point() {
    let n = 400;
    let v = vars(n, 20, KernelKind::Triangular, 0.01);
    let g: Vec<f64> = (0..n).map(|i| 0.005 * (i as f64 * 0.37).sin()).collect();
    let pert = PerturbationSpec::new(0.01, g).unwrap();
    let zt = c(-0.4, 0.02);
    let pt = SpectralPoint::new(zt + c(0.005, 0.01), zt).unwrap();
    let solver = DysonSolver::new(&v, zt).unwrap();
    let opts = SolverOptions::default();
    let a = solver.solve(&pert, &pt, &opts).unwrap();
    let radius = 0.1;
    let start: Vec<Complex64> = (0..n)
        .map(|i| {
            let r = philox4x32_10([i as u32, 0, 0, 0], [11, 0]);
            let u = r[0] as f64 / u32::MAX as f64;
            let phase = r[1] as f64 / u32::MAX as f64 * std::f64::consts::TAU;
            Complex64::from_polar(radius / 2.0 * u, phase)
        })
        .collect();
    let b = solver.solve_from(&pert, &pt, &opts, Some(&start)).unwrap();
    let gap = a
        .big_m
        .iter()
        .zip(&b.big_m)
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max);
    assert!(gap < 10.0 * opts.tol.max(1e-12), "gap {gap}");
}

#[test]
fn lipschitz_in_zeta_and_ztilde() {
    let n = 300;
    let opts = SolverOptions::default();
    let zt = c(0.2, 0.05);
    let pt = SpectralPoint::new(zt + c(0.0, 0.01), zt).unwrap();
    let v1 = vars(n, 15, KernelKind::Uniform, 0.01);
    let v2 = vars(n, 15, KernelKind::Uniform, 0.011);
    let p1 = PerturbationSpec::new(0.01, vec![0.0; n]).unwrap();
    let p2 = PerturbationSpec::new(0.011, vec![0.0; n]).unwrap();
    let a = solve_m(&v1, &p1, &pt, &opts).unwrap();
    let b = solve_m(&v2, &p2, &pt, &opts).unwrap();
    let r = lipschitz_ratio(&a, &b).unwrap();
    assert!(r.is_finite() && r < LIPSCHITZ_BOUND, "zeta ratio {r}");

    let zt2 = zt + c(0.0, 1e-3);
    let pt2 = SpectralPoint::new(pt.z(), zt2).unwrap();
    let d = solve_m(&v1, &p1, &pt2, &opts).unwrap();
    let r = lipschitz_ratio(&a, &d).unwrap();
    assert!(r.is_finite() && r < LIPSCHITZ_BOUND, "ztilde ratio {r}");

    assert!(matches!(
        lipschitz_ratio(&a, &a),
        Err(VdeError::DegenerateInputs { .. })
    ));
}

#[test]
fn large_perturbation_is_flagged() {
    let n = 200;
    let v = vars(n, 10, KernelKind::Uniform, 0.0);
    let pert = PerturbationSpec::new(0.0, vec![0.5; n]).unwrap();
    let zt = c(0.0, 0.01);
    let pt = SpectralPoint::new(zt + c(0.0, 0.5), zt).unwrap();
    let opts = SolverOptions {
        max_iter: 200,
        ..SolverOptions::default()
    };
    match solve_m(&v, &pert, &pt, &opts) {
        Err(VdeError::NonContraction { .. }) | Err(VdeError::MaxIterations { .. }) => {}
        Ok(sol) => {
            // Converging anyway is allowed, but never silently.
            assert!(!sol.within_threshold);
            assert!(equation_residual(&v, &pert, &pt, &sol.big_m) < opts.tol);
        }
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn decay_away_from_block() {
    let (n, w) = (2000, 100);
    let v = vars(n, w, KernelKind::Uniform, 0.02);
    let pert = PerturbationSpec::new(0.02, vec![0.0; n]).unwrap();
    let pt = SpectralPoint::diagonal(c(0.0, 0.05)).unwrap();
    let sol = solve_m(&v, &pert, &pt, &SolverOptions::default()).unwrap();
    let d = decay_of_x(&sol).unwrap();
    assert!(d.rate > 0.0, "rate {}", d.rate);
    assert!(d.amplitude.is_finite());
    // Envelope is nonincreasing past the block.
    let far = d.abs_x[5 * w];
    assert!(far < d.abs_x[w]);
    // Independent check of the amplitude bound with the reported constants.
    let m2 = sol.m.norm_sqr();
    for (s, big) in sol.big_m.iter().enumerate() {
        let dist = centered_label(s, n).unsigned_abs() as f64;
        let bound = d.amplitude * 0.02 * (-d.rate * dist / w as f64).exp();
        assert!((big.norm_sqr() - m2).abs() <= bound * (1.0 + 1e-12));
    }
}

#[test]
fn flat_profile_is_reported() {
    let v = vars(200, 10, KernelKind::Uniform, 0.0);
    let pt = SpectralPoint::diagonal(c(0.5, 0.1)).unwrap();
    let sol = solve_m(&v, &PerturbationSpec::zero(200), &pt, &SolverOptions::default()).unwrap();
    assert!(sol.x.iter().all(|v| *v == c(0.0, 0.0)));
    assert!(matches!(decay_of_x(&sol), Err(VdeError::FlatProfile)));
}

#[test]
fn bump_stays_local() {
    let (n, w) = (1000, 40);
    let v = vars(n, w, KernelKind::Uniform, 0.0);
    let i0 = n / 2;
    let mut g = vec![0.0; n];
    g[i0] = (w as f64).powf(-0.75);
    let pert = PerturbationSpec::new(0.0, g).unwrap();
    let pt = SpectralPoint::diagonal(c(0.1, 0.05)).unwrap();
    let sol = solve_m(&v, &pert, &pt, &SolverOptions::default()).unwrap();
    let near = (i0 - w..=i0 + w).map(|i| sol.x[i].norm()).fold(0.0, f64::max);
    let away = (0..n)
        .filter(|&i| i.abs_diff(i0) > 5 * w)
        .map(|i| sol.x[i].norm())
        .fold(0.0, f64::max);
    assert!(away < near, "away {away} near {near}");
}

#[test]
fn sum_rule_signs() {
    let (n, w) = (2000, 100);
    let opts = SolverOptions::default();
    let zero = PerturbationSpec::zero(n);

    let v0 = vars(n, w, KernelKind::Uniform, 0.0);
    let same = SpectralPoint::diagonal(c(0.0, 0.1)).unwrap();
    let sol = solve_m(&v0, &zero, &same, &opts).unwrap();
    let r = sum_rule_check(&sol, &SumRuleOptions::default()).unwrap();
    assert_eq!(r.value, 0.0);

    let split = SpectralPoint::new(c(0.0, 0.1), c(0.0, 0.05)).unwrap();
    let sol = solve_m(&v0, &zero, &split, &opts).unwrap();
    let r = sum_rule_check(&sol, &SumRuleOptions::default()).unwrap();
    assert!(r.value > 0.0, "{}", r.value);
    assert!(r.holds);

    let vz = vars(n, w, KernelKind::Uniform, 0.05);
    let pz = PerturbationSpec::new(0.05, vec![0.0; n]).unwrap();
    let sol = solve_m(&vz, &pz, &same, &opts).unwrap();
    let r = sum_rule_check(&sol, &SumRuleOptions::default()).unwrap();
    assert!(r.value < 0.0, "{}", r.value);
}
