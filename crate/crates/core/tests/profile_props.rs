use bandlab_core::profile::{
    centered_label, storage_index, validate_regime, BandProfile, KernelKind, PerturbationSpec, VarianceMatrices,
};
use bandlab_core::scalar::SpectralPoint;
use num_complex::Complex64;
use proptest::prelude::*;

fn kinds() -> impl Strategy<Value = KernelKind> {
    prop_oneof![
        Just(KernelKind::Uniform),
        Just(KernelKind::Triangular),
        Just(KernelKind::TruncatedGaussian)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn s0_is_normalized_circulant_and_symmetric(n in 30usize..160, w in 1usize..5, kind in kinds()) {
        let p = BandProfile::build(n, w, kind).unwrap();
        let s0 = p.s0();
        for i in 0..n {
            let sum: f64 = s0.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(s0[(i, j)], s0[(j, i)]);
                // Shift by one along the diagonal.
                prop_assert_eq!(s0[(i, j)], s0[((i + 1) % n, (j + 1) % n)]);
            }
        }
        for x in 0..(n as i64 / 2) {
            prop_assert_eq!(p.kernel(x), p.kernel(-x));
        }
        prop_assert!(p.satisfies_band_bounds(p.c_s(), p.big_c_s()));
    }

    #[test]
    fn sigma_structure(n in 20usize..80, w in 1usize..6, zeta in 0.0f64..0.05) {
        let p = BandProfile::build(n, w, KernelKind::Uniform).unwrap();
        let v = VarianceMatrices::build(&p, zeta).unwrap();
        let sigma = v.sigma();
        let nonzero = sigma.as_slice().iter().filter(|x| **x != 0.0).count();
        prop_assert_eq!(nonzero, w * w);
        for i in 0..n {
            let sum: f64 = sigma.row(i).iter().sum();
            let want = if i < w { 1.0 + 1.0 / w as f64 } else { 0.0 };
            prop_assert!((sum - want).abs() < 1e-12);
            for j in 0..n {
                prop_assert!(v.szeta()[(i, j)] >= 0.0);
                prop_assert_eq!(v.szeta()[(i, j)], v.szeta()[(j, i)]);
                let expect = v.s0()[(i, j)] - zeta * sigma[(i, j)];
                prop_assert!((v.szeta()[(i, j)] - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn label_bijection(n in 2usize..500) {
        let mut seen = vec![false; n];
        for s in 0..n {
            let p = centered_label(s, n);
            prop_assert!(2 * p > -(n as i64) && 2 * p <= n as i64);
            let back = storage_index(p, n);
            prop_assert_eq!(back, s);
            seen[back] = true;
        }
        prop_assert!(seen.into_iter().all(|x| x));
    }
}

#[test]
fn block_is_first_storage_indices() {
    // Labels 1..=W sit at storage 0..W.
    for l in 1..=5i64 {
        assert_eq!(storage_index(l, 40), (l - 1) as usize);
    }
}

#[test]
fn realized_constants_are_recorded() {
    let tri = BandProfile::build(200, 10, KernelKind::Triangular).unwrap();
    // Kernel is largest at 0: (2W+1)/(sum of weights), sum = (2W+1)^2.
    assert!((tri.kernel(0) - 1.0 / 21.0).abs() < 1e-14);
    assert!(tri.big_c_s() >= 2.0);
    assert!(tri.c_s() > 0.2 && tri.c_s() < 0.3);
    let rec = tri.to_record();
    assert_eq!(rec.kernel.len(), (tri.big_c_s() * 10.0).floor() as usize + 1);
    // Values over x >= 0 plus their mirror images add back to one.
    let mass = rec.kernel[0] + 2.0 * rec.kernel[1..].iter().sum::<f64>();
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn regime_boundary_is_inclusive() {
    let n = 1024usize;
    let p = BandProfile::build(n, 128, KernelKind::Uniform).unwrap();
    let eta_lower = (n as f64).powf(-0.2);
    let pt = SpectralPoint::new(Complex64::new(0.0, eta_lower), Complex64::new(0.0, 0.0)).unwrap();
    let rep = validate_regime(&p, &pt, &PerturbationSpec::zero(n), 0.2, 0.01);
    assert!(rep.im_z_in_window && rep.re_z_near_e && rep.zeta_small && rep.g_small);
    assert!(rep.exponents_ok);
    let rep = validate_regime(&p, &pt, &PerturbationSpec::zero(n), 0.2, 0.02);
    assert!(!rep.exponents_ok);
}
