use std::f64::consts::FRAC_PI_2;

use qpdephase::walk::{
    build_incoherent_propagator, evolve_coherent_walk, evolve_incoherent, evolve_walk_ensemble, step_coherent,
    verify_master_equation_reduction, walk_kappa_sweep, walk_point, Dephasing, IntensityState, WalkSpec, WalkState,
};

fn quasi(kappa: f64, size: usize) -> WalkSpec {
    WalkSpec::off_diagonal(0.1, 0.1 * kappa, size, Dephasing::EveryStep).unwrap()
}

#[test]
fn perfect_couplers_freeze_the_populations() {
    let spec = WalkSpec::new(vec![FRAC_PI_2; 7], Dephasing::None).unwrap();
    let mut s = WalkState::injected(7, 3);
    for _ in 0..9 {
        s = step_coherent(&s, &spec, &[0.0; 7]);
        let p = s.intensities().populations();
        assert!((p[3] - 1.0).abs() < 1e-14);
    }
}

#[test]
fn weak_couplers_shift_ballistically() {
    let spec = WalkSpec::new(vec![1e-9; 11], Dephasing::None).unwrap();
    let steps: Vec<usize> = (1..=5).collect();
    let states = evolve_coherent_walk(&spec, &WalkState::injected(11, 0), &steps, 0, 0).unwrap();
    for (m, s) in steps.iter().zip(&states) {
        // The short loop moves its pulse one site left per step.
        let site = (11 - m) % 11;
        assert!((s.u[site].norm_sqr() - 1.0).abs() < 1e-12, "step {m}");
    }
}

#[test]
fn unit_eigenvalue_is_uniform() {
    let p = build_incoherent_propagator(&quasi(0.5, 144)).unwrap();
    assert!((p.eigenvalues[0] - 1.0).norm() < 1e-10);
    let v = p.eigenvector(0);
    let mean = v.iter().sum::<num_complex::Complex64>() / v.len() as f64;
    assert!(v.iter().all(|z| (z - mean).norm() < 1e-10));
    assert!((p.ipr[0] - 1.0 / 144.0).abs() < 1e-10);
    assert!((p.component_ipr[0] - 1.0 / 288.0).abs() < 1e-10);
    assert!(p.eigenvalues.iter().all(|z| z.norm() <= 1.0 + 1e-10));
}

#[test]
fn ensemble_mean_matches_incoherent_map() {
    let spec = quasi(0.6, 8);
    let steps = [1usize, 2, 5, 12];
    let mean = evolve_walk_ensemble(&spec, &WalkState::injected(8, 0), &steps, 3000, 17).unwrap();
    let exact = evolve_incoherent(&spec, &IntensityState::injected(8, 0), &steps).unwrap();
    let se = mean.standard_error.as_ref().unwrap();
    for k in 0..steps.len() {
        let a = mean.states[k].as_vector();
        let b = exact.states[k].as_vector();
        for i in 0..16 {
            let diff = (a[i] - b[i]).abs();
            assert!(diff < 4.5 * se[k][i] + 1e-12, "step {} component {i}: {diff:e}", steps[k]);
        }
        assert!((exact.states[k].total() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ensemble_is_reproducible_and_thread_independent() {
    let spec = quasi(0.6, 13);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evolve_walk_ensemble(&spec, &WalkState::injected(13, 0), &[3, 20], 25, 8).unwrap())
    };
    assert_eq!(run(1), run(4));
    let one = evolve_coherent_walk(&spec, &WalkState::injected(13, 0), &[20], 8, 3).unwrap();
    let again = evolve_coherent_walk(&spec, &WalkState::injected(13, 0), &[5, 20], 8, 3).unwrap();
    assert_eq!(one[0], again[1]);
}

#[test]
fn master_equation_limit_is_second_order() {
    let dev = |theta: f64| {
        let l = 21;
        let angles: Vec<f64> = (0..l).map(|n| FRAC_PI_2 - theta * (0.6 + 0.4 * (n as f64 * 1.3).cos().abs())).collect();
        let spec = WalkSpec::new(angles, Dephasing::EveryStep).unwrap();
        verify_master_equation_reduction(&spec, 2.0).unwrap()
    };
    let (a, b) = (dev(0.1), dev(0.05));
    assert!(a.max_deviation < 0.02);
    let ratio = a.max_deviation / b.max_deviation;
    assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    let far = WalkSpec::new(vec![1.0; 5], Dephasing::EveryStep).unwrap();
    assert!(verify_master_equation_reduction(&far, 1.0).is_err());
}

#[test]
fn mapped_hoppings() {
    let spec = WalkSpec::new(vec![0.3, 0.5, 0.9], Dephasing::None).unwrap();
    let j = spec.mapped_hoppings();
    assert!((j[0] - 0.5 * 0.5f64.cos()).abs() < 1e-15);
    assert!((j[2] - 0.5 * 0.3f64.cos()).abs() < 1e-15);
}

#[test]
fn invalid_angles() {
    assert!(WalkSpec::new(vec![0.0, 1.0], Dephasing::None).is_err());
    assert!(WalkSpec::new(vec![1.0, 1.7], Dephasing::None).is_err());
    assert!(WalkSpec::new(vec![1.0], Dephasing::None).is_err());
    assert!(WalkSpec::off_diagonal(0.1, 0.05, 100, Dephasing::None).is_err());
}

#[test]
fn sweep_rows_keep_failures() {
    let rows = walk_kappa_sweep(0.1, &[0.2, 0.9], 89);
    assert!(rows.iter().all(|r| r.error.is_none()));
    assert!(rows[1].ipr_max.unwrap() > rows[0].ipr_max.unwrap());
    let bad = walk_point(0.1, 0.5, 100);
    assert!(bad.error.is_some() && bad.ipr_max.is_none());
    let wide = walk_point(0.5, 1.0, 89);
    assert!(wide.error.is_some());
}
