use ndarray::Array2;
use num_complex::Complex64;

use qpdephase::dynamics::{delta_distribution, evolve_markov, log_times};
use qpdephase::lattice::{build_markov, build_profile, Boundary, HoppingProfile, LatticeSpec};
use qpdephase::linalg;
use qpdephase::liouvillian::{
    build_liouvillian, build_liouvillian_capped, eigendecompose_liouvillian, evolve_lindblad, evolve_lindblad_with,
    liouvillian_kappa_c, DensityMatrix, LindbladMethod, LiouvillianSweepRow,
};
use qpdephase::Error;

fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    v
}

fn closest(set: &[Complex64], z: Complex64) -> f64 {
    set.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min)
}

#[test]
fn dimer_spectrum_closed_form() {
    let j = 0.7;
    for gamma in [0.5, 1.0, 10.0] {
        let lv = build_liouvillian(&HoppingProfile::uniform(2, j).unwrap(), gamma, Boundary::Open).unwrap();
        let s = eigendecompose_liouvillian(&lv).unwrap();
        let disc = Complex64::new(gamma * gamma / 4.0 - 4.0 * j * j, 0.0).sqrt();
        let expected = [
            Complex64::new(0.0, 0.0),
            Complex64::new(-gamma, 0.0),
            -gamma / 2.0 + disc,
            -gamma / 2.0 - disc,
        ];
        for z in expected {
            assert!(closest(&s.eigenvalues, z) < 1e-10, "gamma {gamma}: missing {z}");
        }
        assert!(s.max_residual.unwrap() < 1e-10);
    }
}

#[test]
fn coherent_limit_gives_energy_differences() {
    let spec = LatticeSpec::diagonal_gaa(1.0, 0.6, 0.4, 8).unwrap().with_boundary(Boundary::Open);
    let profile = build_profile(&spec).unwrap();
    let lv = build_liouvillian(&profile, 0.0, Boundary::Open).unwrap();
    let s = eigendecompose_liouvillian(&lv).unwrap();
    let e = linalg::symmetric_eigenvalues(&lv.hamiltonian).unwrap();
    let mut diffs: Vec<Complex64> = Vec::new();
    for a in &e {
        for b in &e {
            diffs.push(Complex64::new(0.0, a - b));
        }
    }
    let got = sorted(s.eigenvalues.clone());
    let want = sorted(diffs);
    assert_eq!(got.len(), 64);
    let mut im_got: Vec<f64> = got.iter().map(|z| z.im).collect();
    let mut im_want: Vec<f64> = want.iter().map(|z| z.im).collect();
    im_got.sort_by(f64::total_cmp);
    im_want.sort_by(f64::total_cmp);
    for (a, b) in im_got.iter().zip(&im_want) {
        assert!((a - b).abs() < 1e-10);
    }
    assert!(got.iter().all(|z| z.re.abs() < 1e-10));
}

#[test]
fn dense_complex_form_matches_action() {
    let spec = LatticeSpec::off_diagonal_aa(1.0, 0.6, 5).unwrap();
    let lv = build_liouvillian(&build_profile(&spec).unwrap(), 0.8, spec.boundary).unwrap();
    let l = 5;
    let rho = Array2::from_shape_fn((l, l), |(n, m)| Complex64::new((n + 2 * m) as f64 * 0.1, (n as f64 - m as f64) * 0.3));
    let direct = lv.apply(&rho);
    let big = lv.to_dense();
    let vec: ndarray::Array1<Complex64> = (0..l * l).map(|k| rho[[k % l, k / l]]).collect();
    let out = big.dot(&vec);
    for k in 0..l * l {
        assert!((out[k] - direct[[k % l, k / l]]).norm() < 1e-12);
    }
}

#[test]
fn spectral_and_runge_kutta_agree() {
    let spec = LatticeSpec::diagonal_gaa(1.0, 0.6, 0.4, 8).unwrap();
    let lv = build_liouvillian(&build_profile(&spec).unwrap(), 2.0, spec.boundary).unwrap();
    let rho0 = DensityMatrix::site(8, 0);
    let times = [0.0, 0.5, 2.0, 7.5];
    let a = evolve_lindblad(&lv, &rho0, &times).unwrap();
    let b = evolve_lindblad_with(&lv, &rho0, &times, LindbladMethod::Rk4 { step: Some(1e-3) }).unwrap();
    for (p, q) in a.distributions.iter().zip(&b.distributions) {
        for (x, y) in p.iter().zip(q) {
            assert!((x - y).abs() < 1e-8);
        }
    }
    assert!(a.max_norm_drift() < 1e-10);
}

#[test]
fn strong_dephasing_reduces_to_markov() {
    let spec = LatticeSpec::off_diagonal_aa(1.0, 0.7, 13).unwrap();
    let profile = build_profile(&spec).unwrap();
    let gamma = 200.0;
    let lv = build_liouvillian(&profile, gamma, spec.boundary).unwrap();
    let w = build_markov(&profile, gamma, spec.boundary).unwrap();
    let times: Vec<f64> = log_times(10.0, 1e4, 20).iter().map(|t| t / gamma).collect();
    let q = evolve_lindblad(&lv, &DensityMatrix::site(13, 0), &times).unwrap();
    let c = evolve_markov(&w, &delta_distribution(13, 0), &times).unwrap();
    let dev = q
        .distributions
        .iter()
        .zip(&c.distributions)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(dev < 1e-3, "deviation {dev:e}");
}

#[test]
fn stationary_state_and_slow_branch() {
    let spec = LatticeSpec::off_diagonal_aa(1.0, 0.3, 13).unwrap();
    let lv = build_liouvillian(&build_profile(&spec).unwrap(), 50.0, spec.boundary).unwrap();
    let s = eigendecompose_liouvillian(&lv).unwrap();
    for p in &s.stationary_state {
        assert!((p - 1.0 / 13.0).abs() < 1e-10);
    }
    // Strong dephasing: L population modes are slow, the L^2 - L coherences decay at ~gamma.
    assert_eq!(s.slow_branch().len(), 13);
    let (lo, hi) = s.slow_ipr_range().unwrap();
    assert!(lo > 0.0 && hi <= 1.0);
}

#[test]
fn density_matrix_checks() {
    let psi = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
    assert!(DensityMatrix::pure(&psi).validate().is_ok());
    assert!(DensityMatrix::maximally_mixed(4).validate().is_ok());
    let mut bad = DensityMatrix::site(3, 0);
    bad.0[[0, 1]] = Complex64::new(0.3, 0.0);
    assert!(bad.validate().is_err());
    let half = DensityMatrix(DensityMatrix::site(3, 0).0.mapv(|z| z * 0.5));
    assert!(matches!(half.validate(), Err(Error::NotNormalized(_))));
    let mut negative = DensityMatrix::maximally_mixed(2);
    negative.0[[0, 0]] = Complex64::new(1.5, 0.0);
    negative.0[[1, 1]] = Complex64::new(-0.5, 0.0);
    assert!(negative.validate().is_err());
}

#[test]
fn size_cap() {
    let p = HoppingProfile::uniform(8, 1.0).unwrap();
    assert!(matches!(
        build_liouvillian_capped(&p, 1.0, Boundary::Periodic, 5),
        Err(Error::SizeCap { size: 8, cap: 5 })
    ));
    assert!(build_liouvillian(&p, -1.0, Boundary::Periodic).is_err());
}

#[test]
fn critical_kappa_picks_first_crossing() {
    let row = |gamma, kappa, ipr: Option<f64>| LiouvillianSweepRow {
        gamma,
        kappa,
        ipr_min: ipr,
        ipr_max: ipr,
        slow_states: 1,
        error: None,
    };
    let rows = vec![
        row(1.0, 0.1, Some(0.02)),
        row(1.0, 0.2, None),
        row(1.0, 0.3, Some(0.4)),
        row(1.0, 0.4, Some(0.5)),
        row(2.0, 0.1, Some(0.2)),
    ];
    assert_eq!(liouvillian_kappa_c(&rows, 1.0, 0.1), Some(0.3));
    assert_eq!(liouvillian_kappa_c(&rows, 2.0, 0.1), Some(0.1));
    assert_eq!(liouvillian_kappa_c(&rows, 3.0, 0.1), None);
}
