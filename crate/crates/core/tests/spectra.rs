use std::f64::consts::PI;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpdephase::lattice::{build_hamiltonian, build_profile, Boundary, HoppingProfile, LatticeSpec};
use qpdephase::linalg;
use qpdephase::spectra::{
    beta_exponent, classify_beta, detect_mobility_edge, eigendecompose_symmetric, ipr, level_statistics,
    localize_clusters, lyapunov_exponents, pseudo_bands, track_state, EdgeThresholds, Generator, LocalizedSide,
    ScalingClass,
};

fn open(spec: LatticeSpec) -> LatticeSpec {
    spec.with_boundary(Boundary::Open)
}

#[test]
fn uniform_chain_sine_modes() {
    let l = 40;
    let h = build_hamiltonian(&HoppingProfile::uniform(l, 1.0).unwrap(), Boundary::Open);
    let s = eigendecompose_symmetric(&h).unwrap();
    let iprs = s.iprs(2.0);
    for k in 1..=l {
        // Ascending order: mode k has E = -2 cos(pi k / (L + 1)).
        let e = -2.0 * (PI * k as f64 / (l + 1) as f64).cos();
        assert!((s.eigenvalues[k - 1] - e).abs() < 1e-12);
        let norm = 2.0 / (l + 1) as f64;
        let expected: f64 = (1..=l).map(|n| (norm * (PI * (k * n) as f64 / (l + 1) as f64).sin().powi(2)).powi(2)).sum();
        assert!((iprs[k - 1] - expected).abs() < 1e-12, "mode {k}");
    }
}

#[test]
fn tridiagonal_and_dense_routes_agree() {
    let spec = open(LatticeSpec::diagonal_gaa(1.0, 0.6, 0.4, 233).unwrap());
    let h = build_hamiltonian(&build_profile(&spec).unwrap(), Boundary::Open);
    let tri = eigendecompose_symmetric(&h).unwrap();
    let (dense_vals, dense_vecs) = linalg::symmetric_eigen(&h.matrix).unwrap();
    let ql = Generator::Hamiltonian.eigenvalues(&spec).unwrap();
    for k in 0..233 {
        assert!((tri.eigenvalues[k] - dense_vals[k]).abs() < 1e-11);
        assert!((ql[k] - dense_vals[k]).abs() < 1e-11);
        let overlap = tri.vector(k).dot(&dense_vecs.column(k)).abs();
        assert!((overlap - 1.0).abs() < 1e-8);
    }
    assert!(tri.max_residual(&h.matrix) < 1e-11);
    assert!((tri.reconstruct() - &h.matrix).iter().all(|x| x.abs() < 1e-11));
}

#[test]
fn ipr_definitions() {
    let delta = [0.0, 1.0, 0.0, 0.0];
    assert_eq!(ipr(&delta, 2.0).unwrap(), 1.0);
    let flat = [0.5; 4];
    assert!((ipr(&flat, 2.0).unwrap() - 0.25).abs() < 1e-15);
    assert!((ipr(&flat, 3.0).unwrap() - 1.0 / 16.0).abs() < 1e-15);
    assert!(ipr(&[1.0, 1.0], 2.0).is_err());
    assert!(ipr(&delta, -1.0).is_err());
}

/// `ln |p_L'(lambda)|` from the three-term recurrence of `det(E - H)`.
fn log_derivative(d: &[f64], e: &[f64], lam: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, lam - d[0]);
    let (mut q0, mut q1) = (0.0, 1.0);
    for n in 1..d.len() {
        let w = e[n - 1] * e[n - 1];
        let p2 = (lam - d[n]) * p1 - w * p0;
        let q2 = p1 + (lam - d[n]) * q1 - w * q0;
        (p0, p1, q0, q1) = (p1, p2, q1, q2);
    }
    q1.abs().ln()
}

#[test]
fn lyapunov_matches_transfer_recurrence() {
    let spec = open(LatticeSpec::diagonal_gaa(1.0, 0.6, 0.4, 144).unwrap());
    let (d, e) = Generator::Hamiltonian.tridiagonal(&spec).unwrap().unwrap();
    let vals = linalg::ql_eigenvalues(&d, &e).unwrap();
    let hop: Vec<f64> = e.iter().map(|x| x.abs()).collect();
    let ly = lyapunov_exponents(&vals, &hop).unwrap();
    let mean_log: f64 = hop.iter().map(|x| x.ln()).sum::<f64>() / 143.0;
    let mut compared = 0;
    for k in 0..144 {
        // Near-degenerate pairs make ln|lambda_k - lambda_l| round-off dominated in both routes.
        let gap = vals.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, x)| (x - vals[k]).abs()).fold(f64::INFINITY, f64::min);
        if gap < 1e-6 {
            continue;
        }
        compared += 1;
        let oracle = log_derivative(&d, &e, vals[k]) / 143.0 - mean_log;
        assert!((ly[k].raw - oracle).abs() < 1e-6, "state {k}: {} vs {oracle}", ly[k].raw);
    }
    assert!(compared > 100, "{compared}");
    // Pure Aubry-Andre above the transition: gamma = ln(A / J) for every state.
    let aa = open(LatticeSpec::diagonal_gaa(1.0, 2.0, 0.0, 987).unwrap());
    let vals = Generator::Hamiltonian.eigenvalues(&aa).unwrap();
    let ly = lyapunov_exponents(&vals, &vec![1.0; 986]).unwrap();
    let mean = ly.iter().map(|g| g.raw).sum::<f64>() / 987.0;
    assert!((mean - 2f64.ln()).abs() < 0.02, "mean {mean}");
}

#[test]
fn edge_of_diagonal_model() {
    let spec = LatticeSpec::diagonal_gaa(1.0, 0.6, 0.4, 610).unwrap();
    let h = build_hamiltonian(&build_profile(&spec).unwrap(), spec.boundary);
    let s = eigendecompose_symmetric(&h).unwrap();
    let r = detect_mobility_edge(&s.eigenvalues, &s.iprs(2.0), 610, &EdgeThresholds::default()).unwrap();
    assert_eq!(r.localized_side, LocalizedSide::Above);
    let edge = r.edge.expect("clean edge");
    assert!((edge - 2.0).abs() < 0.1, "edge {edge}");
}

#[test]
fn poisson_levels_give_exponential_ilsd() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut levels: Vec<f64> = (0..40_000).map(|_| rng.random_range(0.0..1.0)).collect();
    levels.sort_by(f64::total_cmp);
    let st = level_statistics(&levels, (0.0, 1.0), 1e-9).unwrap();
    for s in [0.25, 0.5, 1.0, 2.0, 3.0] {
        let got = st.ilsd_at(s);
        assert!((got - (-s).exp()).abs() < 0.01, "s = {s}: {got}");
    }
    // exp(-s) is flat near zero.
    let fit = st.fit.unwrap();
    assert!(fit.slope.abs() < 0.01);
}

#[test]
fn level_statistics_guards() {
    let levels: Vec<f64> = (0..30).map(|i| i as f64).collect();
    assert!(level_statistics(&levels, (0.0, 29.0), 1e-6).is_err());
    assert!(level_statistics(&levels, (5.0, 1.0), 1e-6).is_err());
    assert!(level_statistics(&levels, (100.0, 200.0), 1e-6).is_err());
    let fence: Vec<f64> = (0..100).map(|i| i as f64).collect();
    let st = level_statistics(&fence, (0.0, 99.0), 1e-6).unwrap();
    assert_eq!(st.ilsd_at(0.5), 1.0);
    assert_eq!(st.ilsd_at(1.5), 0.0);
}

#[test]
fn bands_split_at_widest_gaps() {
    let e = [0.0, 0.1, 0.2, 5.0, 5.1, 9.0, 9.2, 9.3];
    let b = pseudo_bands(&e, 3).unwrap();
    assert_eq!(b, vec![(0.0, 0.2), (5.0, 5.1), (9.0, 9.3)]);
    assert!(pseudo_bands(&e, 0).is_err());
    assert!(pseudo_bands(&e[..2], 3).is_err());
}

#[test]
fn cluster_rotation_recovers_localized_pair() {
    let n = 6;
    let mut v = Array2::<f64>::zeros((n, 2));
    let (s, c) = 0.4f64.sin_cos();
    // e_0 and e_5 mixed by a 0.4 rad rotation.
    v[[0, 0]] = c;
    v[[5, 0]] = s;
    v[[0, 1]] = -s;
    v[[5, 1]] = c;
    assert_eq!(localize_clusters(&[1.0, 1.0], &mut v, 1e-9), 1);
    let mut peaks: Vec<usize> = (0..2)
        .map(|k| (0..n).max_by(|&a, &b| v[[a, k]].abs().total_cmp(&v[[b, k]].abs())).unwrap())
        .collect();
    peaks.sort();
    assert_eq!(peaks, vec![0, 5]);
    for k in 0..2 {
        let p4: f64 = v.column(k).iter().map(|x| x.powi(4)).sum();
        assert!((p4 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn beta_of_extended_and_localized_states() {
    let sizes = [55, 89, 144, 233, 377, 610];
    let chain = open(LatticeSpec::diagonal_gaa(1.0, 0.0, 0.0, 610).unwrap());
    let fit = beta_exponent(&chain, Generator::Hamiltonian, 0.3, &[2.0], &sizes).unwrap();
    let b = fit.beta(2.0).unwrap();
    assert!((b.beta - 1.0).abs() < 0.05, "uniform chain beta {}", b.beta);
    assert_eq!(classify_beta(b.beta), ScalingClass::Ergodic);

    let aa = open(LatticeSpec::diagonal_gaa(1.0, 2.5, 0.0, 610).unwrap());
    let fit = beta_exponent(&aa, Generator::Hamiltonian, 0.3, &[2.0, 3.0], &sizes).unwrap();
    for q in [2.0, 3.0] {
        let b = fit.beta(q).unwrap();
        assert!(b.beta <= 0.15, "q = {q}: beta {}", b.beta);
    }
    assert!(beta_exponent(&aa, Generator::Hamiltonian, 0.3, &[2.0], &sizes[..3]).is_err());
}

#[test]
fn tracking_respects_window() {
    let spec = open(LatticeSpec::off_diagonal_aa(1.0, 0.5, 233).unwrap());
    let g = Generator::Markov { gamma: 100.0 };
    let vals = g.eigenvalues(&spec).unwrap();
    let t = track_state(&spec, g, vals[150] + 1e-9, 3.0).unwrap();
    assert_eq!(t.index, 150);
    assert_eq!(t.vector.len(), 233);
    let norm: f64 = t.vector.iter().map(|x| x * x).sum();
    assert!((norm - 1.0).abs() < 1e-12);
    assert!(track_state(&spec, g, 5.0, 3.0).is_err());
}

proptest! {
    #[test]
    fn edge_report_ignores_input_order(seed in any::<u64>(), n in 20usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lam: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let iprs: Vec<f64> = lam.iter().map(|&x| if x > 0.5 { 0.4 } else { 0.5 / n as f64 }).collect();
        let a = detect_mobility_edge(&lam, &iprs, n, &EdgeThresholds::default()).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let l2: Vec<f64> = order.iter().map(|&i| lam[i]).collect();
        let i2: Vec<f64> = order.iter().map(|&i| iprs[i]).collect();
        let b = detect_mobility_edge(&l2, &i2, n, &EdgeThresholds::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cluster_rotation_never_lowers_p4(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let raw = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let (_, q) = linalg::symmetric_eigen(&raw.dot(&raw.t())).unwrap();
        let mut v = q.slice(ndarray::s![.., ..3]).to_owned();
        let before: f64 = v.iter().map(|x| x.powi(4)).sum();
        localize_clusters(&[0.0, 0.0, 0.0], &mut v, 1e-9);
        let after: f64 = v.iter().map(|x| x.powi(4)).sum();
        prop_assert!(after >= before - 1e-12);
        let g = v.t().dot(&v);
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g[[i, j]] - target).abs() < 1e-12);
            }
        }
    }
}
