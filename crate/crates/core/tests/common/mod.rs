#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpdephase::dynamics::{delta_distribution, phase_randomization_map, CoherentPropagator, MarkovPropagator};
use qpdephase::lattice::{
    build_hamiltonian, build_markov, build_profile, Boundary, HoppingProfile, LatticeSpec, SymmetricMatrix,
};
use qpdephase::linalg;
use qpdephase::liouvillian::{
    build_liouvillian, eigendecompose_liouvillian, to_coordinates, DensityMatrix, SpectralSolution,
};
use qpdephase::spectra::eigendecompose_symmetric;
use qpdephase::walk::{build_incoherent_propagator, incoherent_matrix, step_coherent, step_incoherent, Dephasing, IntensityState, WalkSpec, WalkState};

pub const SIZES: [usize; 3] = [5, 8, 13];

#[derive(Debug, Clone)]
pub struct Case {
    pub spec: LatticeSpec,
    pub gamma: f64,
    pub t1: f64,
    pub t2: f64,
    pub angles: Vec<f64>,
    pub seed: u64,
}

impl Case {
    pub fn profile(&self) -> HoppingProfile {
        build_profile(&self.spec).unwrap()
    }

    pub fn size(&self) -> usize {
        self.spec.size
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

fn lattice() -> impl Strategy<Value = LatticeSpec> {
    let boundary = prop_oneof![Just(Boundary::Periodic), Just(Boundary::Open)];
    let size = prop::sample::select(SIZES.to_vec());
    let diag = (0.2..2.0f64, 0.0..1.5f64, 0.0..0.9f64, size.clone())
        .prop_map(|(j, a, b, l)| LatticeSpec::diagonal_gaa(j, a, b, l).unwrap());
    let off = (0.2..2.0f64, 0.0..=1.0f64, size).prop_map(|(a, k, l)| LatticeSpec::off_diagonal_aa(a, k * a, l).unwrap());
    (prop_oneof![diag, off], boundary, 0.0..2.0 * PI).prop_map(|(s, b, th)| s.with_boundary(b).with_theta(th))
}

pub fn case() -> impl Strategy<Value = Case> {
    (lattice(), 0.1..100.0f64, 0.0..5.0f64, 0.0..5.0f64, any::<u64>()).prop_flat_map(|(spec, gamma, t1, t2, seed)| {
        let l = spec.size;
        prop::collection::vec(0.05..=FRAC_PI_2, l)
            .prop_map(move |angles| Case { spec: spec.clone(), gamma, t1, t2, angles, seed })
    })
}

fn ensure(ok: bool, what: impl Into<String>) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(what.into()))
    }
}

fn max_dev(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_state(rng: &mut ChaCha8Rng, l: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..l).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

pub fn random_distribution(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Mixture of three random pure states.
pub fn random_density(rng: &mut ChaCha8Rng, l: usize) -> DensityMatrix {
    let w = random_distribution(rng, 3);
    let mut rho = Array2::from_elem((l, l), Complex64::new(0.0, 0.0));
    for &p in &w {
        rho = rho + DensityMatrix::pure(&random_state(rng, l)).0.mapv(|z| z * p);
    }
    DensityMatrix(rho)
}

pub fn hamiltonian(c: &Case) -> Result<(), TestCaseError> {
    let h = build_hamiltonian(&c.profile(), c.spec.boundary);
    ensure(max_dev(&h.matrix, &h.matrix.t().to_owned()) == 0.0, "H not symmetric")?;
    let s = eigendecompose_symmetric(&h).unwrap();
    ensure(s.orthonormality_error() < 1e-12, "eigenvectors not orthonormal")?;
    ensure(s.max_residual(&h.matrix) < 1e-10, "eigen residual")?;
    ensure(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]), "eigenvalues not ascending")?;
    let l = c.size() as f64;
    for q in s.iprs(2.0) {
        ensure(q >= 1.0 / l - 1e-12 && q <= 1.0 + 1e-12, format!("IPR {q} outside [1/L, 1]"))?;
    }
    if let Some((d, e)) = h.tridiagonal() {
        let ql = linalg::ql_eigenvalues(&d, &e).unwrap();
        let dense = linalg::symmetric_eigenvalues(&h.matrix).unwrap();
        let dev = ql.iter().zip(&dense).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(dev < 1e-11, format!("QL and dense eigenvalues differ by {dev:e}"))?;
    }
    Ok(())
}

pub fn markov(c: &Case) -> Result<(), TestCaseError> {
    let w = build_markov(&c.profile(), c.gamma, c.spec.boundary).unwrap();
    let m = &w.matrix;
    let l = c.size();
    ensure(max_dev(m, &m.t().to_owned()) == 0.0, "W not symmetric")?;
    let rmax = c.profile().hopping.iter().map(|j| 2.0 * j * j / c.gamma).fold(0.0, f64::max);
    for col in 0..l {
        let s: f64 = m.column(col).sum();
        ensure(s.abs() <= 1e-13 * (1.0 + rmax), format!("column {col} sums to {s:e}"))?;
        for row in 0..l {
            if row != col {
                ensure(m[[row, col]] >= 0.0, "negative rate")?;
            }
        }
    }
    let ev = linalg::symmetric_eigenvalues(m).unwrap();
    let tol = 1e-12 * (1.0 + rmax);
    ensure(ev.iter().all(|&x| x <= tol && x >= -4.0 * rmax - tol), "eigenvalue outside [-4 r_max, 0]")?;
    Ok(())
}

pub fn coherent(c: &Case) -> Result<(), TestCaseError> {
    let h = build_hamiltonian(&c.profile(), c.spec.boundary);
    let prop = CoherentPropagator::new(&h).unwrap();
    let l = c.size();
    let u = prop.unitary(c.t1);
    let uu = u.t().mapv(|z| z.conj()).dot(&u);
    let dev = uu.indexed_iter().map(|((i, j), z)| (z - if i == j { 1.0 } else { 0.0 }).norm()).fold(0.0, f64::max);
    ensure(dev < 1e-10, format!("U^dag U deviates from I by {dev:e}"))?;
    let psi = random_state(&mut c.rng(), l);
    let a = prop.propagate(&prop.propagate(&psi, c.t1), c.t2);
    let b = prop.propagate(&psi, c.t1 + c.t2);
    let norm: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    ensure((norm - 1.0).abs() < 1e-10, format!("norm drift {:e}", norm - 1.0))?;
    let semi = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    ensure(semi < 1e-10, format!("coherent semigroup defect {semi:e}"))?;
    let map = phase_randomization_map(&prop, c.t1);
    for k in 0..l {
        let (r, s) = (map.row(k).sum(), map.column(k).sum());
        ensure((r - 1.0).abs() < 1e-10 && (s - 1.0).abs() < 1e-10, "|U|^2 not doubly stochastic")?;
    }
    Ok(())
}

pub fn classical(c: &Case) -> Result<(), TestCaseError> {
    let w = build_markov(&c.profile(), c.gamma, c.spec.boundary).unwrap();
    let prop = MarkovPropagator::new(&w).unwrap();
    let l = c.size();
    let p0 = random_distribution(&mut c.rng(), l);
    let a = prop.propagate(&prop.propagate(&p0, c.t1), c.t2);
    let b = prop.propagate(&p0, c.t1 + c.t2);
    let total: f64 = b.iter().sum();
    ensure((total - 1.0).abs() < 1e-10, format!("mass drift {:e}", total - 1.0))?;
    ensure(b.iter().all(|&x| x > -1e-12), "negative population")?;
    let semi = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    ensure(semi < 1e-10, format!("Markov semigroup defect {semi:e}"))?;
    let gap = -prop.spectrum.eigenvalues[l - 2];
    let far = prop.propagate(&delta_distribution(l, 0), 40.0 / gap);
    let uni = far.iter().map(|x| (x - 1.0 / l as f64).abs()).fold(0.0, f64::max);
    let connected = c.profile().bonds(c.spec.boundary).iter().all(|&j| j > 0.05);
    ensure(!connected || uni < 1e-8, format!("not uniform at long times ({uni:e})"))?;
    Ok(())
}

pub fn liouvillian(c: &Case) -> Result<(), TestCaseError> {
    let lv = build_liouvillian(&c.profile(), c.gamma, c.spec.boundary).unwrap();
    let l = c.size();
    let mut rng = c.rng();
    let rho = random_density(&mut rng, l);
    let out = lv.apply(&rho.0);
    let tr: Complex64 = (0..l).map(|n| out[[n, n]]).sum();
    ensure(tr.norm() < 1e-12 * lv.norm(), format!("trace not preserved ({:e})", tr.norm()))?;
    ensure(DensityMatrix(out.clone()).hermiticity_error() < 1e-12 * lv.norm(), "Hermiticity not preserved")?;
    let via_real = lv.to_real().dot(&ndarray::Array1::from(to_coordinates(&rho.0)));
    let direct = to_coordinates(&out);
    let dev = via_real.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(dev < 1e-12 * lv.norm(), format!("real embedding disagrees with direct action ({dev:e})"))?;

    let spec = eigendecompose_liouvillian(&lv).unwrap();
    let re_max = spec.eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    ensure(re_max < 1e-9 * lv.norm(), format!("eigenvalue with Re = {re_max:e}"))?;
    ensure(spec.eigenvalues[spec.stationary].norm() < 1e-9 * lv.norm(), "no zero eigenvalue")?;
    let connected = c.profile().bonds(c.spec.boundary).iter().all(|&j| j > 0.05);
    if connected && c.gamma > 0.0 {
        let uni = spec.stationary_state.iter().map(|p| (p - 1.0 / l as f64).abs()).fold(0.0, f64::max);
        ensure(uni < 1e-8, format!("stationary state not maximally mixed ({uni:e})"))?;
    }
    let sol = SpectralSolution::new(&spec, &rho).unwrap();
    let mid = sol.state(c.t1);
    let again = SpectralSolution::new(&spec, &mid).unwrap().state(c.t2);
    let direct = sol.state(c.t1 + c.t2);
    let semi = again.0.iter().zip(direct.0.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    ensure(semi < 1e-8, format!("Lindblad semigroup defect {semi:e}"))?;
    ensure((direct.trace() - 1.0).norm() < 1e-9, "Lindblad trace drift")?;
    Ok(())
}

pub fn walk(c: &Case) -> Result<(), TestCaseError> {
    let l = c.size();
    let spec = WalkSpec::new(c.angles.clone(), Dephasing::EveryStep).unwrap();
    let mut rng = c.rng();
    let mut s = WalkState::injected(l, 0);
    for _ in 0..20 {
        let phases: Vec<f64> = (0..l).map(|_| rng.random_range(-PI..PI)).collect();
        s = step_coherent(&s, &spec, &phases);
    }
    ensure((s.norm() - 1.0).abs() < 1e-12, format!("walk norm drift {:e}", s.norm() - 1.0))?;
    let m = incoherent_matrix(&spec);
    for col in 0..2 * l {
        let sum = m.column(col).sum();
        ensure((sum - 1.0).abs() < 1e-12, format!("column {col} of the walk map sums to {sum}"))?;
    }
    ensure(m.iter().all(|&x| x >= 0.0), "negative transition probability")?;
    let x0 = IntensityState { x: random_distribution(&mut rng, l), y: vec![0.0; l], step: 0 };
    let stepped = step_incoherent(&x0, &spec).as_vector();
    let product = m.dot(&ndarray::Array1::from(x0.as_vector()));
    let dev = stepped.iter().zip(&product).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(dev < 1e-14, "step and matrix disagree")?;
    let p = build_incoherent_propagator(&spec).unwrap();
    let radius = p.eigenvalues[0].norm();
    ensure((radius - 1.0).abs() < 1e-10, format!("spectral radius {radius}"))?;
    Ok(())
}

pub fn circulant(c: &Case) -> Result<(), TestCaseError> {
    let l = c.size();
    let j = c.spec.a;
    let profile = HoppingProfile::uniform(l, j).unwrap();
    let mut expected_h: Vec<f64> = (0..l).map(|k| -2.0 * j * (2.0 * PI * k as f64 / l as f64).cos()).collect();
    let rate = 2.0 * j * j / c.gamma;
    let mut expected_w: Vec<f64> =
        (0..l).map(|k| -2.0 * rate * (1.0 - (2.0 * PI * k as f64 / l as f64).cos())).collect();
    expected_h.sort_by(f64::total_cmp);
    expected_w.sort_by(f64::total_cmp);
    let h = linalg::symmetric_eigenvalues(&build_hamiltonian(&profile, Boundary::Periodic).matrix).unwrap();
    let w = linalg::symmetric_eigenvalues(&build_markov(&profile, c.gamma, Boundary::Periodic).unwrap().matrix).unwrap();
    let dh = h.iter().zip(&expected_h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let dw = w.iter().zip(&expected_w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(dh < 1e-12 * (1.0 + j), format!("ring H spectrum off by {dh:e}"))?;
    ensure(dw < 1e-12 * (1.0 + rate), format!("ring W spectrum off by {dw:e}"))?;
    Ok(())
}

/// Every invariant family on one case.
pub fn all(c: &Case) -> Result<(), TestCaseError> {
    hamiltonian(c)?;
    markov(c)?;
    coherent(c)?;
    classical(c)?;
    liouvillian(c)?;
    walk(c)?;
    circulant(c)
}
