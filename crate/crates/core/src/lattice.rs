//! Quasiperiodic tight-binding chains and the matrices derived from them.
//!
//! Site indices run over `0..L`. Bond `n` couples sites `n` and `n + 1`; under
//! periodic boundaries bond `L - 1` wraps to site 0. The modulation phase of
//! site `n` is `2 pi alpha n + theta` with `alpha = F_{l-1} / F_l` evaluated in
//! exact integer arithmetic, so a ring of `F_l` sites is exactly commensurate.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `F_l` with `F_0 = F_1 = 1`.
pub fn fibonacci(l: usize) -> Result<u64> {
    let (mut prev, mut cur) = (1u64, 1u64);
    for _ in 1..l {
        let next = prev.checked_add(cur).ok_or(Error::FibonacciOverflow(l))?;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Index `l` with `F_l == value`, choosing `l >= 2` for the ambiguous value 1.
pub fn fibonacci_index(value: u64) -> Option<usize> {
    let (mut prev, mut cur, mut l) = (1u64, 1u64, 1usize);
    while cur < value {
        let next = prev.checked_add(cur)?;
        prev = cur;
        cur = next;
        l += 1;
    }
    (cur == value && value > 1).then_some(l)
}

/// Rational approximant `F_{l-1} / F_l` of the inverse golden mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FibonacciApproximant {
    pub index: usize,
    pub numerator: u64,
    pub denominator: u64,
}

pub fn fibonacci_approximant(l: usize) -> Result<FibonacciApproximant> {
    if l < 2 {
        return Err(invalid(format!("Fibonacci approximant index must be >= 2, got {l}")));
    }
    Ok(FibonacciApproximant {
        index: l,
        numerator: fibonacci(l - 1)?,
        denominator: fibonacci(l)?,
    })
}

impl FibonacciApproximant {
    /// Approximant whose denominator equals `size`.
    pub fn for_size(size: usize) -> Result<Self> {
        let l = fibonacci_index(size as u64)
            .ok_or_else(|| invalid(format!("{size} is not a Fibonacci number")))?;
        fibonacci_approximant(l)
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }

    /// `2 pi alpha n` reduced modulo `2 pi` exactly before conversion.
    pub fn phase(&self, n: usize) -> f64 {
        let r = (self.numerator as u128 * n as u128) % self.denominator as u128;
        2.0 * PI * (r as f64) / (self.denominator as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Constant hopping `J`, potential `2A cos x / (1 - B cos x)`.
    #[serde(alias = "diagonal", alias = "gaa")]
    DiagonalGaa,
    /// Hopping `A + B cos x`, no potential.
    #[serde(alias = "off_diagonal", alias = "aa")]
    OffDiagonalAa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    Open,
}

impl FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "periodic" | "pbc" | "ring" => Ok(Boundary::Periodic),
            "open" | "obc" => Ok(Boundary::Open),
            other => Err(invalid(format!("unknown boundary `{other}`"))),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Open => "open",
        })
    }
}

/// A fully resolved lattice: model, parameters, approximant, size, boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpecRecord", into = "LatticeSpecRecord")]
pub struct LatticeSpec {
    pub model: Model,
    /// Uniform hopping of the diagonal model; unused by the off-diagonal one.
    pub j: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
    pub alpha: FibonacciApproximant,
    pub size: usize,
    pub boundary: Boundary,
}

impl LatticeSpec {
    /// Diagonal model on a commensurate ring of `size` sites (a Fibonacci number).
    pub fn diagonal_gaa(j: f64, a: f64, b: f64, size: usize) -> Result<Self> {
        let spec = Self {
            model: Model::DiagonalGaa,
            j,
            a,
            b,
            theta: 0.0,
            alpha: FibonacciApproximant::for_size(size)?,
            size,
            boundary: Boundary::Periodic,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Off-diagonal model on a commensurate ring of `size` sites.
    pub fn off_diagonal_aa(a: f64, b: f64, size: usize) -> Result<Self> {
        let spec = Self {
            model: Model::OffDiagonalAa,
            j: 0.0,
            a,
            b,
            theta: 0.0,
            alpha: FibonacciApproximant::for_size(size)?,
            size,
            boundary: Boundary::Periodic,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    /// Same parameters on the approximant with denominator `size`.
    pub fn resized(&self, size: usize) -> Result<Self> {
        let spec = Self { alpha: FibonacciApproximant::for_size(size)?, size, ..self.clone() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kappa(&self) -> f64 {
        self.b / self.a
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.j, self.a, self.b, self.theta].iter().all(|x| x.is_finite());
        if !finite {
            return Err(invalid("lattice parameters must be finite"));
        }
        if self.size < 2 {
            return Err(invalid(format!("lattice needs at least 2 sites, got {}", self.size)));
        }
        if self.boundary == Boundary::Periodic && self.size as u64 != self.alpha.denominator {
            return Err(invalid(format!(
                "periodic ring of {} sites is not commensurate with alpha = {}/{}",
                self.size, self.alpha.numerator, self.alpha.denominator
            )));
        }
        match self.model {
            Model::DiagonalGaa => {
                if self.j <= 0.0 {
                    return Err(invalid(format!("J must be positive, got {}", self.j)));
                }
                if self.a < 0.0 {
                    return Err(invalid(format!("A must be non-negative, got {}", self.a)));
                }
                if !(0.0..1.0).contains(&self.b) {
                    return Err(invalid(format!("B must lie in [0, 1), got {}", self.b)));
                }
            }
            Model::OffDiagonalAa => {
                if self.a <= 0.0 {
                    return Err(invalid(format!("A must be positive, got {}", self.a)));
                }
                if self.b < 0.0 {
                    return Err(invalid(format!("B must be non-negative, got {}", self.b)));
                }
                if self.kappa() > 1.0 {
                    return Err(Error::KappaOutOfRange(self.kappa()));
                }
            }
        }
        Ok(())
    }
}

/// Flat key/value form used in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeSpecRecord {
    model: Model,
    #[serde(rename = "J", default)]
    j: f64,
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "B")]
    b: f64,
    #[serde(default)]
    theta: f64,
    /// Defaults to the approximant whose denominator is `L`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha_index: Option<usize>,
    #[serde(rename = "L")]
    size: usize,
    #[serde(default)]
    boundary: Boundary,
}

impl TryFrom<LatticeSpecRecord> for LatticeSpec {
    type Error = Error;
    fn try_from(r: LatticeSpecRecord) -> Result<Self> {
        let alpha = match r.alpha_index {
            Some(l) => fibonacci_approximant(l)?,
            None => FibonacciApproximant::for_size(r.size)?,
        };
        let spec = LatticeSpec {
            model: r.model,
            j: r.j,
            a: r.a,
            b: r.b,
            theta: r.theta,
            alpha,
            size: r.size,
            boundary: r.boundary,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<LatticeSpec> for LatticeSpecRecord {
    fn from(s: LatticeSpec) -> Self {
        LatticeSpecRecord {
            model: s.model,
            j: s.j,
            a: s.a,
            b: s.b,
            theta: s.theta,
            alpha_index: Some(s.alpha.index),
            size: s.size,
            boundary: s.boundary,
        }
    }
}

/// Bond hoppings `J_n` and on-site potentials `V_n`, both of length `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoppingProfile {
    pub hopping: Vec<f64>,
    pub potential: Vec<f64>,
}

impl HoppingProfile {
    pub fn new(hopping: Vec<f64>, potential: Vec<f64>) -> Result<Self> {
        if hopping.len() != potential.len() {
            return Err(invalid("hopping and potential lengths differ"));
        }
        if hopping.len() < 2 {
            return Err(invalid("profile needs at least 2 sites"));
        }
        if hopping.iter().chain(&potential).any(|x| !x.is_finite()) {
            return Err(invalid("profile entries must be finite"));
        }
        Ok(Self { hopping, potential })
    }

    pub fn uniform(size: usize, j: f64) -> Result<Self> {
        Self::new(vec![j; size], vec![0.0; size])
    }

    pub fn len(&self) -> usize {
        self.hopping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hopping.is_empty()
    }

    /// Bonds present under `boundary`: all `L` on a ring, the first `L - 1` on a chain.
    pub fn bonds(&self, boundary: Boundary) -> &[f64] {
        match boundary {
            Boundary::Periodic => &self.hopping,
            Boundary::Open => &self.hopping[..self.len() - 1],
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            hopping: self.hopping.iter().map(|j| c * j).collect(),
            potential: self.potential.clone(),
        }
    }
}

pub fn build_profile(spec: &LatticeSpec) -> Result<HoppingProfile> {
    spec.validate()?;
    let l = spec.size;
    let x = |n: usize| spec.alpha.phase(n) + spec.theta;
    let (hopping, potential) = match spec.model {
        Model::DiagonalGaa => (
            vec![spec.j; l],
            (0..l)
                .map(|n| {
                    let c = x(n).cos();
                    2.0 * spec.a * c / (1.0 - spec.b * c)
                })
                .collect(),
        ),
        // Clamp the round-off negatives at kappa = 1.
        Model::OffDiagonalAa => (
            (0..l).map(|n| (spec.a + spec.b * x(n).cos()).max(0.0)).collect(),
            vec![0.0; l],
        ),
    };
    HoppingProfile::new(hopping, potential)
}

/// `E_m = (2/B)(J - A)` of the diagonal model.
pub fn mobility_edge_energy(spec: &LatticeSpec) -> Result<f64> {
    if spec.model != Model::DiagonalGaa {
        return Err(invalid("closed-form mobility edge exists only for the diagonal model"));
    }
    if spec.b == 0.0 {
        return Err(invalid("B = 0: the model has no mobility edge"));
    }
    Ok(2.0 / spec.b * (spec.j - spec.a))
}

/// Real symmetric matrix with tridiagonal structure plus optional ring corners.
pub trait SymmetricMatrix {
    fn matrix(&self) -> &Array2<f64>;
    /// Diagonal and first off-diagonal when the matrix is exactly tridiagonal.
    fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>)>;
}

/// `H = sum_n V_n |n><n| - J_n (|n><n+1| + h.c.)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    pub matrix: Array2<f64>,
    pub boundary: Boundary,
}

pub fn build_hamiltonian(profile: &HoppingProfile, boundary: Boundary) -> HamiltonianMatrix {
    let l = profile.len();
    let mut h = Array2::<f64>::zeros((l, l));
    for (n, &v) in profile.potential.iter().enumerate() {
        h[[n, n]] = v;
    }
    for (n, &j) in profile.bonds(boundary).iter().enumerate() {
        let m = (n + 1) % l;
        h[[n, m]] -= j;
        h[[m, n]] -= j;
    }
    HamiltonianMatrix { matrix: h, boundary }
}

impl SymmetricMatrix for HamiltonianMatrix {
    fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
    fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        tridiagonal_part(&self.matrix, self.boundary)
    }
}

/// Classical generator `W` of `dP/dt = W P` in the strong-dephasing limit.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMatrix {
    pub matrix: Array2<f64>,
    pub gamma: f64,
    pub boundary: Boundary,
}

pub fn build_markov(profile: &HoppingProfile, gamma: f64, boundary: Boundary) -> Result<MarkovMatrix> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("dephasing rate must be positive, got {gamma}")));
    }
    let l = profile.len();
    let mut w = Array2::<f64>::zeros((l, l));
    for (n, &j) in profile.bonds(boundary).iter().enumerate() {
        let m = (n + 1) % l;
        let rate = 2.0 * j * j / gamma;
        w[[n, m]] += rate;
        w[[m, n]] += rate;
        w[[n, n]] -= rate;
        w[[m, m]] -= rate;
    }
    Ok(MarkovMatrix { matrix: w, gamma, boundary })
}

impl MarkovMatrix {
    /// Nearest-neighbour rates `W_{n,n+1}` for `n < L - 1`.
    pub fn chain_rates(&self) -> Vec<f64> {
        let l = self.matrix.nrows();
        (0..l - 1).map(|n| self.matrix[[n, n + 1]]).collect()
    }
}

impl SymmetricMatrix for MarkovMatrix {
    fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
    fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        tridiagonal_part(&self.matrix, self.boundary)
    }
}

impl SymmetricMatrix for Array2<f64> {
    fn matrix(&self) -> &Array2<f64> {
        self
    }
    fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let l = self.nrows();
        let banded = self
            .indexed_iter()
            .all(|((i, j), &x)| x == 0.0 || i.abs_diff(j) <= 1);
        banded.then(|| {
            ((0..l).map(|i| self[[i, i]]).collect(), (0..l.saturating_sub(1)).map(|i| self[[i + 1, i]]).collect())
        })
    }
}

fn tridiagonal_part(m: &Array2<f64>, boundary: Boundary) -> Option<(Vec<f64>, Vec<f64>)> {
    let l = m.nrows();
    (boundary == Boundary::Open || l == 1).then(|| {
        ((0..l).map(|i| m[[i, i]]).collect(), (0..l - 1).map(|i| m[[i + 1, i]]).collect())
    })
}

/// Write a dense matrix as row-major CSV.
pub fn write_matrix_csv<W: std::io::Write>(m: &Array2<f64>, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in m.rows() {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
