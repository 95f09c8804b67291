//! Spin models: Pauli-string Hamiltonians, thermal marginals by exact
//! diagonalization, separable-energy bounds and critical-β scans.

pub mod random;
mod scan;
mod thermal;

pub use scan::{critical_beta_scan, BetaScanResult, ScanSettings, ScanVerdict, Transition};
pub use thermal::{thermal_marginals, Spectrum};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hierarchy::{build_energy, minimize, EnergyBound, HierarchyError, HierarchyKind, HierarchyOptions, ObjectiveTerm, Operator};
use crate::linalg::{ComplexMatrix, LinalgError, C};
use crate::qops::QopsError;
use crate::scenarios::MarginalScenario;
use crate::sdp::SdpOptions;

/// Largest number of qubits handled by exact diagonalization.
pub const MAX_SITES: usize = 12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{sites} sites exceed the exact-diagonalization budget of {max}")]
    TooLarge { sites: usize, max: usize },
    #[error("invalid term: {0}")]
    InvalidTerm(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Qops(#[from] QopsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> ComplexMatrix<f64> {
        let (o, z, i) = (C::new(1.0, 0.0), C::new(0.0, 0.0), C::new(0.0, 1.0));
        match self {
            Self::X => ComplexMatrix::from_rows(&[vec![z, o], vec![o, z]]),
            Self::Y => ComplexMatrix::from_rows(&[vec![z, -i], vec![i, z]]),
            Self::Z => ComplexMatrix::from_rows(&[vec![o, z], vec![z, -o]]),
        }
    }

    /// `P |b> = phase * |b ^ flip>`
    fn act(self, b: usize) -> (usize, C<f64>) {
        let sign = if b == 0 { 1.0 } else { -1.0 };
        match self {
            Self::X => (1, C::new(1.0, 0.0)),
            Self::Y => (1, C::new(0.0, sign)),
            Self::Z => (0, C::new(sign, 0.0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// `coeff * ⊗_{(site, P)} P`, sites 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coeff: f64,
    pub ops: Vec<(usize, Pauli)>,
}

impl PauliTerm {
    pub fn new(coeff: f64, ops: Vec<(usize, Pauli)>) -> Self {
        Self { coeff, ops }
    }

    pub fn support(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.ops.iter().map(|o| o.0).collect();
        s.sort_unstable();
        s
    }

    /// Matrix on the sorted support.
    pub fn local_matrix(&self) -> ComplexMatrix<f64> {
        let mut ops = self.ops.clone();
        ops.sort_by_key(|o| o.0);
        let mut m = ComplexMatrix::identity(1);
        for (_, p) in ops {
            m = m.kron(&p.matrix());
        }
        m.scale(self.coeff)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliHamiltonian {
    n: usize,
    terms: Vec<PauliTerm>,
    boundary: Boundary,
}

impl PauliHamiltonian {
    pub fn new(n: usize, terms: Vec<PauliTerm>, boundary: Boundary) -> Result<Self> {
        for t in &terms {
            if !t.coeff.is_finite() {
                return Err(ModelError::InvalidTerm(format!("coefficient {}", t.coeff)));
            }
            if t.ops.is_empty() {
                return Err(ModelError::InvalidTerm("empty Pauli string".into()));
            }
            let s = t.support();
            if s.iter().any(|&a| a == 0 || a > n) || s.windows(2).any(|w| w[0] == w[1]) {
                return Err(ModelError::InvalidTerm(format!("sites {s:?} on a {n}-site system")));
            }
        }
        Ok(Self { n, terms, boundary })
    }

    /// Nearest-neighbour two-body terms `coeff * P_j Q_{j+1}`; periodic chains add `P_n Q_1`.
    pub fn nearest_neighbour(n: usize, boundary: Boundary, coupling: &[(f64, Pauli, Pauli)]) -> Result<Self> {
        if n < 2 {
            return Err(ModelError::Invalid("a chain needs at least 2 sites".into()));
        }
        let mut bonds: Vec<(usize, usize)> = (1..n).map(|j| (j, j + 1)).collect();
        if boundary == Boundary::Periodic && n > 2 {
            bonds.push((n, 1));
        }
        let terms = bonds
            .into_iter()
            .flat_map(|(a, b)| coupling.iter().map(move |&(c, p, q)| PauliTerm::new(c, vec![(a, p), (b, q)])))
            .collect();
        Self::new(n, terms, boundary)
    }

    /// `-(1/2) Σ_j X_j Y_{j+1}`
    pub fn xy_chain(n: usize, boundary: Boundary) -> Result<Self> {
        Self::nearest_neighbour(n, boundary, &[(-0.5, Pauli::X, Pauli::Y)])
    }

    /// `Σ_j (X_j X_{j+1} + Y_j Y_{j+1} + Z_j Z_{j+1})`
    pub fn heisenberg(n: usize, boundary: Boundary) -> Result<Self> {
        Self::nearest_neighbour(n, boundary, &[(1.0, Pauli::X, Pauli::X), (1.0, Pauli::Y, Pauli::Y), (1.0, Pauli::Z, Pauli::Z)])
    }

    pub fn num_sites(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Dense `2^n x 2^n` matrix; site 1 is the most significant qubit.
    pub fn matrix(&self) -> Result<Operator> {
        if self.n > MAX_SITES {
            return Err(ModelError::TooLarge { sites: self.n, max: MAX_SITES });
        }
        let dim = 1usize << self.n;
        let mut m = ComplexMatrix::zeros(dim, dim);
        for t in &self.terms {
            for col in 0..dim {
                let mut row = col;
                let mut amp = C::new(t.coeff, 0.0);
                for &(site, p) in &t.ops {
                    let shift = self.n - site;
                    let (flip, phase) = p.act((row >> shift) & 1);
                    row ^= flip << shift;
                    amp *= phase;
                }
                m[(row, col)] += amp;
            }
        }
        Ok(Operator::new(vec![2; self.n], m)?)
    }

    /// Terms merged by support, each as an operator on its sorted support.
    pub fn local_terms(&self) -> Vec<ObjectiveTerm> {
        let mut by_set: BTreeMap<Vec<usize>, ComplexMatrix<f64>> = BTreeMap::new();
        for t in &self.terms {
            let m = t.local_matrix();
            by_set
                .entry(t.support())
                .and_modify(|acc| *acc = &*acc + &m)
                .or_insert(m);
        }
        by_set
            .into_iter()
            .map(|(set, m)| ObjectiveTerm {
                op: Operator::new(vec![2; set.len()], m).expect("Pauli sums are Hermitian"),
                set,
            })
            .collect()
    }
}

/// `Σ_i α_i (X_i X_{i+1} + Y_i Y_{i+1} + Z_i Z_{i+1})` on an open chain, `α_i ~ U[0, 1]`.
pub fn spin_glass_sample(n: usize, seed: u64) -> Result<PauliHamiltonian> {
    if n < 2 {
        return Err(ModelError::Invalid("a chain needs at least 2 sites".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::with_capacity(3 * (n - 1));
    for j in 1..n {
        let a: f64 = rng.gen_range(0.0..=1.0);
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            terms.push(PauliTerm::new(a, vec![(j, p), (j + 1, p)]));
        }
    }
    PauliHamiltonian::new(n, terms, Boundary::Open)
}

/// Randomly sampled two-qubit Hamiltonian whose thermal state is entangled,
/// separable, entangled again and finally separable as β decreases.
pub fn reentrant_two_qubit() -> Operator {
    #[rustfmt::skip]
    let h = [
        1.3398, 0.9526, 0.2617, 1.8461,
        0.9526, 0.8519, 0.2829, -1.1422,
        0.2617, 0.2829, -2.2228, 0.7696,
        1.8461, -1.1422, 0.7696, 0.0476,
    ];
    Operator::new(vec![2, 2], ComplexMatrix::from_real(4, 4, &h)).expect("symmetric")
}

/// Lower bound on the separable energy of `h`: the minimum of
/// `Σ_I tr(h_I ρ_I)` over the level-`L` relaxation on `s`.
pub fn separable_energy(
    h: &PauliHamiltonian,
    s: &MarginalScenario,
    kind: HierarchyKind,
    opts: &HierarchyOptions,
    sdp_opts: &SdpOptions,
) -> Result<EnergyBound> {
    let relax = build_energy(kind, s, &h.local_terms(), opts)?;
    Ok(minimize(&relax, sdp_opts)?)
}
