//! Versioned JSON file formats (`"sepmarg/1"`).
//!
//! Complex matrices are lists of rows, each entry a `[re, im]` pair. Sets
//! are keyed by their comma-joined sorted labels, e.g. `"1,2"`. Site
//! dimensions are a map from label to dimension.
//!
//! ```json
//! {
//!   "version": "sepmarg/1",
//!   "sites": {"1": 2, "2": 2},
//!   "scenario": {"kind": {"type": "custom"}, "sets": [[1, 2]]},
//!   "states": {"1,2": [[[0.5, 0], [0, 0], [0, 0], [0.5, 0]], ...]}
//! }
//! ```
//!
//! Hamiltonian files replace `states` by `hamiltonian`, tagged by `type`:
//! `pauli` (`boundary`, `terms: [{coeff, ops: [[site, "X"], ...]}]`),
//! `local` (`terms: [{set, matrix}]`) or `dense` (`matrix` on all sites in
//! scenario order). Distribution files hold `distributions: [{vars:
//! [[label, alphabet], ...], table}]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical::{ClassicalError, DiscreteDistribution};
use crate::hierarchy::{HierarchyError, ObjectiveTerm, Operator, StateEnsemble, Witness};
use crate::linalg::{ComplexMatrix, C};
use crate::models::{Boundary, ModelError, PauliHamiltonian, PauliTerm};
use crate::qops::{kron, permute_subsystems, QopsError};
use crate::scenarios::{Completion, MarginalScenario, ScenarioError, ScenarioKind};

pub const VERSION: &str = "sepmarg/1";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported version {0:?}, expected {VERSION:?}")]
    Version(String),
    #[error("{key}: {reason}")]
    Entry { key: String, reason: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Classical(#[from] ClassicalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Qops(#[from] QopsError),
}

pub type Result<T> = std::result::Result<T, FormatError>;

fn entry(key: impl Into<String>, reason: impl ToString) -> FormatError {
    FormatError::Entry {
        key: key.into(),
        reason: reason.to_string(),
    }
}

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &ComplexMatrix<f64>) -> MatrixJson {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_json(rows: &MatrixJson) -> std::result::Result<ComplexMatrix<f64>, String> {
    let n = rows.len();
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return Err(format!("row of length {} in a {n}-row matrix", r.len()));
    }
    Ok(ComplexMatrix::from_fn(n, n, |i, j| C::new(rows[i][j][0], rows[i][j][1])))
}

pub fn set_key(set: &[usize]) -> String {
    let mut s = set.to_vec();
    s.sort_unstable();
    s.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn parse_set_key(key: &str) -> std::result::Result<Vec<usize>, String> {
    let mut s = key
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad label {t:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    s.sort_unstable();
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioJson {
    pub kind: ScenarioKind,
    pub sets: Vec<Vec<usize>>,
}

/// Scenario part shared by every file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub version: String,
    pub sites: BTreeMap<usize, usize>,
    pub scenario: ScenarioJson,
}

fn check_version(v: &str) -> Result<()> {
    if v != VERSION {
        return Err(FormatError::Version(v.to_string()));
    }
    Ok(())
}

/// Canonical scenario of a structured kind, if it has one.
fn canonical(kind: ScenarioKind, n: usize, d: usize) -> Option<std::result::Result<MarginalScenario, ScenarioError>> {
    Some(match kind {
        ScenarioKind::Custom => return None,
        ScenarioKind::Star => MarginalScenario::star(n, d),
        ScenarioKind::Line => MarginalScenario::line(n, d),
        ScenarioKind::Ring => MarginalScenario::ring(n, d),
        ScenarioKind::Ti1d { k } => MarginalScenario::ti1d(k, d),
        ScenarioKind::Ti2dReflect { l } => MarginalScenario::ti2d_reflect(l, d),
    })
}

impl ScenarioFile {
    pub fn from_scenario(s: &MarginalScenario) -> Self {
        Self {
            version: VERSION.into(),
            sites: s.sites().iter().copied().zip(s.dims().iter().copied()).collect(),
            scenario: ScenarioJson {
                kind: s.kind(),
                sets: s.sets().to_vec(),
            },
        }
    }

    /// Structured kinds must list exactly their canonical sets on sites `1..=n`.
    pub fn to_scenario(&self) -> Result<MarginalScenario> {
        check_version(&self.version)?;
        let sites: Vec<(usize, usize)> = self.sites.iter().map(|(&l, &d)| (l, d)).collect();
        let s = MarginalScenario::new(sites, self.scenario.sets.clone(), self.scenario.kind)?;
        let d = s.dims().first().copied().unwrap_or(1);
        if let Some(c) = canonical(s.kind(), s.num_sites(), d) {
            let c = c?;
            let mut want = c.sets().to_vec();
            let mut got = s.sets().to_vec();
            want.sort();
            got.sort();
            if want != got || c.sites() != s.sites() || c.dims() != s.dims() {
                return Err(entry("scenario", format!("sites and sets do not match a {:?} scenario", s.kind())));
            }
            return Ok(c);
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFile {
    pub version: String,
    pub sites: BTreeMap<usize, usize>,
    pub scenario: ScenarioJson,
    pub states: BTreeMap<String, MatrixJson>,
}

impl EnsembleFile {
    pub fn from_ensemble(e: &StateEnsemble) -> Self {
        let base = ScenarioFile::from_scenario(e.scenario());
        Self {
            version: base.version,
            sites: base.sites,
            scenario: base.scenario,
            states: e
                .scenario()
                .sets()
                .iter()
                .zip(e.states())
                .map(|(set, rho)| (set_key(set), matrix_to_json(rho.matrix())))
                .collect(),
        }
    }

    /// Validates every matrix (Hermitian, PSD, unit trace) and local
    /// compatibility at `tol`.
    pub fn to_ensemble(&self, tol: f64) -> Result<StateEnsemble> {
        let s = ScenarioFile {
            version: self.version.clone(),
            sites: self.sites.clone(),
            scenario: self.scenario.clone(),
        }
        .to_scenario()?;
        let mut by_set: BTreeMap<Vec<usize>, (&String, &MatrixJson)> = BTreeMap::new();
        for (key, m) in &self.states {
            let set = parse_set_key(key).map_err(|r| entry(key.clone(), r))?;
            if s.set_index(&set).is_none() {
                return Err(entry(key.clone(), "not a set of the scenario"));
            }
            by_set.insert(set, (key, m));
        }
        let states = s
            .sets()
            .iter()
            .map(|set| {
                let (key, m) = by_set.get(set).ok_or_else(|| entry(set_key(set), "missing state"))?;
                let mat = matrix_from_json(m).map_err(|r| entry(key.to_string(), r))?;
                let dims = s.set_dims(set)?;
                let rho = Operator::new_with_tol(dims, mat, tol).map_err(|e| entry(key.to_string(), e))?;
                StateEnsemble::with_tolerance(
                    MarginalScenario::custom(set.iter().map(|&a| (a, s.dim_of(a).unwrap())).collect(), vec![set.clone()])?,
                    vec![rho.clone()],
                    tol,
                )
                .map_err(|e| entry(key.to_string(), e))?;
                Ok(rho)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StateEnsemble::with_tolerance(s, states, tol)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTermJson {
    pub set: Vec<usize>,
    pub matrix: MatrixJson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HamiltonianJson {
    Pauli { boundary: Boundary, terms: Vec<PauliTerm> },
    Local { terms: Vec<LocalTermJson> },
    Dense { matrix: MatrixJson },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianFile {
    pub version: String,
    pub sites: BTreeMap<usize, usize>,
    pub scenario: ScenarioJson,
    pub hamiltonian: HamiltonianJson,
}

/// `op` on `set` tensored with identities, as an operator on all sites of `s`.
pub fn embed(op: &Operator, set: &[usize], s: &MarginalScenario) -> Result<Operator> {
    let rest: Vec<usize> = s.sites().iter().copied().filter(|a| !set.contains(a)).collect();
    let order: Vec<usize> = set.iter().chain(&rest).copied().collect();
    let full = if rest.is_empty() {
        op.clone()
    } else {
        kron(op, &Operator::identity(s.set_dims(&rest)?)?)
    };
    let perm: Vec<usize> = s.sites().iter().map(|a| order.iter().position(|b| b == a).expect("every site")).collect();
    Ok(permute_subsystems(&full, &perm)?)
}

impl HamiltonianFile {
    pub fn scenario(&self) -> Result<MarginalScenario> {
        ScenarioFile {
            version: self.version.clone(),
            sites: self.sites.clone(),
            scenario: self.scenario.clone(),
        }
        .to_scenario()
    }

    fn pauli(&self, s: &MarginalScenario, boundary: Boundary, terms: &[PauliTerm]) -> Result<PauliHamiltonian> {
        if s.sites().iter().enumerate().any(|(i, &a)| a != i + 1) || s.dims().iter().any(|&d| d != 2) {
            return Err(entry("hamiltonian", "Pauli Hamiltonians need qubit sites labelled 1..n"));
        }
        Ok(PauliHamiltonian::new(s.num_sites(), terms.to_vec(), boundary)?)
    }

    /// Terms grouped by support, for energy relaxations.
    pub fn local_terms(&self) -> Result<Vec<ObjectiveTerm>> {
        let s = self.scenario()?;
        match &self.hamiltonian {
            HamiltonianJson::Pauli { boundary, terms } => Ok(self.pauli(&s, *boundary, terms)?.local_terms()),
            HamiltonianJson::Local { terms } => terms
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let key = format!("hamiltonian.terms[{k}]");
                    let mut set = t.set.clone();
                    set.sort_unstable();
                    let m = matrix_from_json(&t.matrix).map_err(|r| entry(key.clone(), r))?;
                    let op = Operator::new_with_tol(s.set_dims(&set)?, m, 1e-10).map_err(|e| entry(key, e))?;
                    Ok(ObjectiveTerm { set, op })
                })
                .collect(),
            HamiltonianJson::Dense { .. } => Err(entry("hamiltonian", "a dense Hamiltonian has no local terms")),
        }
    }

    /// Global operator on all sites in scenario order.
    pub fn global(&self) -> Result<Operator> {
        let s = self.scenario()?;
        match &self.hamiltonian {
            HamiltonianJson::Pauli { boundary, terms } => Ok(self.pauli(&s, *boundary, terms)?.matrix()?),
            HamiltonianJson::Local { .. } => {
                let mut acc = Operator::identity(s.dims().to_vec())?.scale(0.0);
                for t in self.local_terms()? {
                    acc = acc.add(&embed(&t.op, &t.set, &s)?)?;
                }
                Ok(acc)
            }
            HamiltonianJson::Dense { matrix } => {
                let m = matrix_from_json(matrix).map_err(|r| entry("hamiltonian.matrix", r))?;
                Operator::new_with_tol(s.dims().to_vec(), m, 1e-10).map_err(|e| entry("hamiltonian.matrix", e))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionJson {
    pub vars: Vec<(usize, usize)>,
    pub table: Vec<f64>,
}

impl DistributionJson {
    pub fn from_distribution(p: &DiscreteDistribution) -> Self {
        Self {
            vars: p.vars().to_vec(),
            table: p.table().to_vec(),
        }
    }

    pub fn to_distribution(&self) -> std::result::Result<DiscreteDistribution, ClassicalError> {
        DiscreteDistribution::new(self.vars.clone(), self.table.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionFile {
    pub version: String,
    pub distributions: Vec<DistributionJson>,
}

impl DistributionFile {
    pub fn new(ps: &[DiscreteDistribution]) -> Self {
        Self {
            version: VERSION.into(),
            distributions: ps.iter().map(DistributionJson::from_distribution).collect(),
        }
    }

    pub fn to_distributions(&self) -> Result<Vec<DiscreteDistribution>> {
        check_version(&self.version)?;
        self.distributions
            .iter()
            .enumerate()
            .map(|(k, d)| d.to_distribution().map_err(|e| entry(format!("distributions[{k}]"), e)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionFile {
    pub version: String,
    pub sites: BTreeMap<usize, usize>,
    pub scenario: ScenarioJson,
    pub edges: Vec<(usize, usize)>,
    pub added_edges: Vec<(usize, usize)>,
    /// Maximal cliques in running-intersection order.
    pub cliques: Vec<Vec<usize>>,
    /// Set key to the clique containing it.
    pub clique_of_set: BTreeMap<String, Vec<usize>>,
}

impl CompletionFile {
    pub fn new(s: &MarginalScenario, c: &Completion) -> Self {
        let base = ScenarioFile::from_scenario(s);
        Self {
            version: base.version,
            sites: base.sites,
            scenario: base.scenario,
            edges: c.graph.edges(),
            added_edges: c.added_edges.clone(),
            cliques: c.cliques.clone(),
            clique_of_set: s
                .sets()
                .iter()
                .zip(&c.clique_of_set)
                .map(|(set, &k)| (set_key(set), c.cliques[k].clone()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarkasJson {
    pub margin: f64,
    pub residual: f64,
    pub min_eig: f64,
}

/// Witness sidecar: `Σ_I tr(W_I ρ_I) >= offset` on every ensemble passing
/// the relaxation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessFile {
    pub version: String,
    pub offset: f64,
    pub violation: f64,
    pub cuts: Vec<String>,
    pub farkas: FarkasJson,
    pub terms: BTreeMap<String, MatrixJson>,
}

impl WitnessFile {
    pub fn new(w: &Witness) -> Self {
        Self {
            version: VERSION.into(),
            offset: w.offset,
            violation: w.violation,
            cuts: w.cuts.clone(),
            farkas: FarkasJson {
                margin: w.margin,
                residual: w.residual,
                min_eig: w.min_eig,
            },
            terms: w.terms.iter().map(|t| (set_key(&t.set), matrix_to_json(t.operator.matrix()))).collect(),
        }
    }
}
