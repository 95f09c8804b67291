//! SDP relaxation hierarchies for the separable marginal problem.
//!
//! Every builder produces a [`Relaxation`]: a solver instance whose matrix
//! variables are symmetric extensions `ρ^{(L)}_I` compressed to
//! `⊗_α H_sym(L, d_α)`, together with tags recording where each equality row
//! and matrix inequality came from. Infeasible relaxations yield a
//! [`Witness`] read off the Farkas ray on the marginal rows.
//!
//! Partial-transpose conditions use a canonical family of cuts: for each
//! site, transpose `k` of its copies (`1 <= k <= L`), alone or together with
//! `l` copies of one other site, keeping one representative per
//! complementary pair.

mod builder;
mod space;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{trace_norm, ComplexMatrix, C};
use crate::qops::{partial_trace, permute_subsystems, HermitianOperator, QopsError};
use crate::scenarios::{chordal_complete, MarginalScenario, ScenarioError, ScenarioKind};
use crate::sdp::{self, extract_farkas, FarkasCheck, SdpError, SdpInstance, SdpOptions, SdpSolution, SdpStatus};

use builder::{assemble, canonical_cuts, BlockSpec, ExtraSpec, Spec, TargetData, TargetSpec};
use space::{BlockSpace, HermParams};

pub type Operator = HermitianOperator<f64>;

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Qops(#[from] QopsError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("state on set {set:?} is not a density matrix: {reason}")]
    NotState { set: Vec<usize>, reason: String },
    #[error("states on {a:?} and {b:?} disagree on their overlap by {deviation:e} in trace norm")]
    IncompatibleEnsemble { a: Vec<usize>, b: Vec<usize>, deviation: f64 },
    #[error("site {site} is not private to set {set:?}")]
    NotPrivate { site: usize, set: Vec<usize> },
    #[error("builder expects a {expected} scenario, got {got:?}")]
    WrongKind { expected: &'static str, got: ScenarioKind },
    #[error("state is not reflection symmetric (defect {0:e})")]
    NotReflectionSymmetric(f64),
    #[error("objective term on {0:?} is not contained in any set of the scenario")]
    UnsupportedTerm(Vec<usize>),
    #[error("operation needs an infeasible solve, got {0:?}")]
    WrongStatus(SdpStatus),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, HierarchyError>;

/// Reduced states `ρ_I` for every set of a scenario, in the scenario's set order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateEnsemble {
    scenario: MarginalScenario,
    states: Vec<Operator>,
}

/// Default tolerance on trace, positivity and local compatibility.
pub const ENSEMBLE_TOL: f64 = 1e-8;

impl StateEnsemble {
    pub fn new(scenario: MarginalScenario, states: Vec<Operator>) -> Result<Self> {
        Self::with_tolerance(scenario, states, ENSEMBLE_TOL)
    }

    pub fn with_tolerance(scenario: MarginalScenario, states: Vec<Operator>, tol: f64) -> Result<Self> {
        if states.len() != scenario.sets().len() {
            return Err(HierarchyError::ShapeMismatch(format!(
                "{} states for {} sets",
                states.len(),
                scenario.sets().len()
            )));
        }
        for (set, rho) in scenario.sets().iter().zip(&states) {
            let dims = scenario.set_dims(set)?;
            if rho.dims() != dims.as_slice() {
                return Err(HierarchyError::ShapeMismatch(format!(
                    "state on {set:?} has dims {:?}, expected {dims:?}",
                    rho.dims()
                )));
            }
            let not_state = |reason: String| HierarchyError::NotState { set: set.clone(), reason };
            if (rho.trace() - 1.0).abs() > tol {
                return Err(not_state(format!("trace {}", rho.trace())));
            }
            let min = rho.min_eigenvalue()?;
            if min < -tol {
                return Err(not_state(format!("minimum eigenvalue {min:e}")));
            }
        }
        let e = Self { scenario, states };
        if let Some((a, b, deviation)) = e.worst_overlap()? {
            if deviation > tol {
                return Err(HierarchyError::IncompatibleEnsemble { a, b, deviation });
            }
        }
        Ok(e)
    }

    /// Overlapping pair with the largest trace-norm disagreement.
    pub fn worst_overlap(&self) -> Result<Option<(Vec<usize>, Vec<usize>, f64)>> {
        let sets = self.scenario.sets();
        let mut worst: Option<(Vec<usize>, Vec<usize>, f64)> = None;
        for p in 0..sets.len() {
            for q in p + 1..sets.len() {
                let common: Vec<usize> = sets[p].iter().copied().filter(|a| sets[q].contains(a)).collect();
                if common.is_empty() {
                    continue;
                }
                let restrict = |set: &[usize], rho: &Operator| {
                    let keep: Vec<usize> = set.iter().enumerate().filter(|(_, a)| common.contains(a)).map(|(i, _)| i).collect();
                    partial_trace(rho, &keep)
                };
                let a = restrict(&sets[p], &self.states[p])?;
                let b = restrict(&sets[q], &self.states[q])?;
                let dev = trace_norm(&(a.matrix() - b.matrix())).map_err(QopsError::from)?;
                if worst.as_ref().is_none_or(|w| dev > w.2) {
                    worst = Some((sets[p].clone(), sets[q].clone(), dev));
                }
            }
        }
        Ok(worst)
    }

    pub fn scenario(&self) -> &MarginalScenario {
        &self.scenario
    }

    pub fn states(&self) -> &[Operator] {
        &self.states
    }

    pub fn state_of(&self, set: &[usize]) -> Option<&Operator> {
        self.scenario.set_index(set).map(|i| &self.states[i])
    }

    /// Marginals of a global operator on the scenario's sites (sites in scenario order).
    pub fn from_global(scenario: MarginalScenario, rho: &Operator) -> Result<Self> {
        let states = scenario
            .sets()
            .iter()
            .map(|set| {
                let keep: Vec<usize> = set.iter().map(|&a| scenario.position(a).expect("validated set")).collect();
                let mut keep_sorted = keep.clone();
                keep_sorted.sort_unstable();
                let reduced = partial_trace(rho, &keep_sorted)?;
                // sets are sorted by label; reorder if positions are not monotone
                let perm: Vec<usize> = keep.iter().map(|p| keep_sorted.iter().position(|q| q == p).unwrap()).collect();
                Ok(permute_subsystems(&reduced, &perm)?)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(scenario, states)
    }
}

/// Which partial-transpose cuts each extension block receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutPolicy {
    /// Single-site and two-site cuts (see module docs).
    Canonical,
    SingleSite,
    None,
}

#[derive(Clone, Debug)]
pub struct HierarchyOptions {
    pub level: usize,
    pub cuts: CutPolicy,
    /// Additional cuts as `(site label, copies transposed)` lists; applied to
    /// every block containing all listed sites.
    pub extra_cuts: Vec<Vec<(usize, usize)>>,
    /// Force real symmetric variables (`Some(true)`) or complex Hermitian
    /// ones (`Some(false)`); by default real whenever all data are real.
    pub real: Option<bool>,
}

impl HierarchyOptions {
    pub fn level(level: usize) -> Self {
        Self {
            level,
            cuts: CutPolicy::Canonical,
            extra_cuts: Vec::new(),
            real: None,
        }
    }

    pub fn with_cuts(mut self, cuts: CutPolicy) -> Self {
        self.cuts = cuts;
        self
    }
}

/// `Σ tr(op ρ_set)` contribution to an energy objective.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ObjectiveTerm {
    pub set: Vec<usize>,
    pub op: Operator,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    /// Entry `(i, j)` (real or imaginary part) of the marginal on target `target`.
    Marginal { target: usize, i: usize, j: usize, imag: bool },
    Overlap { blocks: (usize, usize) },
    /// Local translation invariance.
    Shift { block: usize },
    /// Reflection symmetry.
    Symmetry { block: usize },
    Trace { block: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockTag {
    Extension { block: usize, sites: Vec<usize> },
    /// Partial transpose of `k` copies of each listed `(site, k)`.
    Cut { block: usize, cut: Vec<(usize, usize)> },
}

impl fmt::Display for BlockTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Extension { block, sites } => write!(f, "ext{block}{sites:?}"),
            Self::Cut { block, cut } => {
                let parts: Vec<String> = cut.iter().map(|(s, k)| format!("{s}^{k}")).collect();
                write!(f, "T[{}]@{block}", parts.join(","))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Target {
    pub set: Vec<usize>,
    pub block: usize,
    /// Prescribed state in feasibility mode.
    pub state: Option<Operator>,
}

/// A built relaxation: the solver instance plus provenance.
#[derive(Clone, Debug)]
pub struct Relaxation {
    pub instance: SdpInstance,
    pub row_tags: Vec<RowTag>,
    pub block_tags: Vec<BlockTag>,
    pub level: usize,
    pub real: bool,
    pub targets: Vec<Target>,
    spaces: Vec<(BlockSpace, HermParams, usize)>,
}

impl Relaxation {
    pub fn solve(&self, opts: &SdpOptions) -> Result<SdpSolution> {
        Ok(sdp::solve(&self.instance, opts)?)
    }

    /// Compressed dimension of each extension block.
    pub fn extension_dims(&self) -> Vec<usize> {
        self.spaces.iter().map(|s| s.0.dim).collect()
    }

    pub fn cut_names(&self) -> Vec<String> {
        self.block_tags.iter().filter(|t| matches!(t, BlockTag::Cut { .. })).map(ToString::to_string).collect()
    }

    /// Compressed extension of block `block` at the primal point `x`.
    pub fn extension(&self, x: &[f64], block: usize) -> ComplexMatrix<f64> {
        let (_, params, offset) = &self.spaces[block];
        builder::extension_value(params, x, *offset)
    }

    /// Single-copy marginal of target `t` at the primal point `x`.
    pub fn marginal(&self, x: &[f64], t: usize) -> Result<Operator> {
        let target = &self.targets[t];
        let (space, params, offset) = &self.spaces[target.block];
        let m = builder::marginal_value(space, params, x, *offset, &target.set);
        let dims = target
            .set
            .iter()
            .map(|l| space.sites[space.position(*l).expect("target site in block")].d)
            .collect();
        Ok(Operator::new_with_tol(dims, m, 1e-9)?)
    }
}

/// Witness `Σ_I tr(W_I σ_I) >= offset`, valid for every ensemble passing the
/// relaxation and violated by the rejected one.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub terms: Vec<WitnessTerm>,
    pub offset: f64,
    /// `offset - Σ_I tr(W_I ρ_I)` on the rejected ensemble.
    pub violation: f64,
    pub cuts: Vec<String>,
    /// Farkas conditions of the underlying ray, margin normalised to 1.
    pub margin: f64,
    pub residual: f64,
    pub min_eig: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessTerm {
    pub set: Vec<usize>,
    pub operator: Operator,
}

impl Witness {
    /// `Σ_I tr(W_I σ_I)` for states listed in term order.
    pub fn value(&self, states: &[&Operator]) -> f64 {
        self.terms.iter().zip(states).map(|(t, s)| t.operator.expectation(s)).sum()
    }

    /// Value on an ensemble, looking up each term's set.
    pub fn value_on(&self, e: &StateEnsemble) -> Option<f64> {
        let states: Option<Vec<&Operator>> = self.terms.iter().map(|t| e.state_of(&t.set)).collect();
        states.map(|s| self.value(&s))
    }

    /// Both Farkas conditions at relative tolerance `tol`.
    pub fn certified(&self, tol: f64) -> bool {
        FarkasCheck {
            margin: self.margin,
            residual: self.residual,
            min_eig: self.min_eig,
        }
        .holds(tol)
    }
}

/// Witness from the Farkas ray of an infeasible relaxation in feasibility mode.
pub fn extract_witness(relax: &Relaxation, sol: &SdpSolution) -> Result<Witness> {
    if sol.status != SdpStatus::PrimalInfeasible {
        return Err(HierarchyError::WrongStatus(sol.status));
    }
    let ray = extract_farkas(sol, &relax.instance)?;
    let check = ray.check(&relax.instance);
    let mut mats: Vec<ComplexMatrix<f64>> = relax
        .targets
        .iter()
        .map(|t| {
            let n = t.state.as_ref().map_or(0, Operator::dim);
            ComplexMatrix::zeros(n, n)
        })
        .collect();
    for (tag, &y) in relax.row_tags.iter().zip(&ray.y) {
        if let RowTag::Marginal { target, i, j, imag } = *tag {
            let m = &mut mats[target];
            if i == j {
                m[(i, i)] -= C::new(y, 0.0);
            } else if imag {
                m[(i, j)] -= C::new(0.0, 0.5 * y);
                m[(j, i)] += C::new(0.0, 0.5 * y);
            } else {
                m[(i, j)] -= C::new(0.5 * y, 0.0);
                m[(j, i)] -= C::new(0.5 * y, 0.0);
            }
        }
    }
    let mut terms = Vec::new();
    let mut value = 0.0;
    for (t, m) in relax.targets.iter().zip(mats) {
        let Some(rho) = &t.state else {
            return Err(HierarchyError::Invalid("witnesses need a relaxation built from states".into()));
        };
        let op = Operator::new_with_tol(rho.dims().to_vec(), m, 1e-9)?;
        value += op.expectation(rho);
        terms.push(WitnessTerm { set: t.set.clone(), operator: op });
    }
    Ok(Witness {
        terms,
        offset: 0.0,
        violation: -value,
        cuts: relax.cut_names(),
        margin: check.margin,
        residual: check.residual,
        min_eig: check.min_eig,
    })
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Feasible,
    Infeasible(Box<Witness>),
    /// The solver stopped without a converged answer or a certified ray.
    Inconclusive,
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible)
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Self::Infeasible(_))
    }
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub solution: SdpSolution,
}

/// Solve a feasibility relaxation. Infeasible verdicts require the Farkas
/// conditions to hold at `10 * tol`.
pub fn check(relax: &Relaxation, opts: &SdpOptions) -> Result<CheckReport> {
    let solution = relax.solve(opts)?;
    let verdict = match solution.status {
        SdpStatus::Optimal => Verdict::Feasible,
        SdpStatus::PrimalInfeasible => {
            let w = extract_witness(relax, &solution)?;
            if w.certified(10.0 * opts.tol) {
                Verdict::Infeasible(Box::new(w))
            } else {
                Verdict::Inconclusive
            }
        }
        SdpStatus::DualInfeasible | SdpStatus::MaxIter => Verdict::Inconclusive,
    };
    Ok(CheckReport { verdict, solution })
}

/// Result of minimising an energy over a relaxation.
#[derive(Clone, Debug)]
pub struct EnergyBound {
    pub value: f64,
    pub dual_value: f64,
    pub status: SdpStatus,
    pub solution: SdpSolution,
}

pub fn minimize(relax: &Relaxation, opts: &SdpOptions) -> Result<EnergyBound> {
    let solution = relax.solve(opts)?;
    Ok(EnergyBound {
        value: solution.primal_objective,
        dual_value: solution.dual_objective,
        status: solution.status,
        solution,
    })
}

fn is_real(ops: &[&Operator]) -> bool {
    ops.iter().all(|op| op.matrix().as_slice().iter().all(|z| z.im == 0.0))
}

fn resolve_real(opts: &HierarchyOptions, ops: &[&Operator]) -> Result<bool> {
    let data_real = is_real(ops);
    match opts.real {
        Some(true) if !data_real => Err(HierarchyError::Invalid("real variables requested for complex data".into())),
        Some(r) => Ok(r),
        None => Ok(data_real),
    }
}

fn block_cuts(sites: &[(usize, usize, usize)], opts: &HierarchyOptions) -> Result<Vec<Vec<usize>>> {
    let copies: Vec<usize> = sites.iter().map(|s| s.2).collect();
    let mut cuts = match opts.cuts {
        CutPolicy::Canonical => canonical_cuts(&copies, true),
        CutPolicy::SingleSite => canonical_cuts(&copies, false),
        CutPolicy::None => Vec::new(),
    };
    for extra in &opts.extra_cuts {
        if !extra.iter().all(|(l, _)| sites.iter().any(|s| s.0 == *l)) {
            continue;
        }
        let mut k = vec![0; sites.len()];
        for &(l, c) in extra {
            let pos = sites.iter().position(|s| s.0 == l).expect("checked above");
            if c == 0 || c > sites[pos].2 {
                return Err(HierarchyError::Invalid(format!("cut transposes {c} copies of site {l}")));
            }
            k[pos] = c;
        }
        if !cuts.contains(&k) {
            cuts.push(k);
        }
    }
    Ok(cuts)
}

fn check_level(opts: &HierarchyOptions) -> Result<()> {
    if opts.level == 0 {
        return Err(HierarchyError::Invalid("level must be at least 1".into()));
    }
    Ok(())
}

/// Blocks over sets with a given number of copies per site.
fn blocks_for(s: &MarginalScenario, sets: &[Vec<usize>], copies: impl Fn(usize, usize) -> usize) -> Vec<BlockSpec> {
    sets.iter()
        .enumerate()
        .map(|(k, set)| BlockSpec {
            sites: set.iter().map(|&a| (a, s.dim_of(a).expect("validated site"), copies(k, a))).collect(),
        })
        .collect()
}

enum Data<'a> {
    States(&'a [Operator]),
    Costs(&'a [ObjectiveTerm]),
}

fn finish_sets(
    s: &MarginalScenario,
    blocks: Vec<BlockSpec>,
    block_of_set: &[usize],
    data: Data<'_>,
    opts: &HierarchyOptions,
) -> Result<Relaxation> {
    let ops: Vec<&Operator> = match &data {
        Data::States(st) => st.iter().collect(),
        Data::Costs(terms) => terms.iter().map(|t| &t.op).collect(),
    };
    let real = resolve_real(opts, &ops)?;
    let targets = match data {
        Data::States(states) => s
            .sets()
            .iter()
            .zip(states)
            .zip(block_of_set)
            .map(|((set, rho), &block)| TargetSpec {
                block,
                set: set.clone(),
                data: TargetData::State(rho.clone()),
            })
            .collect(),
        Data::Costs(terms) => terms
            .iter()
            .map(|t| {
                let mut set = t.set.clone();
                set.sort_unstable();
                if set != t.set {
                    return Err(HierarchyError::Invalid(format!("objective set {:?} must be sorted", t.set)));
                }
                let block = blocks
                    .iter()
                    .position(|b| set.iter().all(|a| b.sites.iter().any(|s| s.0 == *a)))
                    .ok_or_else(|| HierarchyError::UnsupportedTerm(set.clone()))?;
                Ok(TargetSpec {
                    block,
                    set,
                    data: TargetData::Cost(t.op.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let cuts = blocks.iter().map(|b| block_cuts(&b.sites, opts)).collect::<Result<Vec<_>>>()?;
    assemble(Spec {
        level: opts.level,
        real,
        blocks,
        targets,
        extras: Vec::new(),
        cuts,
    })
}

fn require_finite(s: &MarginalScenario) -> Result<()> {
    if !s.kind().is_finite() {
        return Err(HierarchyError::WrongKind {
            expected: "finite",
            got: s.kind(),
        });
    }
    Ok(())
}

/// Level-`L` test of hierarchy 𝗛: one extension per set of the scenario.
pub fn build_h(e: &StateEnsemble, opts: &HierarchyOptions) -> Result<Relaxation> {
    check_level(opts)?;
    let s = e.scenario();
    require_finite(s)?;
    let blocks = blocks_for(s, s.sets(), |_, _| opts.level);
    let ids: Vec<usize> = (0..s.sets().len()).collect();
    finish_sets(s, blocks, &ids, Data::States(e.states()), opts)
}

/// 𝗛 relaxation of `min Σ tr(h_I ρ_I)`, with one block per set of `s`.
pub fn build_h_energy(s: &MarginalScenario, terms: &[ObjectiveTerm], opts: &HierarchyOptions) -> Result<Relaxation> {
    check_level(opts)?;
    require_finite(s)?;
    let blocks = blocks_for(s, s.sets(), |_, _| opts.level);
    finish_sets(s, blocks, &[], Data::Costs(terms), opts)
}

fn check_private(s: &MarginalScenario, private: &[Option<usize>]) -> Result<()> {
    if private.len() != s.sets().len() {
        return Err(HierarchyError::ShapeMismatch(format!(
            "{} private-site entries for {} sets",
            private.len(),
            s.sets().len()
        )));
    }
    for (k, (set, p)) in s.sets().iter().zip(private).enumerate() {
        if let Some(a) = *p {
            let elsewhere = s.sets().iter().enumerate().any(|(j, other)| j != k && other.contains(&a));
            if !set.contains(&a) || elsewhere {
                return Err(HierarchyError::NotPrivate { site: a, set: set.clone() });
            }
        }
    }
    Ok(())
}

fn hbar_blocks(s: &MarginalScenario, private: &[Option<usize>], level: usize) -> Vec<BlockSpec> {
    blocks_for(s, s.sets(), |k, a| if private[k] == Some(a) { 1 } else { level })
}

/// Simplified hierarchy 𝗛̄: the private site `α_I` of each set is not extended.
pub fn build_hbar(e: &StateEnsemble, private: &[Option<usize>], opts: &HierarchyOptions) -> Result<Relaxation> {
    check_level(opts)?;
    let s = e.scenario();
    require_finite(s)?;
    check_private(s, private)?;
    let ids: Vec<usize> = (0..s.sets().len()).collect();
    finish_sets(s, hbar_blocks(s, private, opts.level), &ids, Data::States(e.states()), opts)
}

pub fn build_hbar_energy(
    s: &MarginalScenario,
    private: &[Option<usize>],
    terms: &[ObjectiveTerm],
    opts: &HierarchyOptions,
) -> Result<Relaxation> {
    check_level(opts)?;
    require_finite(s)?;
    check_private(s, private)?;
    finish_sets(s, hbar_blocks(s, private, opts.level), &[], Data::Costs(terms), opts)
}

/// Private site of each set of a star: its leaf.
pub fn star_private_sites(s: &MarginalScenario) -> Vec<Option<usize>> {
    let hub = s.sites()[0];
    s.sets().iter().map(|set| set.iter().copied().find(|&a| a != hub)).collect()
}

/// Open-chain test: 𝗛 on nearest-neighbour pairs.
pub fn build_line(e: &StateEnsemble, opts: &HierarchyOptions) -> Result<Relaxation> {
    if e.scenario().kind() != ScenarioKind::Line {
        return Err(HierarchyError::WrongKind {
            expected: "line",
            got: e.scenario().kind(),
        });
    }
    build_h(e, opts)
}

/// 𝗛 on the maximal cliques of a chordal completion of the dependency graph,
/// each original set constrained through the clique containing it.
pub fn build_completed(e: &StateEnsemble, opts: &HierarchyOptions) -> Result<Relaxation> {
    check_level(opts)?;
    let s = e.scenario();
    require_finite(s)?;
    let c = chordal_complete(s)?;
    let blocks = blocks_for(s, &c.cliques, |_, _| opts.level);
    finish_sets(s, blocks, &c.clique_of_set, Data::States(e.states()), opts)
}

pub fn build_completed_energy(s: &MarginalScenario, terms: &[ObjectiveTerm], opts: &HierarchyOptions) -> Result<Relaxation> {
    check_level(opts)?;
    require_finite(s)?;
    let c = chordal_complete(s)?;
    let blocks = blocks_for(s, &c.cliques, |_, _| opts.level);
    finish_sets(s, blocks, &[], Data::Costs(terms), opts)
}

/// Closed-chain test on the fan completion `{1, j+1, j+2}`.
pub fn build_ring(e: &StateEnsemble, opts: &HierarchyOptions) -> Result<Relaxation> {
    if e.scenario().kind() != ScenarioKind::Ring {
        return Err(HierarchyError::WrongKind {
            expected: "ring",
            got: e.scenario().kind(),
        });
    }
    build_completed(e, opts)
}

fn uniform_dim(rho: &Operator) -> Result<usize> {
    let d = *rho.dims().first().ok_or_else(|| HierarchyError::ShapeMismatch("operator without subsystems".into()))?;
    if rho.dims().iter().any(|&x| x != d) {
        return Err(HierarchyError::ShapeMismatch(format!("non-uniform local dimensions {:?}", rho.dims())));
    }
    Ok(d)
}

fn window_block(n: usize, d: usize, level: usize) -> BlockSpec {
    BlockSpec {
        sites: (1..=n).map(|a| (a, d, level)).collect(),
    }
}

fn ti1d(k: usize, d: usize, target: Vec<TargetSpec>, real: bool, opts: &HierarchyOptions) -> Result<Relaxation> {
    let block = window_block(k, d, opts.level);
    let cuts = vec![block_cuts(&block.sites, opts)?];
    let extras = if k > 1 {
        vec![ExtraSpec::Shift {
            block: 0,
            a: vec![1],
            b: vec![k],
        }]
    } else {
        Vec::new()
    };
    assemble(Spec {
        level: opts.level,
        real,
        blocks: vec![block],
        targets: target,
        extras,
        cuts,
    })
}

/// Translation-invariant chain: is `ρ̂` on `k` consecutive sites the marginal
/// of a translation-invariant separable state?
pub fn build_ti1d(rho: &Operator, opts: &HierarchyOptions) -> Result<Relaxation> {
    check_level(opts)?;
    let d = uniform_dim(rho)?;
    let k = rho.dims().len();
    let real = resolve_real(opts, &[rho])?;
    let target = vec![TargetSpec {
        block: 0,
        set: (1..=k).collect(),
        data: TargetData::State(rho.clone()),
    }];
    ti1d(k, d, target, real, opts)
}

/// Translation-invariant chain relaxation of `min Σ tr(h ρ_set)` over a window of `k` sites.
pub fn build_ti1d_energy(k: usize, d: usize, terms: &[ObjectiveTerm], opts: &HierarchyOptions) -> Result<Relaxation> {
    check_level(opts)?;
    let ops: Vec<&Operator> = terms.iter().map(|t| &t.op).collect();
    let real = resolve_real(opts, &ops)?;
    let targets = terms
        .iter()
        .map(|t| {
            if t.set.is_empty() || t.set.iter().any(|&a| a == 0 || a > k) || t.set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(HierarchyError::UnsupportedTerm(t.set.clone()));
            }
            Ok(TargetSpec {
                block: 0,
                set: t.set.clone(),
                data: TargetData::Cost(t.op.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ti1d(k, d, targets, real, opts)
}

/// Column swap `x = 1 <-> x = 2` on the `2 x l` plaquette, as a position permutation.
pub fn plaquette_swap(l: usize) -> Vec<usize> {
    (0..2 * l).map(|p| p ^ 1).collect()
}

fn symmetry_defect(rho: &Operator, perm: &[usize]) -> Result<f64> {
    let moved = permute_subsystems(rho, perm)?;
    let scale = rho.matrix().max_abs().max(1.0);
    Ok((moved.matrix() - rho.matrix()).max_abs() / scale)
}

/// Two-dimensional translation invariance with a vertical reflection
/// symmetry, tested on a `2 x l` plaquette. Site `(x, y)` sits at position
/// `2 (y - 1) + (x - 1)`.
pub fn build_ti2d_reflect(rho: &Operator, l: usize, opts: &HierarchyOptions) -> Result<Relaxation> {
    check_level(opts)?;
    let d = uniform_dim(rho)?;
    if rho.dims().len() != 2 * l {
        return Err(HierarchyError::ShapeMismatch(format!("{} sites for a 2 x {l} plaquette", rho.dims().len())));
    }
    let swap = plaquette_swap(l);
    let defect = symmetry_defect(rho, &swap)?;
    if defect > 1e-10 {
        return Err(HierarchyError::NotReflectionSymmetric(defect));
    }
    let real = resolve_real(opts, &[rho])?;
    let block = window_block(2 * l, d, opts.level);
    let cuts = vec![block_cuts(&block.sites, opts)?];
    let mut extras = vec![ExtraSpec::Symmetry { block: 0, perm: swap }];
    if l > 1 {
        extras.push(ExtraSpec::Shift {
            block: 0,
            a: vec![1, 2],
            b: vec![2 * l - 1, 2 * l],
        });
    }
    assemble(Spec {
        level: opts.level,
        real,
        blocks: vec![block],
        targets: vec![TargetSpec {
            block: 0,
            set: (1..=2 * l).collect(),
            data: TargetData::State(rho.clone()),
        }],
        extras,
        cuts,
    })
}

#[derive(Clone, Debug)]
pub enum PlaquetteVerdict {
    Feasible,
    /// Some axis reflection changes the state (defect in max-abs entries).
    Asymmetric { axis: usize, defect: f64 },
    Infeasible(Box<Witness>),
    Inconclusive,
}

/// Reflection of axis `axis` on the `{1,2}^D` plaquette; site `s` has
/// coordinate bit `axis` equal to `(s >> axis) & 1`.
pub fn axis_reflection(dims: usize, axis: usize) -> Vec<usize> {
    (0..1usize << dims).map(|s| s ^ (1 << axis)).collect()
}

/// Trivial-plaquette test: reflection symmetry on every axis, then a
/// full-separability test at level `L` on the single set of all sites.
pub fn plaquette_trivial_test(rho: &Operator, dims: usize, opts: &HierarchyOptions, sdp_opts: &SdpOptions) -> Result<PlaquetteVerdict> {
    let n = 1usize << dims;
    if rho.dims().len() != n {
        return Err(HierarchyError::ShapeMismatch(format!("{} sites for a {dims}-dimensional plaquette", rho.dims().len())));
    }
    for axis in 0..dims {
        let defect = symmetry_defect(rho, &axis_reflection(dims, axis))?;
        if defect > 1e-10 {
            return Ok(PlaquetteVerdict::Asymmetric { axis, defect });
        }
    }
    let s = MarginalScenario::custom(
        rho.dims().iter().enumerate().map(|(i, &d)| (i + 1, d)).collect(),
        vec![(1..=n).collect()],
    )?;
    let e = StateEnsemble::new(s, vec![rho.clone()])?;
    let relax = build_h(&e, opts)?;
    Ok(match check(&relax, sdp_opts)?.verdict {
        Verdict::Feasible => PlaquetteVerdict::Feasible,
        Verdict::Infeasible(w) => PlaquetteVerdict::Infeasible(w),
        Verdict::Inconclusive => PlaquetteVerdict::Inconclusive,
    })
}

/// Builder selector shared by the energy and feasibility front ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HierarchyKind {
    H,
    Hbar,
    Line,
    Ring,
    /// 𝗛 on a chordal completion of any finite scenario.
    Completed,
    Ti1d,
    Ti2d,
}

impl FromStr for HierarchyKind {
    type Err = HierarchyError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "h" => Self::H,
            "hbar" => Self::Hbar,
            "line" => Self::Line,
            "ring" => Self::Ring,
            "completed" => Self::Completed,
            "ti1d" => Self::Ti1d,
            "ti2d" => Self::Ti2d,
            other => return Err(HierarchyError::Invalid(format!("unknown hierarchy {other:?}"))),
        })
    }
}

impl fmt::Display for HierarchyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::H => "h",
            Self::Hbar => "hbar",
            Self::Line => "line",
            Self::Ring => "ring",
            Self::Completed => "completed",
            Self::Ti1d => "ti1d",
            Self::Ti2d => "ti2d",
        };
        f.write_str(s)
    }
}

/// For each set, its largest site occurring in no other set.
pub fn auto_private_sites(s: &MarginalScenario) -> Vec<Option<usize>> {
    let sets = s.sets();
    sets.iter()
        .enumerate()
        .map(|(k, set)| {
            set.iter()
                .rev()
                .copied()
                .find(|a| sets.iter().enumerate().all(|(j, other)| j == k || !other.contains(a)))
        })
        .collect()
}

fn single_state(e: &StateEnsemble) -> Result<&Operator> {
    match e.states() {
        [rho] => Ok(rho),
        st => Err(HierarchyError::ShapeMismatch(format!("{} states for a single-window scenario", st.len()))),
    }
}

/// Feasibility relaxation of `e` with the chosen builder.
pub fn build(kind: HierarchyKind, e: &StateEnsemble, opts: &HierarchyOptions) -> Result<Relaxation> {
    let s = e.scenario();
    match kind {
        HierarchyKind::H => build_h(e, opts),
        HierarchyKind::Hbar => build_hbar(e, &auto_private_sites(s), opts),
        HierarchyKind::Line => build_line(e, opts),
        HierarchyKind::Ring => build_ring(e, opts),
        HierarchyKind::Completed => build_completed(e, opts),
        HierarchyKind::Ti1d => match s.kind() {
            ScenarioKind::Ti1d { .. } => build_ti1d(single_state(e)?, opts),
            got => Err(HierarchyError::WrongKind { expected: "ti1d", got }),
        },
        HierarchyKind::Ti2d => match s.kind() {
            ScenarioKind::Ti2dReflect { l } => build_ti2d_reflect(single_state(e)?, l, opts),
            got => Err(HierarchyError::WrongKind { expected: "ti2d_reflect", got }),
        },
    }
}

/// Energy relaxation `min Σ tr(h_I ρ_I)` with the chosen builder.
pub fn build_energy(kind: HierarchyKind, s: &MarginalScenario, terms: &[ObjectiveTerm], opts: &HierarchyOptions) -> Result<Relaxation> {
    let expect = |expected: &'static str, want: ScenarioKind| {
        if s.kind() == want {
            Ok(())
        } else {
            Err(HierarchyError::WrongKind { expected, got: s.kind() })
        }
    };
    match kind {
        HierarchyKind::H => build_h_energy(s, terms, opts),
        HierarchyKind::Hbar => build_hbar_energy(s, &auto_private_sites(s), terms, opts),
        HierarchyKind::Line => {
            expect("line", ScenarioKind::Line)?;
            build_h_energy(s, terms, opts)
        }
        HierarchyKind::Ring => {
            expect("ring", ScenarioKind::Ring)?;
            build_completed_energy(s, terms, opts)
        }
        HierarchyKind::Completed => build_completed_energy(s, terms, opts),
        HierarchyKind::Ti1d => match s.kind() {
            ScenarioKind::Ti1d { k } => build_ti1d_energy(k, s.dims()[0], terms, opts),
            got => Err(HierarchyError::WrongKind { expected: "ti1d", got }),
        },
        HierarchyKind::Ti2d => Err(HierarchyError::Invalid("energy minimisation is not available for the 2D reflection hierarchy".into())),
    }
}
