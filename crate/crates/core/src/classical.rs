//! Classical marginal problem: discrete distributions, local compatibility,
//! gluing along a running-intersection order, and brute-force global
//! extension as a linear program.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenarios::running_intersection_holds;
use crate::sdp::{self, extract_farkas, EqRow, LmiBlock, SdpError, SdpInstance, SdpOptions, SdpStatus, SparseSym};

/// Tolerance on normalisation of a distribution.
pub const NORM_TOL: f64 = 1e-12;
/// Tolerance on overlap agreement.
pub const COMPAT_TOL: f64 = 1e-10;
/// Largest joint table accepted by the brute-force extension test.
pub const MAX_JOINT: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum ClassicalError {
    #[error("site {0} is not a variable of the distribution")]
    BadIndex(usize),
    #[error("site {label} has alphabet {a} in one distribution and {b} in another")]
    AlphabetMismatch { label: usize, a: usize, b: usize },
    #[error("invalid distribution: {0}")]
    NotDistribution(String),
    #[error("cliques are not in running-intersection order")]
    NotRunningIntersection,
    #[error("marginals disagree on an overlap by {0:e}")]
    Incompatible(f64),
    #[error("joint table of {0} outcomes exceeds the brute-force budget")]
    TooLarge(usize),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

pub type Result<T> = std::result::Result<T, ClassicalError>;

/// Probability table over labelled variables; the first variable is the
/// slowest-varying index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    vars: Vec<(usize, usize)>,
    table: Vec<f64>,
}

fn table_len(vars: &[(usize, usize)]) -> usize {
    vars.iter().map(|v| v.1).product()
}

/// Flat index of the outcome `digits` (aligned with `vars`).
fn flat(vars: &[(usize, usize)], digits: impl Iterator<Item = usize>) -> usize {
    vars.iter().zip(digits).fold(0, |acc, (v, d)| acc * v.1 + d)
}

/// Visit every joint outcome in table order.
fn for_each_outcome(vars: &[(usize, usize)], mut f: impl FnMut(usize, &[usize])) {
    let mut digits = vec![0; vars.len()];
    for i in 0..table_len(vars) {
        f(i, &digits);
        for k in (0..vars.len()).rev() {
            digits[k] += 1;
            if digits[k] < vars[k].1 {
                break;
            }
            digits[k] = 0;
        }
    }
}

impl DiscreteDistribution {
    pub fn new(vars: Vec<(usize, usize)>, table: Vec<f64>) -> Result<Self> {
        let bad = |m: String| Err(ClassicalError::NotDistribution(m));
        let labels: BTreeSet<usize> = vars.iter().map(|v| v.0).collect();
        if labels.len() != vars.len() {
            return bad("repeated variable".into());
        }
        if vars.iter().any(|v| v.1 == 0) {
            return bad("empty alphabet".into());
        }
        if table.len() != table_len(&vars) {
            return bad(format!("table has {} entries for {} outcomes", table.len(), table_len(&vars)));
        }
        if let Some(p) = table.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return bad(format!("entry {p}"));
        }
        let total: f64 = table.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return bad(format!("total probability {total}"));
        }
        Ok(Self { vars, table })
    }

    pub fn uniform(vars: Vec<(usize, usize)>) -> Result<Self> {
        let n = table_len(&vars);
        Self::new(vars, vec![1.0 / n as f64; n])
    }

    /// All mass on one outcome.
    pub fn point(vars: Vec<(usize, usize)>, outcome: &[usize]) -> Result<Self> {
        let mut t = vec![0.0; table_len(&vars)];
        if outcome.len() != vars.len() || outcome.iter().zip(&vars).any(|(o, v)| *o >= v.1) {
            return Err(ClassicalError::NotDistribution(format!("outcome {outcome:?} out of range")));
        }
        t[flat(&vars, outcome.iter().copied())] = 1.0;
        Self::new(vars, t)
    }

    /// Independent joint distribution; variables of `a` first.
    pub fn product(a: &Self, b: &Self) -> Result<Self> {
        let mut vars = a.vars.clone();
        vars.extend_from_slice(&b.vars);
        let table = a.table.iter().flat_map(|p| b.table.iter().map(move |q| p * q)).collect();
        Self::new(vars, table)
    }

    pub fn vars(&self) -> &[(usize, usize)] {
        &self.vars
    }

    pub fn labels(&self) -> Vec<usize> {
        self.vars.iter().map(|v| v.0).collect()
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn alphabet(&self, label: usize) -> Option<usize> {
        self.vars.iter().find(|v| v.0 == label).map(|v| v.1)
    }

    /// Probability of an outcome listed in variable order.
    pub fn prob(&self, outcome: &[usize]) -> f64 {
        self.table[flat(&self.vars, outcome.iter().copied())]
    }

    fn position(&self, label: usize) -> Result<usize> {
        self.vars.iter().position(|v| v.0 == label).ok_or(ClassicalError::BadIndex(label))
    }

    /// Marginal on `keep`, variables in their original order.
    pub fn marginalize(&self, keep: &[usize]) -> Result<Self> {
        let mut pos: Vec<usize> = keep.iter().map(|&l| self.position(l)).collect::<Result<_>>()?;
        pos.sort_unstable();
        pos.dedup();
        let vars: Vec<(usize, usize)> = pos.iter().map(|&p| self.vars[p]).collect();
        let mut table = vec![0.0; table_len(&vars)];
        for_each_outcome(&self.vars, |i, d| {
            table[flat(&vars, pos.iter().map(|&p| d[p]))] += self.table[i];
        });
        Ok(Self { vars, table })
    }

    /// Same distribution with variables listed in `order`.
    pub fn reorder(&self, order: &[usize]) -> Result<Self> {
        let pos: Vec<usize> = order.iter().map(|&l| self.position(l)).collect::<Result<_>>()?;
        if pos.len() != self.vars.len() {
            return Err(ClassicalError::NotDistribution("reorder must list every variable".into()));
        }
        let vars: Vec<(usize, usize)> = pos.iter().map(|&p| self.vars[p]).collect();
        let mut table = vec![0.0; self.table.len()];
        for_each_outcome(&self.vars, |i, d| {
            table[flat(&vars, pos.iter().map(|&p| d[p]))] = self.table[i];
        });
        Ok(Self { vars, table })
    }

    /// Largest absolute difference between tables over the same variables
    /// (in any order).
    pub fn max_deviation(&self, other: &Self) -> Result<f64> {
        let o = other.reorder(&self.labels())?;
        Ok(self.table.iter().zip(&o.table).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

/// Result of a local-compatibility check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Compatibility {
    pub compatible: bool,
    pub max_deviation: f64,
}

fn check_alphabets(ps: &[DiscreteDistribution]) -> Result<()> {
    for (i, p) in ps.iter().enumerate() {
        for q in &ps[i + 1..] {
            for &(l, a) in &p.vars {
                if let Some(b) = q.alphabet(l) {
                    if a != b {
                        return Err(ClassicalError::AlphabetMismatch { label: l, a, b });
                    }
                }
            }
        }
    }
    Ok(())
}

/// Pairwise agreement of overlap marginals, within [`COMPAT_TOL`].
pub fn check_local_compat(ps: &[DiscreteDistribution]) -> Result<Compatibility> {
    check_alphabets(ps)?;
    let mut worst: f64 = 0.0;
    for (i, p) in ps.iter().enumerate() {
        for q in &ps[i + 1..] {
            let common: Vec<usize> = p.labels().into_iter().filter(|l| q.alphabet(*l).is_some()).collect();
            if common.is_empty() {
                continue;
            }
            worst = worst.max(p.marginalize(&common)?.max_deviation(&q.marginalize(&common)?)?);
        }
    }
    Ok(Compatibility {
        compatible: worst <= COMPAT_TOL,
        max_deviation: worst,
    })
}

/// Global distribution reproducing every marginal, built by gluing the
/// cliques in order: `p_{V ∪ I} = p_V p_I / p_Λ` with `Λ = V ∩ I` and
/// `0 / 0 = 0`. Variables appear in order of first occurrence.
pub fn glue_chordal(ps: &[DiscreteDistribution]) -> Result<DiscreteDistribution> {
    let Some(first) = ps.first() else {
        return Err(ClassicalError::NotDistribution("nothing to glue".into()));
    };
    let cliques: Vec<Vec<usize>> = ps.iter().map(|p| p.labels()).collect();
    if !running_intersection_holds(&cliques) {
        return Err(ClassicalError::NotRunningIntersection);
    }
    let compat = check_local_compat(ps)?;
    if !compat.compatible {
        return Err(ClassicalError::Incompatible(compat.max_deviation));
    }
    let mut glued = first.clone();
    for p in &ps[1..] {
        let sep: Vec<usize> = p.labels().into_iter().filter(|l| glued.alphabet(*l).is_some()).collect();
        let fresh: Vec<(usize, usize)> = p.vars.iter().copied().filter(|v| !sep.contains(&v.0)).collect();
        let p_sep = p.marginalize(&sep)?;
        let mut vars = glued.vars.clone();
        vars.extend_from_slice(&fresh);
        let sep_pos: Vec<usize> = p_sep.vars.iter().map(|v| vars.iter().position(|w| w.0 == v.0).expect("separator var")).collect();
        let p_pos: Vec<usize> = p.vars.iter().map(|v| vars.iter().position(|w| w.0 == v.0).expect("clique var")).collect();
        let nv = glued.vars.len();
        let mut table = vec![0.0; table_len(&vars)];
        for_each_outcome(&vars, |i, d| {
            let den = p_sep.table[flat(&p_sep.vars, sep_pos.iter().map(|&k| d[k]))];
            if den > 0.0 {
                let pv = glued.table[flat(&glued.vars, d[..nv].iter().copied())];
                let pi = p.table[flat(&p.vars, p_pos.iter().map(|&k| d[k]))];
                table[i] = pv * pi / den;
            }
        });
        let total: f64 = table.iter().sum();
        table.iter_mut().for_each(|x| *x /= total);
        glued = DiscreteDistribution { vars, table };
    }
    Ok(glued)
}

/// Outcome of the brute-force extension LP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Extension {
    /// A global table reproducing every marginal.
    Exists(DiscreteDistribution),
    /// Farkas certificate: weights `y` on the marginal entries (in input
    /// order, table order within each) with `Σ y p_I > 0` but `Σ y ≤ 0` on every
    /// deterministic global assignment.
    None { weights: Vec<Vec<f64>> },
    Inconclusive(SdpStatus),
}

/// Linear-programming test for a global distribution over all variables
/// with the given marginals.
pub fn has_global_extension_bruteforce(ps: &[DiscreteDistribution], opts: &SdpOptions) -> Result<Extension> {
    check_alphabets(ps)?;
    let mut vars: Vec<(usize, usize)> = Vec::new();
    for p in ps {
        for v in &p.vars {
            if !vars.iter().any(|w| w.0 == v.0) {
                vars.push(*v);
            }
        }
    }
    vars.sort_unstable();
    let n = table_len(&vars);
    if n > MAX_JOINT || vars.is_empty() {
        return Err(ClassicalError::TooLarge(n));
    }
    let mut inst = SdpInstance::new(n);
    inst.blocks = (0..n)
        .map(|i| {
            let mut b = LmiBlock::new(1);
            b.add_term(i, SparseSym::from_entries(1, [(0, 0, 1.0)]));
            b
        })
        .collect();
    let mut offsets = Vec::with_capacity(ps.len());
    for p in ps {
        offsets.push(inst.rows.len());
        let pos: Vec<usize> = p.vars.iter().map(|v| vars.iter().position(|w| w.0 == v.0).expect("collected")).collect();
        let mut rows: Vec<EqRow> = p.table.iter().map(|&rhs| EqRow { coeffs: Vec::new(), rhs }).collect();
        for_each_outcome(&vars, |i, d| {
            rows[flat(&p.vars, pos.iter().map(|&k| d[k]))].coeffs.push((i, 1.0));
        });
        inst.rows.extend(rows);
    }
    let sol = sdp::solve(&inst, opts)?;
    Ok(match sol.status {
        SdpStatus::Optimal => {
            let mut table: Vec<f64> = sol.x.iter().map(|x| x.max(0.0)).collect();
            let total: f64 = table.iter().sum();
            table.iter_mut().for_each(|x| *x /= total);
            Extension::Exists(DiscreteDistribution { vars, table })
        }
        SdpStatus::PrimalInfeasible => {
            let ray = extract_farkas(&sol, &inst)?;
            if ray.check(&inst).holds(10.0 * opts.tol) {
                let weights = ps
                    .iter()
                    .zip(&offsets)
                    .map(|(p, &o)| ray.y[o..o + p.table.len()].to_vec())
                    .collect();
                Extension::None { weights }
            } else {
                Extension::Inconclusive(sol.status)
            }
        }
        s => Extension::Inconclusive(s),
    })
}

/// Local translation invariance of a window: the marginal on the first
/// `k - 1` sites equals the one on the last `k - 1`, within [`COMPAT_TOL`].
pub fn check_lti_1d(p: &DiscreteDistribution) -> bool {
    let k = p.vars.len();
    if k <= 1 {
        return true;
    }
    if p.vars.iter().any(|v| v.1 != p.vars[0].1) {
        return false;
    }
    let labels = p.labels();
    let left = p.marginalize(&labels[..k - 1]).expect("own labels");
    let right = p.marginalize(&labels[1..]).expect("own labels");
    left.table.iter().zip(&right.table).all(|(a, b)| (a - b).abs() <= COMPAT_TOL)
}

/// Pairwise perfectly anti-correlated bits on the triangle `{1,2}, {2,3}, {1,3}`:
/// locally compatible, with no global distribution.
pub fn triangle_anticorrelated() -> Vec<DiscreteDistribution> {
    [[1, 2], [2, 3], [1, 3]]
        .iter()
        .map(|s| DiscreteDistribution::new(vec![(s[0], 2), (s[1], 2)], vec![0.0, 0.5, 0.5, 0.0]).expect("normalised"))
        .collect()
}
