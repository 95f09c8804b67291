//! Primal-dual interior-point solver for linear matrix inequalities.
//!
//! Problems are stated over a vector of free variables `x`:
//!
//! ```text
//! minimize    c^T x
//! subject to  A x = b
//!             F_k(x) = sum_i x_i F_{k,i} - F_{k,0}  is PSD for every block k
//! ```
//!
//! with real symmetric, sparse `F_{k,i}`. The dual is
//!
//! ```text
//! maximize    b^T y + sum_k <F_{k,0}, Z_k>
//! subject to  sum_k <F_{k,i}, Z_k> + (A^T y)_i = c_i,   Z_k PSD
//! ```
//!
//! A primal infeasibility certificate is a pair `(y, Z)` with `Z` PSD,
//! `sum_k <F_{k,i}, Z_k> + (A^T y)_i = 0` for all `i` and
//! `b^T y + sum_k <F_{k,0}, Z_k> > 0`. Problems in the usual primal standard
//! form (PSD matrix variables with trace constraints) are handled through
//! [`StandardSdp`].

mod dump;
mod ipm;
mod skyline;
mod standard;

pub use dump::write_sdpa;
pub use ipm::solve;
pub use standard::{StandardSdp, StdEntry};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{sym_eigvals, RealMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("ill-formed instance: {0}")]
    IllFormed(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("operation needs a primal infeasible solution, got {0:?}")]
    WrongStatus(SdpStatus),
}

pub type Result<T> = std::result::Result<T, SdpError>;

/// Sparse symmetric matrix stored by its upper triangle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseSym {
    dim: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    /// Entries `(i, j, v)` set both `(i, j)` and `(j, i)` to `v`; repeated
    /// positions are summed and zeros dropped.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut e: Vec<(usize, usize, f64)> = entries
            .into_iter()
            .map(|(i, j, v)| if i <= j { (i, j, v) } else { (j, i, v) })
            .collect();
        e.sort_by_key(|a| (a.0, a.1));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(e.len());
        for (i, j, v) in e {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => merged.push((i, j, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != 0.0);
        Self { dim, entries: merged }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `<self, m>` for a symmetric dense `m`.
    pub fn dot(&self, m: &RealMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * m[(i, i)] } else { v * (m[(i, j)] + m[(j, i)]) })
            .sum()
    }

    /// `m += s * self`
    pub fn add_to(&self, m: &mut RealMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += s * v;
            if i != j {
                m[(j, i)] += s * v;
            }
        }
    }

    pub fn to_dense(&self) -> RealMatrix<f64> {
        let mut m = RealMatrix::zeros(self.dim, self.dim);
        self.add_to(&mut m, 1.0);
        m
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum()
    }
}

/// One linear matrix inequality `sum_i x_i F_i - F_0 >= 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmiBlock {
    pub dim: usize,
    pub constant: SparseSym,
    pub terms: Vec<(usize, SparseSym)>,
}

impl LmiBlock {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            constant: SparseSym::new(dim),
            terms: Vec::new(),
        }
    }

    pub fn add_term(&mut self, var: usize, f: SparseSym) {
        if !f.is_empty() {
            self.terms.push((var, f));
        }
    }

    pub fn value(&self, x: &[f64]) -> RealMatrix<f64> {
        let mut m = RealMatrix::zeros(self.dim, self.dim);
        self.constant.add_to(&mut m, -1.0);
        for (var, f) in &self.terms {
            f.add_to(&mut m, x[*var]);
        }
        m
    }
}

/// Linear equality `sum coeffs * x = rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl EqRow {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, a)| a * x[i]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpInstance {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<EqRow>,
    pub blocks: Vec<LmiBlock>,
}

impl SdpInstance {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ill = |m: String| Err(SdpError::IllFormed(m));
        if self.objective.len() != self.num_vars {
            return ill(format!("objective has {} entries for {} variables", self.objective.len(), self.num_vars));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return ill("non-finite objective coefficient".into());
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return ill(format!("row {r} has a non-finite right-hand side"));
            }
            for &(i, a) in &row.coeffs {
                if i >= self.num_vars || !a.is_finite() {
                    return ill(format!("row {r} references variable {i} with coefficient {a}"));
                }
            }
        }
        let mut covered = vec![false; self.num_vars];
        for (k, blk) in self.blocks.iter().enumerate() {
            if blk.dim == 0 {
                return ill(format!("block {k} has dimension 0"));
            }
            let mats = std::iter::once(&blk.constant).chain(blk.terms.iter().map(|(_, f)| f));
            for f in mats {
                if f.dim != blk.dim {
                    return ill(format!("block {k}: {}-dimensional coefficient in a {}-dimensional block", f.dim, blk.dim));
                }
                if f.entries.iter().any(|&(i, j, v)| i >= blk.dim || j >= blk.dim || !v.is_finite()) {
                    return ill(format!("block {k}: coefficient entry out of range or non-finite"));
                }
            }
            for &(var, _) in &blk.terms {
                if var >= self.num_vars {
                    return ill(format!("block {k} references variable {var}"));
                }
                covered[var] = true;
            }
        }
        if let Some(v) = covered.iter().position(|c| !c) {
            return ill(format!("variable {v} appears in no matrix inequality"));
        }
        Ok(())
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim).collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// `(sum_k <F_{k,i}, Z_k> + (A^T y)_i)_i`
    pub fn dual_map(&self, y: &[f64], z: &[RealMatrix<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_vars];
        for (blk, zk) in self.blocks.iter().zip(z) {
            for (var, f) in &blk.terms {
                out[*var] += f.dot(zk);
            }
        }
        for (row, &yr) in self.rows.iter().zip(y) {
            for &(i, a) in &row.coeffs {
                out[i] += a * yr;
            }
        }
        out
    }

    /// `b^T y + sum_k <F_{k,0}, Z_k>`
    pub fn dual_value(&self, y: &[f64], z: &[RealMatrix<f64>]) -> f64 {
        let by: f64 = self.rows.iter().zip(y).map(|(r, y)| r.rhs * y).sum();
        let fz: f64 = self.blocks.iter().zip(z).map(|(b, z)| b.constant.dot(z)).sum();
        by + fz
    }

    pub fn objective_norm(&self) -> f64 {
        self.objective.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterative-refinement passes per linear solve.
    pub refinement: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            refinement: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIter,
}

/// Result of [`solve`].
///
/// For `Optimal` and `MaxIter`, `x`, `blocks` (`F_k(x)`), `y` and
/// `dual_blocks` (`Z_k`) are the final or best iterate. For
/// `PrimalInfeasible`, `y` and `dual_blocks` hold a Farkas certificate scaled
/// so that `b^T y + sum <F_0, Z> = 1`; for `DualInfeasible`, `x` is a
/// direction with `c^T x = -1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: Vec<f64>,
    pub blocks: Vec<RealMatrix<f64>>,
    pub y: Vec<f64>,
    pub dual_blocks: Vec<RealMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Equality rows found linearly dependent and left out of the solve.
    pub dropped_rows: Vec<usize>,
}

/// Dual improving ray certifying primal infeasibility.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FarkasRay {
    pub y: Vec<f64>,
    pub z: Vec<RealMatrix<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct FarkasCheck {
    /// `b^T y + sum <F_0, Z>`, positive for a valid ray.
    pub margin: f64,
    /// Euclidean norm of `sum <F_i, Z> + A^T y`.
    pub residual: f64,
    /// Smallest eigenvalue over the `Z` blocks.
    pub min_eig: f64,
}

impl FarkasCheck {
    /// Both Farkas conditions at tolerance `tol`, with the margin as unit.
    pub fn holds(&self, tol: f64) -> bool {
        self.margin > 0.0 && self.residual <= tol * self.margin && self.min_eig >= -tol * self.margin
    }
}

impl FarkasRay {
    pub fn check(&self, inst: &SdpInstance) -> FarkasCheck {
        let margin = inst.dual_value(&self.y, &self.z);
        let residual = inst.dual_map(&self.y, &self.z).iter().map(|v| v * v).sum::<f64>().sqrt();
        let min_eig = self
            .z
            .iter()
            .map(|z| sym_eigvals(z).map(|v| v[0]).unwrap_or(f64::NEG_INFINITY))
            .fold(f64::INFINITY, f64::min);
        FarkasCheck {
            margin,
            residual,
            min_eig: if self.z.is_empty() { 0.0 } else { min_eig },
        }
    }
}

pub fn extract_farkas(sol: &SdpSolution, inst: &SdpInstance) -> Result<FarkasRay> {
    if sol.status != SdpStatus::PrimalInfeasible {
        return Err(SdpError::WrongStatus(sol.status));
    }
    let ray = FarkasRay {
        y: sol.y.clone(),
        z: sol.dual_blocks.clone(),
    };
    let margin = inst.dual_value(&ray.y, &ray.z);
    if !(margin > 0.0) {
        return Err(SdpError::NumericalBreakdown(format!("certificate margin {margin:e} is not positive")));
    }
    Ok(FarkasRay {
        y: ray.y.iter().map(|v| v / margin).collect(),
        z: ray.z.iter().map(|z| z.scale(1.0 / margin)).collect(),
    })
}
