//! Primal standard form with PSD matrix variables:
//!
//! ```text
//! minimize    sum_b <C_b, X_b>
//! subject to  sum_b <A_{r,b}, X_b> = b_r,   X_b PSD
//! ```
//!
//! Each matrix variable is parametrised by its upper triangle, which turns
//! the problem into the LMI form solved by [`solve`](super::solve). The
//! dual slack comes back as `Z_b = C_b - sum_r y_r A_{r,b}`.

use serde::{Deserialize, Serialize};

use super::{EqRow, LmiBlock, Result, SdpError, SdpInstance, SdpSolution, SparseSym};
use crate::linalg::RealMatrix;

/// Symmetric entry: `value` at `(i, j)` and `(j, i)` of block `block`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StdEntry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

impl StdEntry {
    pub fn new(block: usize, i: usize, j: usize, value: f64) -> Self {
        Self { block, i, j, value }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StandardSdp {
    pub block_dims: Vec<usize>,
    pub objective: Vec<StdEntry>,
    pub constraints: Vec<(Vec<StdEntry>, f64)>,
}

impl StandardSdp {
    pub fn new(block_dims: Vec<usize>) -> Self {
        Self {
            block_dims,
            ..Self::default()
        }
    }

    pub fn add_constraint(&mut self, entries: Vec<StdEntry>, rhs: f64) {
        self.constraints.push((entries, rhs));
    }

    fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.block_dims.len() + 1);
        let mut acc = 0;
        for &d in &self.block_dims {
            off.push(acc);
            acc += d * (d + 1) / 2;
        }
        off.push(acc);
        off
    }

    fn var(&self, off: &[usize], e: &StdEntry) -> Result<(usize, f64)> {
        let d = *self
            .block_dims
            .get(e.block)
            .ok_or_else(|| SdpError::IllFormed(format!("block {} does not exist", e.block)))?;
        if e.i >= d || e.j >= d {
            return Err(SdpError::IllFormed(format!("entry ({}, {}) outside block {} of size {d}", e.i, e.j, e.block)));
        }
        let (i, j) = if e.i <= e.j { (e.i, e.j) } else { (e.j, e.i) };
        let idx = idx_upper(d, i, j);
        let weight = if i == j { 1.0 } else { 2.0 };
        Ok((off[e.block] + idx, weight * e.value))
    }

    pub fn to_instance(&self) -> Result<SdpInstance> {
        let off = self.offsets();
        let mut inst = SdpInstance::new(off[self.block_dims.len()]);
        for e in &self.objective {
            let (v, a) = self.var(&off, e)?;
            inst.objective[v] += a;
        }
        for (entries, rhs) in &self.constraints {
            let coeffs = entries.iter().map(|e| self.var(&off, e)).collect::<Result<Vec<_>>>()?;
            inst.rows.push(EqRow { coeffs, rhs: *rhs });
        }
        for (b, &d) in self.block_dims.iter().enumerate() {
            let mut blk = LmiBlock::new(d);
            for i in 0..d {
                for j in i..d {
                    blk.add_term(off[b] + idx_upper(d, i, j), SparseSym::from_entries(d, [(i, j, 1.0)]));
                }
            }
            inst.blocks.push(blk);
        }
        Ok(inst)
    }

    /// Matrix variables `X_b` read off an LMI-form solution vector.
    pub fn primal_blocks(&self, x: &[f64]) -> Vec<RealMatrix<f64>> {
        let off = self.offsets();
        self.block_dims
            .iter()
            .enumerate()
            .map(|(b, &d)| {
                let mut m = RealMatrix::zeros(d, d);
                for i in 0..d {
                    for j in i..d {
                        let v = x[off[b] + idx_upper(d, i, j)];
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
                m
            })
            .collect()
    }

    /// `sum_r y_r A_{r,b}` per block.
    pub fn adjoint(&self, y: &[f64]) -> Vec<RealMatrix<f64>> {
        let mut out: Vec<RealMatrix<f64>> = self.block_dims.iter().map(|&d| RealMatrix::zeros(d, d)).collect();
        for ((entries, _), &yr) in self.constraints.iter().zip(y) {
            for e in entries {
                out[e.block][(e.i, e.j)] += yr * e.value;
                if e.i != e.j {
                    out[e.block][(e.j, e.i)] += yr * e.value;
                }
            }
        }
        out
    }

    /// Dual slack `C_b - sum_r y_r A_{r,b}`.
    pub fn dual_slack(&self, y: &[f64]) -> Vec<RealMatrix<f64>> {
        let mut z = self.adjoint(y);
        for m in &mut z {
            *m = m.scale(-1.0);
        }
        for e in &self.objective {
            z[e.block][(e.i, e.j)] += e.value;
            if e.i != e.j {
                z[e.block][(e.j, e.i)] += e.value;
            }
        }
        z
    }

    /// Farkas matrices `-sum_r y_r A_{r,b}` for a ray from an infeasible solve.
    pub fn farkas_matrix(&self, sol: &SdpSolution) -> Vec<RealMatrix<f64>> {
        self.adjoint(&sol.y).into_iter().map(|m| m.scale(-1.0)).collect()
    }
}

/// Position of `(i, j)`, `i <= j`, in the row-major upper triangle of a `d x d` matrix.
fn idx_upper(d: usize, i: usize, j: usize) -> usize {
    i * d - i * (i + 1) / 2 + j
}
