//! Homogeneous self-dual interior-point method with Nesterov-Todd scaling
//! and Mehrotra predictor-corrector steps.
//!
//! Internally the problem is written in conic form
//! `min c^T x  s.t.  A x = b,  G x + s = h,  s PSD` with `G x = -sum x_i F_i`
//! and `h = -F_0`. The Newton systems are reduced to the block-diagonal
//! matrix `H = G^T W^{-1} G W^{-1}` (one dense block per group of variables
//! sharing matrix inequalities) and the Schur complement `A H^{-1} A^T`,
//! which is factored in envelope form so chain-like constraint patterns
//! cost linear time.

use rayon::prelude::*;

use super::skyline::Skyline;
use super::{Result, SdpError, SdpInstance, SdpOptions, SdpSolution, SdpStatus};
use crate::linalg::{cholesky, cholesky_solve, jacobi_svd, sym_eigvals, RealMatrix};

type Mat = RealMatrix<f64>;

const STEP: f64 = 0.99;
const DEPENDENT_ROW_REL: f64 = 1e-10;
const SCHUR_REG: f64 = 1e-12;
const BACKTRACK: usize = 8;
const NEAR_OPTIMAL: f64 = 10.0;
const STALL_WINDOW: usize = 25;

struct Group {
    vars: Vec<usize>,
    blocks: Vec<usize>,
}

/// Variable grouping, retained rows and the Schur-complement envelope.
struct Layout {
    groups: Vec<Group>,
    /// Original index of each retained row.
    kept: Vec<usize>,
    /// Per retained row: `(group, local var, coefficient)`.
    row_terms: Vec<Vec<(usize, usize, f64)>>,
    /// Per group: retained rows touching it, ascending.
    group_rows: Vec<Vec<usize>>,
    first: Vec<usize>,
    /// Per block: `(local var, full coefficient entry list)`.
    block_terms: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    dropped: Vec<usize>,
}

enum Preprocessed {
    Ready(Layout),
    /// The equality system itself is inconsistent; carries a certificate `y`.
    Inconsistent(Vec<f64>),
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn merged_row(coeffs: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut c = coeffs.to_vec();
    c.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(c.len());
    for (i, a) in c {
        match out.last_mut() {
            Some(l) if l.0 == i => l.1 += a,
            _ => out.push((i, a)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

/// Leftmost envelope column of each row given which groups each row touches.
fn envelope(row_groups: &[Vec<usize>], num_groups: usize) -> Vec<usize> {
    let mut min_row = vec![usize::MAX; num_groups];
    let mut first = Vec::with_capacity(row_groups.len());
    for (i, gs) in row_groups.iter().enumerate() {
        let mut f = i;
        for &g in gs {
            if min_row[g] == usize::MAX {
                min_row[g] = i;
            }
            f = f.min(min_row[g]);
        }
        first.push(f);
    }
    first
}

impl Layout {
    fn build(inst: &SdpInstance, tol: f64) -> Result<Preprocessed> {
        let n = inst.num_vars;
        let mut parent: Vec<usize> = (0..n).collect();
        for blk in &inst.blocks {
            if let Some(&(v0, _)) = blk.terms.first() {
                for &(v, _) in &blk.terms[1..] {
                    let (a, b) = (find(&mut parent, v0), find(&mut parent, v));
                    if a != b {
                        parent[b] = a;
                    }
                }
            }
        }
        // groups numbered by first appearance over blocks
        let mut group_of_root = vec![usize::MAX; n];
        let mut groups: Vec<Group> = Vec::new();
        let mut var_loc = vec![(usize::MAX, 0); n];
        for (k, blk) in inst.blocks.iter().enumerate() {
            let Some(&(v0, _)) = blk.terms.first() else {
                continue;
            };
            let root = find(&mut parent, v0);
            if group_of_root[root] == usize::MAX {
                group_of_root[root] = groups.len();
                groups.push(Group {
                    vars: Vec::new(),
                    blocks: Vec::new(),
                });
            }
            groups[group_of_root[root]].blocks.push(k);
        }
        for v in 0..n {
            let root = find(&mut parent, v);
            let g = group_of_root[root];
            if g == usize::MAX {
                return Err(SdpError::IllFormed(format!("variable {v} appears in no matrix inequality")));
            }
            var_loc[v] = (g, groups[g].vars.len());
            groups[g].vars.push(v);
        }
        let block_terms = inst
            .blocks
            .iter()
            .map(|blk| {
                blk.terms
                    .iter()
                    .map(|(var, f)| {
                        let mut full = Vec::with_capacity(2 * f.entries().len());
                        for &(i, j, v) in f.entries() {
                            full.push((i, j, v));
                            if i != j {
                                full.push((j, i, v));
                            }
                        }
                        (var_loc[*var].1, full)
                    })
                    .collect()
            })
            .collect();

        // dependent rows: Cholesky of the Gram matrix in row order
        let rows: Vec<Vec<(usize, f64)>> = inst.rows.iter().map(|r| merged_row(&r.coeffs)).collect();
        let row_groups: Vec<Vec<usize>> = rows
            .iter()
            .map(|r| {
                let mut gs: Vec<usize> = r.iter().map(|&(v, _)| var_loc[v].0).collect();
                gs.sort_unstable();
                gs.dedup();
                gs
            })
            .collect();
        let first_all = envelope(&row_groups, groups.len());
        let mut gram = Skyline::new(first_all.clone());
        let mut by_var: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for &(v, a) in row {
                by_var[v].push((r, a));
            }
        }
        for list in &by_var {
            for (x, &(ri, ai)) in list.iter().enumerate() {
                for &(rj, aj) in &list[..=x] {
                    gram.add(ri, rj, ai * aj);
                }
            }
        }
        gram.factor(Some(DEPENDENT_ROW_REL)).expect("dependent-row pass cannot fail");
        let drop_mask = gram.dropped().to_vec();
        let b: Vec<f64> = inst.rows.iter().map(|r| r.rhs).collect();
        let bscale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        // beta = L^{-1} b over retained rows
        let mut beta = vec![0.0; rows.len()];
        for i in 0..rows.len() {
            let fi = gram.first(i);
            let dot: f64 = gram.row_multipliers(i).iter().zip(&beta[fi..i]).map(|(l, x)| l * x).sum();
            if drop_mask[i] {
                let resid = b[i] - dot;
                if resid.abs() > 10.0 * tol * bscale {
                    let mut alpha = vec![0.0; i];
                    alpha[fi..i].copy_from_slice(gram.row_multipliers(i));
                    gram.backward_prefix(&mut alpha, i);
                    let mut y = vec![0.0; rows.len()];
                    y[i] = 1.0 / resid;
                    for (yk, ak) in y.iter_mut().zip(&alpha) {
                        *yk = -ak / resid;
                    }
                    return Ok(Preprocessed::Inconsistent(y));
                }
                beta[i] = 0.0;
            } else {
                beta[i] = (b[i] - dot) / gram.get(i, i);
            }
        }

        let kept: Vec<usize> = (0..rows.len()).filter(|&i| !drop_mask[i]).collect();
        let dropped: Vec<usize> = (0..rows.len()).filter(|&i| drop_mask[i]).collect();
        let kept_groups: Vec<Vec<usize>> = kept.iter().map(|&i| row_groups[i].clone()).collect();
        let first = envelope(&kept_groups, groups.len());
        let mut group_rows = vec![Vec::new(); groups.len()];
        let mut row_terms = Vec::with_capacity(kept.len());
        for (j, &i) in kept.iter().enumerate() {
            for &g in &row_groups[i] {
                group_rows[g].push(j);
            }
            row_terms.push(
                rows[i]
                    .iter()
                    .map(|&(v, a)| (var_loc[v].0, var_loc[v].1, a))
                    .collect(),
            );
        }
        Ok(Preprocessed::Ready(Layout {
            groups,
            kept,
            row_terms,
            group_rows,
            first,
            block_terms,
            dropped,
        }))
    }
}

/// Nesterov-Todd scaling of one block: `R^{-1} S R^{-T} = R^T Z R = diag(lambda)`.
#[derive(Clone)]
struct Scaling {
    r: Mat,
    rinv: Mat,
    lambda: Vec<f64>,
}

impl Scaling {
    fn identity(n: usize) -> Self {
        Self {
            r: Mat::identity(n),
            rinv: Mat::identity(n),
            lambda: vec![1.0; n],
        }
    }

    /// Scaling for `s = Ls Ls^T`, `z = Lz Lz^T` given in the frame of `base`.
    fn from_factors(base: Option<&Scaling>, ls: &Mat, lz: &Mat) -> std::result::Result<Self, String> {
        let svd = jacobi_svd(&lz.tr_matmul(ls)).map_err(|e| e.to_string())?;
        let n = ls.rows();
        if svd.values.iter().any(|&v| !(v > 0.0)) {
            return Err("scaling lost definiteness".into());
        }
        let isq: Vec<f64> = svd.values.iter().map(|v| 1.0 / v.sqrt()).collect();
        // R = Ls V diag(isq), R^{-1} = diag(isq) U^T Lz^T
        let mut r = ls.matmul(&svd.v);
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] *= isq[j];
            }
        }
        let mut rinv = svd.u.tr_matmul(&lz.transpose());
        for i in 0..n {
            for j in 0..n {
                rinv[(i, j)] *= isq[i];
            }
        }
        let (r, rinv) = match base {
            Some(b) => (b.r.matmul(&r), rinv.matmul(&b.rinv)),
            None => (r, rinv),
        };
        Ok(Self {
            r,
            rinv,
            lambda: svd.values,
        })
    }

    fn new(s: &Mat, z: &Mat) -> std::result::Result<Self, String> {
        let ls = cholesky(s).map_err(|e| e.to_string())?;
        let lz = cholesky(z).map_err(|e| e.to_string())?;
        Self::from_factors(None, &ls, &lz)
    }

    /// `W^{-1} = R^{-T} R^{-1}`
    fn winv(&self) -> Mat {
        self.rinv.tr_matmul(&self.rinv)
    }

    /// `R diag(lambda) R^T`
    fn s(&self) -> Mat {
        congruence_diag(&self.r, &self.lambda, false)
    }

    /// `R^{-T} diag(lambda) R^{-1}`
    fn z(&self) -> Mat {
        congruence_diag(&self.rinv, &self.lambda, true)
    }
}

/// `M D M^T` (or `M^T D M` when `transposed`) for diagonal `D`.
fn congruence_diag(m: &Mat, d: &[f64], transposed: bool) -> Mat {
    let n = d.len();
    let base = if transposed { m.transpose() } else { m.clone() };
    let mut scaled = base.clone();
    for i in 0..n {
        for j in 0..n {
            scaled[(i, j)] *= d[j];
        }
    }
    let mut out = scaled.matmul_tr(&base);
    out.symmetrize();
    out
}

fn sandwich(a: &Mat, x: &Mat) -> Mat {
    let mut out = a.matmul(&x.matmul(a));
    out.symmetrize();
    out
}

struct Kkt {
    winv: Vec<Mat>,
    w: Vec<Mat>,
    hchol: Vec<Mat>,
    /// Per group: `H^{-1} a_r` for each row `r` in `group_rows`.
    hinv_at: Vec<Vec<Vec<f64>>>,
    schur: Skyline,
}

struct Problem<'a> {
    inst: &'a SdpInstance,
    layout: Layout,
    c: Vec<f64>,
    b: Vec<f64>,
    h: Vec<Mat>,
    opts: SdpOptions,
}

fn vdot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vnorm(a: &[f64]) -> f64 {
    vdot(a, a).sqrt()
}

fn mdot(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn mnorm(a: &[Mat]) -> f64 {
    mdot(a, a).sqrt()
}

fn axpy_v(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn axpy_m(y: &mut [Mat], a: f64, x: &[Mat]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        yi.axpy(a, xi);
    }
}

impl<'a> Problem<'a> {
    fn n(&self) -> usize {
        self.inst.num_vars
    }

    /// `G u = -sum u_i F_i`
    fn g_apply(&self, u: &[f64]) -> Vec<Mat> {
        self.inst
            .blocks
            .iter()
            .map(|blk| {
                let mut m = Mat::zeros(blk.dim, blk.dim);
                for (var, f) in &blk.terms {
                    f.add_to(&mut m, -u[*var]);
                }
                m
            })
            .collect()
    }

    fn gt_apply(&self, z: &[Mat]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (blk, zk) in self.inst.blocks.iter().zip(z) {
            for (var, f) in &blk.terms {
                out[*var] -= f.dot(zk);
            }
        }
        out
    }

    fn a_apply(&self, x: &[f64]) -> Vec<f64> {
        self.layout
            .row_terms
            .iter()
            .zip(&self.layout.kept)
            .map(|(_, &i)| self.inst.rows[i].eval(x))
            .collect()
    }

    fn at_apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (&i, &yr) in self.layout.kept.iter().zip(y) {
            for &(v, a) in &self.inst.rows[i].coeffs {
                out[v] += a * yr;
            }
        }
        out
    }

    fn factor(&self, scales: &[Scaling]) -> std::result::Result<Kkt, String> {
        let lay = &self.layout;
        let winv: Vec<Mat> = scales.par_iter().map(|s| s.winv()).collect();
        let w: Vec<Mat> = scales.par_iter().map(|s| s.r.matmul_tr(&s.r)).collect();
        let per_group: Vec<std::result::Result<(Mat, Vec<Vec<f64>>, Vec<(usize, usize, f64)>), String>> = lay
            .groups
            .par_iter()
            .enumerate()
            .map(|(g, grp)| {
                let m = grp.vars.len();
                let mut h = Mat::zeros(m, m);
                for &k in &grp.blocks {
                    let q = &winv[k];
                    let terms = &lay.block_terms[k];
                    for (ti, (li, fi)) in terms.iter().enumerate() {
                        for (lj, fj) in terms[ti..].iter().map(|(l, f)| (*l, f)) {
                            let mut acc = 0.0;
                            for &(a, b, v) in fi {
                                for &(c, d, wv) in fj {
                                    acc += v * wv * q[(b, c)] * q[(d, a)];
                                }
                            }
                            h[(*li, lj)] += acc;
                            if !std::ptr::eq(fi, fj) {
                                h[(lj, *li)] += acc;
                            }
                        }
                    }
                }
                let hl = match cholesky(&h) {
                    Ok(l) if well_conditioned(&l) => l,
                    _ => h_factor_qr(grp, lay, scales),
                };
                let rows = &lay.group_rows[g];
                let a_rows: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|&r| {
                        let mut v = vec![0.0; m];
                        for &(gg, l, a) in &lay.row_terms[r] {
                            if gg == g {
                                v[l] += a;
                            }
                        }
                        v
                    })
                    .collect();
                let x: Vec<Vec<f64>> = a_rows
                    .iter()
                    .map(|a| {
                        let mut v = a.clone();
                        cholesky_solve(&hl, &mut v);
                        v
                    })
                    .collect();
                let mut contrib = Vec::with_capacity(rows.len() * (rows.len() + 1) / 2);
                for (p, &rp) in rows.iter().enumerate() {
                    for (q2, &rq) in rows[..=p].iter().enumerate() {
                        contrib.push((rp, rq, vdot(&a_rows[p], &x[q2])));
                    }
                }
                Ok((hl, x, contrib))
            })
            .collect();
        let mut schur = Skyline::new(lay.first.clone());
        let mut hchol = Vec::with_capacity(per_group.len());
        let mut hinv_at = Vec::with_capacity(per_group.len());
        for res in per_group {
            let (hl, x, contrib) = res?;
            for (i, j, v) in contrib {
                schur.add(i, j, v);
            }
            hchol.push(hl);
            hinv_at.push(x);
        }
        // regularise only when the plain factorization breaks down
        let backup = schur.clone();
        if schur.factor(None).is_err() {
            schur = backup;
            schur.add_to_diag(SCHUR_REG * schur.max_diag().max(1.0));
            schur.factor(None).map_err(|row| format!("Schur complement not positive definite at row {row}"))?;
        }
        Ok(Kkt {
            winv,
            w,
            hchol,
            hinv_at,
            schur,
        })
    }

    fn hinv(&self, kkt: &Kkt, r: &[f64]) -> Vec<f64> {
        let lay = &self.layout;
        let mut out = vec![0.0; self.n()];
        for (g, grp) in lay.groups.iter().enumerate() {
            let mut v: Vec<f64> = grp.vars.iter().map(|&i| r[i]).collect();
            cholesky_solve(&kkt.hchol[g], &mut v);
            for (&i, x) in grp.vars.iter().zip(v) {
                out[i] = x;
            }
        }
        out
    }

    /// Solve `[0 A^T G^T; A 0 0; G 0 -W(.)W] [u; v; w] = [p1; p2; p3]`.
    fn solve_once(&self, kkt: &Kkt, p1: &[f64], p2: &[f64], p3: &[Mat]) -> (Vec<f64>, Vec<f64>, Vec<Mat>) {
        let t: Vec<Mat> = kkt.winv.iter().zip(p3).map(|(q, p)| sandwich(q, p)).collect();
        let mut r = p1.to_vec();
        axpy_v(&mut r, 1.0, &self.gt_apply(&t));
        let u0 = self.hinv(kkt, &r);
        let mut v = self.a_apply(&u0);
        axpy_v(&mut v, -1.0, p2);
        kkt.schur.solve(&mut v);
        let mut u = u0;
        let lay = &self.layout;
        for (g, grp) in lay.groups.iter().enumerate() {
            for (x, &row) in kkt.hinv_at[g].iter().zip(&lay.group_rows[g]) {
                let vr = v[row];
                if vr != 0.0 {
                    for (&i, xi) in grp.vars.iter().zip(x) {
                        u[i] -= vr * xi;
                    }
                }
            }
        }
        let mut gu = self.g_apply(&u);
        axpy_m(&mut gu, -1.0, p3);
        let w = kkt.winv.iter().zip(&gu).map(|(q, m)| sandwich(q, m)).collect();
        (u, v, w)
    }

    fn solve_k0(&self, kkt: &Kkt, p1: &[f64], p2: &[f64], p3: &[Mat]) -> (Vec<f64>, Vec<f64>, Vec<Mat>) {
        let (mut u, mut v, mut w) = self.solve_once(kkt, p1, p2, p3);
        for _ in 0..self.opts.refinement {
            let mut e1 = p1.to_vec();
            axpy_v(&mut e1, -1.0, &self.at_apply(&v));
            axpy_v(&mut e1, -1.0, &self.gt_apply(&w));
            let mut e2 = p2.to_vec();
            axpy_v(&mut e2, -1.0, &self.a_apply(&u));
            let gu = self.g_apply(&u);
            let e3: Vec<Mat> = p3
                .iter()
                .zip(&gu)
                .zip(kkt.w.iter().zip(&w))
                .map(|((p, g), (wk, wz))| {
                    let mut e = p - g;
                    e.axpy(1.0, &sandwich(wk, wz));
                    e
                })
                .collect();
            let (du, dv, dw) = self.solve_once(kkt, &e1, &e2, &e3);
            axpy_v(&mut u, 1.0, &du);
            axpy_v(&mut v, 1.0, &dv);
            axpy_m(&mut w, 1.0, &dw);
        }
        (u, v, w)
    }
}

/// Largest `t` with `diag(lambda) + t d` PSD, as `1/t` (0 when unbounded).
fn inv_max_step(lambda: &[f64], d: &Mat) -> f64 {
    let n = lambda.len();
    let isq: Vec<f64> = lambda.iter().map(|l| 1.0 / l.sqrt()).collect();
    let mut m = Mat::from_fn(n, n, |i, j| d[(i, j)] * isq[i] * isq[j]);
    m.symmetrize();
    let e = sym_eigvals(&m).map(|v| v[0]).unwrap_or(f64::NEG_INFINITY);
    (-e).max(0.0)
}

/// Diagonal of a Cholesky factor spread at most `1e4`, i.e. `cond(H)` not
/// obviously beyond `1e8`.
fn well_conditioned(l: &Mat) -> bool {
    let (lo, hi) = (0..l.rows()).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| (lo.min(l[(i, i)]), hi.max(l[(i, i)])));
    hi <= 1e4 * lo
}

/// Cholesky factor of `H` from a Householder QR of the scaled coefficient
/// matrix with columns `vec(R^{-1} F_i R^{-T})`, so that `H = G~^T G~` is
/// never formed.
fn h_factor_qr(grp: &Group, lay: &Layout, scales: &[Scaling]) -> Mat {
    let m = grp.vars.len();
    let nrows: usize = grp
        .blocks
        .iter()
        .map(|&k| {
            let d = scales[k].lambda.len();
            d * (d + 1) / 2
        })
        .sum();
    let mut cols = vec![vec![0.0; nrows]; m];
    let mut off = 0;
    for &k in &grp.blocks {
        let rinv = &scales[k].rinv;
        let d = rinv.rows();
        let packed: Vec<(usize, Vec<f64>)> = lay.block_terms[k]
            .par_iter()
            .map(|(l, full)| {
                let mut ft = Mat::zeros(d, d);
                for &(a, b, v) in full {
                    for i in 0..d {
                        let ria = rinv[(i, a)] * v;
                        if ria != 0.0 {
                            for j in i..d {
                                ft[(i, j)] += ria * rinv[(j, b)];
                            }
                        }
                    }
                }
                let mut col = Vec::with_capacity(d * (d + 1) / 2);
                for i in 0..d {
                    col.push(ft[(i, i)]);
                    for j in i + 1..d {
                        col.push(std::f64::consts::SQRT_2 * ft[(i, j)]);
                    }
                }
                (*l, col)
            })
            .collect();
        for (l, col) in packed {
            for (dst, v) in cols[l][off..].iter_mut().zip(col) {
                *dst += v;
            }
        }
        off += d * (d + 1) / 2;
    }
    let mut l = Mat::zeros(m, m);
    for k in 0..m.min(nrows) {
        let (head, tail) = cols.split_at_mut(k + 1);
        let ck = &mut head[k];
        let norm = ck[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if ck[k] > 0.0 { -norm } else { norm };
        ck[k] -= alpha;
        let v = &ck[k..];
        let vv: f64 = v.iter().map(|x| x * x).sum();
        tail.par_iter_mut().for_each(|c| {
            let s = 2.0 * vdot(v, &c[k..]) / vv;
            for (ci, vi) in c[k..].iter_mut().zip(v) {
                *ci -= s * vi;
            }
        });
        let sign = alpha.signum();
        l[(k, k)] = alpha.abs();
        for (j, c) in tail.iter().enumerate() {
            l[(k + 1 + j, k)] = sign * c[k];
        }
    }
    let maxd = (0..m).map(|i| l[(i, i)]).fold(0.0, f64::max);
    for i in 0..m {
        if !(l[(i, i)] > 1e-14 * maxd) {
            l[(i, i)] = (1e-14 * maxd).max(f64::MIN_POSITIVE);
        }
    }
    l
}

/// `lambda o\ u`: solves the Jordan product `(lambda u + u lambda)/2 = m`.
fn jordan_div(lambda: &[f64], m: &Mat) -> Mat {
    let n = lambda.len();
    Mat::from_fn(n, n, |i, j| 2.0 * m[(i, j)] / (lambda[i] + lambda[j]))
}

fn jordan_prod(a: &Mat, b: &Mat) -> Mat {
    let mut p = a.matmul(b);
    p.axpy(1.0, &b.matmul(a));
    p.scale(0.5)
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<Mat>,
    z: Vec<Mat>,
    tau: f64,
    kappa: f64,
}

#[derive(Clone)]
struct Metrics {
    gap: f64,
    relgap: f64,
    pres: f64,
    dres: f64,
    pinfres: Option<f64>,
    dinfres: Option<f64>,
    hz_by: f64,
    cx: f64,
}

impl Metrics {
    fn merit(&self) -> f64 {
        self.pres.max(self.dres).max(self.gap.min(self.relgap))
    }
}

/// Solve an instance; see the module documentation for the problem form.
pub fn solve(inst: &SdpInstance, opts: &SdpOptions) -> Result<SdpSolution> {
    inst.validate()?;
    let layout = match Layout::build(inst, opts.tol)? {
        Preprocessed::Ready(l) => l,
        Preprocessed::Inconsistent(y) => return Ok(inconsistent_solution(inst, y)),
    };
    let b: Vec<f64> = layout.kept.iter().map(|&i| inst.rows[i].rhs).collect();
    let h: Vec<Mat> = inst.blocks.iter().map(|blk| blk.constant.to_dense().scale(-1.0)).collect();
    let prob = Problem {
        inst,
        layout,
        c: inst.objective.clone(),
        b,
        h,
        opts: *opts,
    };
    run(&prob)
}

fn inconsistent_solution(inst: &SdpInstance, y: Vec<f64>) -> SdpSolution {
    let z: Vec<Mat> = inst.blocks.iter().map(|b| Mat::zeros(b.dim, b.dim)).collect();
    let residual = vnorm(&inst.dual_map(&y, &z));
    SdpSolution {
        status: SdpStatus::PrimalInfeasible,
        x: vec![0.0; inst.num_vars],
        blocks: Vec::new(),
        y,
        dual_blocks: z,
        primal_objective: f64::INFINITY,
        dual_objective: f64::INFINITY,
        gap: 0.0,
        primal_residual: f64::INFINITY,
        dual_residual: residual,
        iterations: 0,
        dropped_rows: Vec::new(),
    }
}

fn shift_into_cone(m: &mut [Mat]) {
    let nrm = mnorm(m);
    let t = m
        .iter()
        .map(|b| -sym_eigvals(b).map(|v| v[0]).unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    if t >= -1e-8 * nrm.max(1.0) {
        for b in m.iter_mut() {
            for i in 0..b.rows() {
                b[(i, i)] += 1.0 + t;
            }
        }
    }
}

fn run(prob: &Problem) -> Result<SdpSolution> {
    let inst = prob.inst;
    let n = inst.num_vars;
    let p = prob.b.len();
    let degree: usize = inst.blocks.iter().map(|b| b.dim).sum();
    let resx0 = vnorm(&prob.c).max(1.0);
    let resy0 = vnorm(&prob.b).max(1.0);
    let resz0 = mnorm(&prob.h).max(1.0);
    let tol = prob.opts.tol;

    let ident: Vec<Scaling> = inst.blocks.iter().map(|b| Scaling::identity(b.dim)).collect();
    let kkt0 = prob.factor(&ident).map_err(SdpError::NumericalBreakdown)?;
    let zero_m: Vec<Mat> = inst.blocks.iter().map(|b| Mat::zeros(b.dim, b.dim)).collect();
    let (x, _, w) = prob.solve_k0(&kkt0, &vec![0.0; n], &prob.b, &prob.h);
    let mut s: Vec<Mat> = w.iter().map(|m| m.scale(-1.0)).collect();
    let neg_c: Vec<f64> = prob.c.iter().map(|v| -v).collect();
    let (_, y, mut z) = prob.solve_k0(&kkt0, &neg_c, &vec![0.0; p], &zero_m);
    shift_into_cone(&mut s);
    shift_into_cone(&mut z);
    let mut it = Iterate {
        x,
        y,
        s,
        z,
        tau: 1.0,
        kappa: 1.0,
    };
    let mut scales: Vec<Scaling> = it
        .s
        .iter()
        .zip(&it.z)
        .map(|(s, z)| Scaling::new(s, z))
        .collect::<std::result::Result<_, _>>()
        .map_err(SdpError::NumericalBreakdown)?;

    let mut best: Option<(Metrics, Iterate)> = None;
    let mut last_improvement = 0;
    let mut iter = 0;
    loop {
        // residuals in the homogeneous embedding
        let mut hrx = prob.at_apply(&it.y);
        axpy_v(&mut hrx, 1.0, &prob.gt_apply(&it.z));
        hrx.iter_mut().for_each(|v| *v = -*v);
        let mut rx = hrx.clone();
        axpy_v(&mut rx, -it.tau, &prob.c);
        let hry = prob.a_apply(&it.x);
        let mut ry = hry.clone();
        axpy_v(&mut ry, -it.tau, &prob.b);
        let mut hrz = prob.g_apply(&it.x);
        axpy_m(&mut hrz, 1.0, &it.s);
        let mut rz = hrz.clone();
        axpy_m(&mut rz, -it.tau, &prob.h);
        let cx = vdot(&prob.c, &it.x);
        let by = vdot(&prob.b, &it.y);
        let hz = mdot(&prob.h, &it.z);
        let rt = it.kappa + cx + by + hz;
        let sz: f64 = scales.iter().flat_map(|s| s.lambda.iter()).map(|l| l * l).sum();

        let pcost = cx / it.tau;
        let dcost = -(by + hz) / it.tau;
        let gap = sz / (it.tau * it.tau);
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let met = Metrics {
            gap,
            relgap,
            pres: (vnorm(&ry) / it.tau / resy0).max(mnorm(&rz) / it.tau / resz0),
            dres: vnorm(&rx) / it.tau / resx0,
            pinfres: (hz + by < 0.0).then(|| vnorm(&hrx) / resx0 / (-hz - by)),
            dinfres: (cx < 0.0).then(|| (vnorm(&hry) / resy0).max(mnorm(&hrz) / resz0) / (-cx)),
            hz_by: hz + by,
            cx,
        };

        if met.pres <= tol && met.dres <= tol && (met.gap <= tol || met.relgap <= tol) {
            return Ok(finish(prob, &it, SdpStatus::Optimal, iter, &met));
        }
        if met.pinfres.is_some_and(|r| r <= tol) {
            return Ok(finish(prob, &it, SdpStatus::PrimalInfeasible, iter, &met));
        }
        if met.dinfres.is_some_and(|r| r <= tol) {
            return Ok(finish(prob, &it, SdpStatus::DualInfeasible, iter, &met));
        }
        let merit = met.merit();
        match &best {
            Some((m, _)) if merit >= 0.5 * m.merit() => {}
            _ => last_improvement = iter,
        }
        if best.as_ref().is_none_or(|(m, _)| merit < m.merit()) {
            best = Some((met.clone(), it.clone()));
        }
        if iter >= prob.opts.max_iter || iter - last_improvement >= STALL_WINDOW {
            return Ok(finish_best(prob, best, iter));
        }

        let kkt = match prob.factor(&scales) {
            Ok(k) => k,
            Err(_) => return Ok(finish_best(prob, best, iter)),
        };
        let neg_c: Vec<f64> = prob.c.iter().map(|v| -v).collect();
        let (u2x, u2y, u2z) = prob.solve_k0(&kkt, &neg_c, &prob.b, &prob.h);
        let c2 = vdot(&prob.c, &u2x) + vdot(&prob.b, &u2y) + mdot(&prob.h, &u2z);
        let mu = (sz + it.tau * it.kappa) / (degree as f64 + 1.0);

        let mut sigma = 0.0;
        let mut corr: Vec<Mat> = Vec::new();
        let mut corr_k = 0.0;
        let mut step = 0.0;
        let mut dir = None;
        for pass in 0..2 {
            let eta = 1.0 - sigma;
            let q: Vec<Mat> = scales
                .iter()
                .enumerate()
                .map(|(k, sc)| {
                    let m = sc.lambda.len();
                    let mut rhs = Mat::zeros(m, m);
                    for i in 0..m {
                        rhs[(i, i)] = sigma * mu - sc.lambda[i] * sc.lambda[i];
                    }
                    if pass == 1 {
                        rhs.axpy(-1.0, &corr[k]);
                    }
                    jordan_div(&sc.lambda, &rhs)
                })
                .collect();
            let rhs_k = -it.tau * it.kappa + sigma * mu - if pass == 1 { corr_k } else { 0.0 };
            let p1: Vec<f64> = rx.iter().map(|v| eta * v).collect();
            let p2: Vec<f64> = ry.iter().map(|v| -eta * v).collect();
            let p3: Vec<Mat> = rz
                .iter()
                .zip(scales.iter().zip(&q))
                .map(|(r, (sc, qk))| {
                    let mut m = r.scale(-eta);
                    m.axpy(-1.0, &sandwich_t(&sc.r, qk));
                    m
                })
                .collect();
            let (u1x, u1y, u1z) = prob.solve_k0(&kkt, &p1, &p2, &p3);
            let c1 = vdot(&prob.c, &u1x) + vdot(&prob.b, &u1y) + mdot(&prob.h, &u1z);
            let dtau = (eta * rt + c1 + rhs_k / it.tau) / (it.kappa / it.tau - c2);
            let mut dx = u1x;
            axpy_v(&mut dx, dtau, &u2x);
            let mut dy = u1y;
            axpy_v(&mut dy, dtau, &u2y);
            let mut dz = u1z;
            axpy_m(&mut dz, dtau, &u2z);
            let dkappa = (rhs_k - it.kappa * dtau) / it.tau;
            let dzh: Vec<Mat> = scales.iter().zip(&dz).map(|(sc, d)| sandwich_tr(&sc.r, d)).collect();
            let dsh: Vec<Mat> = q.iter().zip(&dzh).map(|(qk, d)| qk - d).collect();
            let mut t: f64 = 0.0;
            for (sc, (ds, dzk)) in scales.iter().zip(dsh.iter().zip(&dzh)) {
                t = t.max(inv_max_step(&sc.lambda, ds)).max(inv_max_step(&sc.lambda, dzk));
            }
            t = t.max(-dtau / it.tau).max(-dkappa / it.kappa);
            if pass == 0 {
                step = if t == 0.0 { 1.0 } else { (1.0 / t).min(1.0) };
                sigma = (1.0 - step).powi(3);
                corr = dsh.iter().zip(&dzh).map(|(a, b)| jordan_prod(a, b)).collect();
                corr_k = dtau * dkappa;
            } else {
                step = if t == 0.0 { 1.0 } else { (STEP / t).min(1.0) };
                dir = Some((dx, dy, dtau, dkappa, dsh, dzh));
            }
        }
        let (dx, dy, dtau, dkappa, dsh, dzh) = dir.expect("corrector pass ran");

        // update, backtracking when rounding breaks definiteness of the new scaling
        let mut new_scales = None;
        for _ in 0..BACKTRACK {
            match update_scales(&scales, &dsh, &dzh, step) {
                Ok(s) => {
                    new_scales = Some(s);
                    break;
                }
                Err(_) => step *= 0.5,
            }
        }
        let Some(new_scales) = new_scales else {
            return Ok(finish_best(prob, best, iter));
        };
        scales = new_scales;
        axpy_v(&mut it.x, step, &dx);
        axpy_v(&mut it.y, step, &dy);
        it.tau += step * dtau;
        it.kappa += step * dkappa;
        it.s = scales.iter().map(|s| s.s()).collect();
        it.z = scales.iter().map(|s| s.z()).collect();
        iter += 1;
        if !(it.tau > 0.0 && it.kappa > 0.0) {
            return Ok(finish_best(prob, best, iter));
        }
    }
}

fn update_scales(scales: &[Scaling], dsh: &[Mat], dzh: &[Mat], step: f64) -> std::result::Result<Vec<Scaling>, String> {
    let mut out = Vec::with_capacity(scales.len());
    for (sc, (ds, dzk)) in scales.iter().zip(dsh.iter().zip(dzh)) {
        let m = sc.lambda.len();
        let mut st = ds.scale(step);
        let mut zt = dzk.scale(step);
        for i in 0..m {
            st[(i, i)] += sc.lambda[i];
            zt[(i, i)] += sc.lambda[i];
        }
        st.symmetrize();
        zt.symmetrize();
        let ls = cholesky(&st).map_err(|e| e.to_string())?;
        let lz = cholesky(&zt).map_err(|e| e.to_string())?;
        out.push(Scaling::from_factors(Some(sc), &ls, &lz)?);
    }
    Ok(out)
}

/// `R q R^T`
fn sandwich_t(r: &Mat, q: &Mat) -> Mat {
    let mut out = r.matmul(&q.matmul_tr(r));
    out.symmetrize();
    out
}

/// `R^T d R`
fn sandwich_tr(r: &Mat, d: &Mat) -> Mat {
    let mut out = r.tr_matmul(&d.matmul(r));
    out.symmetrize();
    out
}

/// Best iterate seen; reported optimal when it is within `NEAR_OPTIMAL * tol`
/// on every criterion, as breakdown close to the solution is common.
fn finish_best(prob: &Problem, best: Option<(Metrics, Iterate)>, iter: usize) -> SdpSolution {
    let (met, it) = best.expect("at least one iterate is evaluated");
    let status = if met.merit() <= NEAR_OPTIMAL * prob.opts.tol {
        SdpStatus::Optimal
    } else {
        SdpStatus::MaxIter
    };
    let mut sol = finish(prob, &it, status, iter, &met);
    sol.iterations = iter;
    sol
}

/// Map internal multipliers on retained rows to public ones on all rows.
fn public_y(prob: &Problem, y: &[f64], scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; prob.inst.rows.len()];
    for (&i, &v) in prob.layout.kept.iter().zip(y) {
        out[i] = -v * scale;
    }
    out
}

fn finish(prob: &Problem, it: &Iterate, status: SdpStatus, iter: usize, met: &Metrics) -> SdpSolution {
    let inst = prob.inst;
    let dropped = prob.layout.dropped.clone();
    match status {
        SdpStatus::PrimalInfeasible => {
            let den = -met.hz_by;
            let y = public_y(prob, &it.y, 1.0 / den);
            let z: Vec<Mat> = it.z.iter().map(|m| m.scale(1.0 / den)).collect();
            let dres = vnorm(&inst.dual_map(&y, &z));
            SdpSolution {
                status,
                x: vec![0.0; inst.num_vars],
                blocks: Vec::new(),
                y,
                dual_blocks: z,
                primal_objective: f64::INFINITY,
                dual_objective: f64::INFINITY,
                gap: 0.0,
                primal_residual: f64::INFINITY,
                dual_residual: dres,
                iterations: iter,
                dropped_rows: dropped,
            }
        }
        SdpStatus::DualInfeasible => {
            let den = -met.cx;
            let x: Vec<f64> = it.x.iter().map(|v| v / den).collect();
            let blocks = inst
                .blocks
                .iter()
                .map(|blk| {
                    let mut m = blk.value(&x);
                    blk.constant.add_to(&mut m, 1.0);
                    m
                })
                .collect();
            SdpSolution {
                status,
                x,
                blocks,
                y: vec![0.0; inst.rows.len()],
                dual_blocks: Vec::new(),
                primal_objective: f64::NEG_INFINITY,
                dual_objective: f64::NEG_INFINITY,
                gap: 0.0,
                primal_residual: f64::INFINITY,
                dual_residual: f64::INFINITY,
                iterations: iter,
                dropped_rows: dropped,
            }
        }
        SdpStatus::Optimal | SdpStatus::MaxIter => {
            let tau = it.tau;
            let x: Vec<f64> = it.x.iter().map(|v| v / tau).collect();
            let y = public_y(prob, &it.y, 1.0 / tau);
            let z: Vec<Mat> = it.z.iter().map(|m| m.scale(1.0 / tau)).collect();
            let blocks: Vec<Mat> = inst.blocks.iter().map(|blk| blk.value(&x)).collect();
            let eq: Vec<f64> = inst.rows.iter().map(|r| r.eval(&x) - r.rhs).collect();
            let ball: Vec<f64> = inst.rows.iter().map(|r| r.rhs).collect();
            let cone: Vec<Mat> = blocks.iter().zip(&it.s).map(|(f, s)| f - &s.scale(1.0 / tau)).collect();
            let primal_residual = (vnorm(&eq) / vnorm(&ball).max(1.0)).max(mnorm(&cone) / mnorm(&prob.h).max(1.0));
            let mut dr = inst.dual_map(&y, &z);
            for (d, c) in dr.iter_mut().zip(&prob.c) {
                *d -= c;
            }
            let pobj = inst.objective_value(&x);
            let dobj = inst.dual_value(&y, &z);
            SdpSolution {
                status,
                x,
                blocks,
                y,
                dual_blocks: z,
                primal_objective: pobj,
                dual_objective: dobj,
                gap: (pobj - dobj).abs(),
                primal_residual,
                dual_residual: vnorm(&dr) / vnorm(&prob.c).max(1.0),
                iterations: iter,
                dropped_rows: dropped,
            }
        }
    }
}
