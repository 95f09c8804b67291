//! Compressed tensor-product spaces `⊗_α H_sym(L_α, d_α)` and the real-linear
//! maps the hierarchy needs on them.
//!
//! A full basis state of site `α` with `L` copies is encoded as an integer
//! `t` in `0..d^L` whose base-`d` digits (most significant first) are the
//! copy values. Every map below has real coefficients in the computational
//! basis, so the image of a matrix unit `|a><b|` is a real matrix.

use std::collections::BTreeMap;

use crate::qops::{orbit_size, sym_dim, sym_multisets};

#[derive(Clone, Debug)]
pub(crate) struct SiteSpace {
    pub label: usize,
    pub d: usize,
    pub levels: usize,
    /// Full combos `t` in the orbit of each symmetric basis vector.
    pub orbits: Vec<Vec<usize>>,
    pub amp: Vec<f64>,
    /// `split[k][t]`: index and amplitude of `t` in `Sym(k) ⊗ Sym(L - k)`,
    /// the first `k` copies forming the first factor.
    pub split: Vec<Vec<(usize, f64)>>,
    pub split_dim: Vec<usize>,
}

fn rank_table(levels: usize, d: usize) -> BTreeMap<Vec<usize>, usize> {
    sym_multisets(levels, d).into_iter().enumerate().map(|(i, m)| (m, i)).collect()
}

fn digits(mut t: usize, d: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = t % d;
        t /= d;
    }
    out
}

impl SiteSpace {
    pub fn new(label: usize, d: usize, levels: usize) -> Self {
        let full = d.pow(levels as u32);
        let ranks: Vec<BTreeMap<Vec<usize>, usize>> = (0..=levels).map(|k| rank_table(k, d)).collect();
        let sym = sym_dim(levels, d);
        let mut orbits = vec![Vec::new(); sym];
        let mut amp = vec![0.0; sym];
        let mut split = vec![Vec::with_capacity(full); levels + 1];
        for t in 0..full {
            let dig = digits(t, d, levels);
            let mut sorted = dig.clone();
            sorted.sort_unstable();
            let idx = ranks[levels][&sorted];
            orbits[idx].push(t);
            amp[idx] = 1.0 / (orbit_size(&sorted) as f64).sqrt();
            for (k, table) in split.iter_mut().enumerate() {
                let mut head = dig[..k].to_vec();
                let mut tail = dig[k..].to_vec();
                head.sort_unstable();
                tail.sort_unstable();
                let i = ranks[k][&head] * sym_dim(levels - k, d) + ranks[levels - k][&tail];
                let w = 1.0 / ((orbit_size(&head) * orbit_size(&tail)) as f64).sqrt();
                table.push((i, w));
            }
        }
        let split_dim = (0..=levels).map(|k| sym_dim(k, d) * sym_dim(levels - k, d)).collect();
        Self {
            label,
            d,
            levels,
            orbits,
            amp,
            split,
            split_dim,
        }
    }

    pub fn sym(&self) -> usize {
        self.orbits.len()
    }

    fn tail_radix(&self, k: usize) -> usize {
        self.d.pow((self.levels - k) as u32)
    }

    pub fn first_digit(&self, t: usize) -> usize {
        t / self.tail_radix(1)
    }

    pub fn rest(&self, t: usize) -> usize {
        t % self.tail_radix(1)
    }

    /// Exchange the first `k` copies of `t` and `u`.
    pub fn swap_head(&self, t: usize, u: usize, k: usize) -> (usize, usize) {
        let r = self.tail_radix(k);
        (u / r * r + t % r, t / r * r + u % r)
    }
}

/// `⊗_α H_sym(L_α, d_α)` with sites in a fixed order.
#[derive(Clone, Debug)]
pub(crate) struct BlockSpace {
    pub sites: Vec<SiteSpace>,
    pub dim: usize,
}

impl BlockSpace {
    pub fn new(sites: Vec<SiteSpace>) -> Self {
        let dim = sites.iter().map(SiteSpace::sym).product();
        Self { sites, dim }
    }

    pub fn sym_dims(&self) -> Vec<usize> {
        self.sites.iter().map(SiteSpace::sym).collect()
    }

    pub fn position(&self, label: usize) -> Option<usize> {
        self.sites.iter().position(|s| s.label == label)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.label).collect()
    }

    pub fn decompose(&self, mut a: usize) -> Vec<usize> {
        let mut out = vec![0; self.sites.len()];
        for (k, s) in self.sites.iter().enumerate().rev() {
            out[k] = a % s.sym();
            a /= s.sym();
        }
        out
    }

    /// Full basis tuples spanning compressed basis vector `a`, with the common amplitude.
    fn orbit(&self, a: usize) -> (Vec<Vec<usize>>, f64) {
        let parts = self.decompose(a);
        let mut tuples = vec![Vec::with_capacity(self.sites.len())];
        let mut amp = 1.0;
        for (s, &p) in self.sites.iter().zip(&parts) {
            amp *= s.amp[p];
            let mut next = Vec::with_capacity(tuples.len() * s.orbits[p].len());
            for t in &tuples {
                for &o in &s.orbits[p] {
                    let mut u = t.clone();
                    u.push(o);
                    next.push(u);
                }
            }
            tuples = next;
        }
        (tuples, amp)
    }
}

/// Real-linear, Hermiticity-preserving map out of a block space.
pub(crate) trait BlockMap {
    fn out_dim(&self) -> usize;
    /// Entries `(i, j, v)` of the image of `|a><b|`, duplicates allowed.
    fn unit_image(&self, a: usize, b: usize, out: &mut Vec<(usize, usize, f64)>);
}

pub(crate) struct Identity(pub usize);

impl BlockMap for Identity {
    fn out_dim(&self) -> usize {
        self.0
    }

    fn unit_image(&self, a: usize, b: usize, out: &mut Vec<(usize, usize, f64)>) {
        out.push((a, b, 1.0));
    }
}

/// Trace copies `2..L` of every site and then every site not in `keep`.
pub(crate) struct CopyMarginal<'a> {
    pub space: &'a BlockSpace,
    pub keep: Vec<bool>,
}

impl BlockMap for CopyMarginal<'_> {
    fn out_dim(&self) -> usize {
        self.space.sites.iter().zip(&self.keep).filter(|(_, &k)| k).map(|(s, _)| s.d).product()
    }

    fn unit_image(&self, a: usize, b: usize, out: &mut Vec<(usize, usize, f64)>) {
        let (ra, wa) = self.space.orbit(a);
        let (rb, wb) = self.space.orbit(b);
        let w = wa * wb;
        for r in &ra {
            'pair: for q in &rb {
                let (mut i, mut j) = (0, 0);
                for (k, s) in self.space.sites.iter().enumerate() {
                    if self.keep[k] {
                        if s.rest(r[k]) != s.rest(q[k]) {
                            continue 'pair;
                        }
                        i = i * s.d + s.first_digit(r[k]);
                        j = j * s.d + s.first_digit(q[k]);
                    } else if r[k] != q[k] {
                        continue 'pair;
                    }
                }
                out.push((i, j, w));
            }
        }
    }
}

/// Partial transpose of the first `k[α]` copies of each site, compressed to
/// `⊗_α Sym(k_α) ⊗ Sym(L_α - k_α)`.
pub(crate) struct Cut<'a> {
    pub space: &'a BlockSpace,
    pub k: Vec<usize>,
}

impl BlockMap for Cut<'_> {
    fn out_dim(&self) -> usize {
        self.space.sites.iter().zip(&self.k).map(|(s, &k)| s.split_dim[k]).product()
    }

    fn unit_image(&self, a: usize, b: usize, out: &mut Vec<(usize, usize, f64)>) {
        let (ra, wa) = self.space.orbit(a);
        let (rb, wb) = self.space.orbit(b);
        for r in &ra {
            for q in &rb {
                let (mut i, mut j, mut w) = (0, 0, wa * wb);
                for (n, s) in self.space.sites.iter().enumerate() {
                    let k = self.k[n];
                    let (t, u) = s.swap_head(r[n], q[n], k);
                    let (ti, tw) = s.split[k][t];
                    let (ui, uw) = s.split[k][u];
                    i = i * s.split_dim[k] + ti;
                    j = j * s.split_dim[k] + ui;
                    w *= tw * uw;
                }
                out.push((i, j, w));
            }
        }
    }
}

/// Partial trace over whole sites in compressed coordinates.
pub(crate) struct SiteTrace {
    pub dims: Vec<usize>,
    pub keep: Vec<bool>,
}

impl SiteTrace {
    fn split(&self, mut a: usize) -> (usize, usize) {
        let (mut kept, mut traced, mut kr, mut tr) = (0, 0, 1, 1);
        for (n, &d) in self.dims.iter().enumerate().rev() {
            let v = a % d;
            a /= d;
            if self.keep[n] {
                kept += v * kr;
                kr *= d;
            } else {
                traced += v * tr;
                tr *= d;
            }
        }
        (kept, traced)
    }
}

impl BlockMap for SiteTrace {
    fn out_dim(&self) -> usize {
        self.dims.iter().zip(&self.keep).filter(|(_, &k)| k).map(|(d, _)| d).product()
    }

    fn unit_image(&self, a: usize, b: usize, out: &mut Vec<(usize, usize, f64)>) {
        let (ka, ta) = self.split(a);
        let (kb, tb) = self.split(b);
        if ta == tb {
            out.push((ka, kb, 1.0));
        }
    }
}

/// `X - P X P^T` for the permutation `P` of equal-dimensional tensor factors
/// sending factor `n` to position `perm[n]`.
pub(crate) struct PermutationDefect {
    pub dims: Vec<usize>,
    pub perm: Vec<usize>,
}

impl PermutationDefect {
    pub fn apply(&self, a: usize) -> usize {
        let n = self.dims.len();
        let mut parts = vec![0; n];
        let mut rem = a;
        for k in (0..n).rev() {
            parts[k] = rem % self.dims[k];
            rem /= self.dims[k];
        }
        let mut moved = vec![0; n];
        for k in 0..n {
            moved[self.perm[k]] = parts[k];
        }
        moved.iter().zip(&self.dims).fold(0, |acc, (&v, &d)| acc * d + v)
    }
}

impl BlockMap for PermutationDefect {
    fn out_dim(&self) -> usize {
        self.dims.iter().product()
    }

    fn unit_image(&self, a: usize, b: usize, out: &mut Vec<(usize, usize, f64)>) {
        out.push((a, b, 1.0));
        out.push((self.apply(a), self.apply(b), -1.0));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum ParamKind {
    Diag,
    Re,
    Im,
}

/// Real parametrisation of a Hermitian (or, in real mode, symmetric) matrix:
/// diagonal entries, then real and imaginary parts of the upper triangle.
#[derive(Clone, Debug)]
pub(crate) struct HermParams {
    pub dim: usize,
    pub params: Vec<(usize, usize, ParamKind)>,
}

impl HermParams {
    pub fn new(dim: usize, real: bool) -> Self {
        let mut params = Vec::new();
        for a in 0..dim {
            for b in a..dim {
                if a == b {
                    params.push((a, a, ParamKind::Diag));
                } else {
                    params.push((a, b, ParamKind::Re));
                    if !real {
                        params.push((a, b, ParamKind::Im));
                    }
                }
            }
        }
        Self { dim, params }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    /// Matrix value of the parameter vector `x`.
    pub fn assemble(&self, x: &[f64]) -> Vec<Vec<(f64, f64)>> {
        let mut m = vec![vec![(0.0, 0.0); self.dim]; self.dim];
        for (&(a, b, kind), &v) in self.params.iter().zip(x) {
            match kind {
                ParamKind::Diag => m[a][a].0 = v,
                ParamKind::Re => {
                    m[a][b].0 = v;
                    m[b][a].0 = v;
                }
                ParamKind::Im => {
                    m[a][b].1 = v;
                    m[b][a].1 = -v;
                }
            }
        }
        m
    }
}

/// Upper-triangle entries `(i, j, re, im)` of a Hermitian image.
pub(crate) type Image = Vec<(usize, usize, f64, f64)>;

/// Images of every parameter's basis matrix under `map`.
pub(crate) fn images(map: &dyn BlockMap, params: &HermParams) -> Vec<Image> {
    let mut unit: Vec<(usize, usize, f64)> = Vec::new();
    let mut current = None;
    let mut out = Vec::with_capacity(params.len());
    let mut acc: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
    for &(a, b, kind) in &params.params {
        if current != Some((a, b)) {
            unit.clear();
            map.unit_image(a, b, &mut unit);
            current = Some((a, b));
        }
        acc.clear();
        for &(i, j, v) in unit.iter() {
            match kind {
                ParamKind::Diag => {
                    if i <= j {
                        acc.entry((i, j)).or_default().0 += v;
                    }
                }
                ParamKind::Re => {
                    let e = acc.entry((i.min(j), i.max(j))).or_default();
                    e.0 += if i == j { 2.0 * v } else { v };
                }
                ParamKind::Im => {
                    if i < j {
                        acc.entry((i, j)).or_default().1 += v;
                    } else if i > j {
                        acc.entry((j, i)).or_default().1 -= v;
                    }
                }
            }
        }
        out.push(
            acc.iter()
                .filter(|(_, &(re, im))| re != 0.0 || im != 0.0)
                .map(|(&(i, j), &(re, im))| (i, j, re, im))
                .collect(),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ComplexMatrix;
    use crate::qops::{partial_trace_dense, partial_transpose_dense, sym_isometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = ComplexMatrix<f64>;

    fn to_matrix(m: &[Vec<(f64, f64)>]) -> M {
        M::from_fn(m.len(), m.len(), |i, j| crate::linalg::C::new(m[i][j].0, m[i][j].1))
    }

    fn image_value(img: &[Image], x: &[f64], dim: usize) -> M {
        let mut out = M::zeros(dim, dim);
        for (terms, &v) in img.iter().zip(x) {
            for &(i, j, re, im) in terms {
                out[(i, j)] += crate::linalg::C::new(re * v, im * v);
                if i != j {
                    out[(j, i)] += crate::linalg::C::new(re * v, -im * v);
                }
            }
        }
        out
    }

    /// Two qubit sites with two copies each, plus a private qutrit.
    fn space() -> BlockSpace {
        BlockSpace::new(vec![SiteSpace::new(1, 2, 2), SiteSpace::new(2, 3, 1), SiteSpace::new(3, 2, 2)])
    }

    fn isometry() -> M {
        let v1 = sym_isometry::<f64>(2, 2).matrix;
        v1.kron(&M::identity(3)).kron(&v1)
    }

    fn random_params(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn copy_marginal_matches_dense_partial_trace() {
        let sp = space();
        let params = HermParams::new(sp.dim, false);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_params(params.len(), &mut rng);
        let rho = to_matrix(&params.assemble(&x));
        let full = isometry().matmul(&rho).matmul(&isometry().adjoint());
        // full order: site1 copy1, site1 copy2, site2, site3 copy1, site3 copy2
        let dense = partial_trace_dense(&full, &[2, 2, 3, 2, 2], &[0, 3]).unwrap();
        let map = CopyMarginal {
            space: &sp,
            keep: vec![true, false, true],
        };
        let got = image_value(&images(&map, &params), &x, map.out_dim());
        assert!((&got - &dense).max_abs() < 1e-12);
    }

    #[test]
    fn cut_matches_dense_partial_transpose() {
        let sp = space();
        let params = HermParams::new(sp.dim, false);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_params(params.len(), &mut rng);
        let rho = to_matrix(&params.assemble(&x));
        let v = isometry();
        let full = v.matmul(&rho).matmul(&v.adjoint());
        let dense = partial_transpose_dense(&full, &[2, 2, 3, 2, 2], &[0, 2, 3, 4]).unwrap();
        // compress with Sym(1)⊗Sym(1) on site 1, identity on site 2, Sym(2) on site 3
        let w = M::identity(4).kron(&M::identity(3)).kron(&sym_isometry::<f64>(2, 2).matrix);
        let expect = w.adjoint().matmul(&dense).matmul(&w);
        let map = Cut {
            space: &sp,
            k: vec![1, 1, 2],
        };
        let got = image_value(&images(&map, &params), &x, map.out_dim());
        assert!((&got - &expect).max_abs() < 1e-12);
        // the compression loses nothing: eigenvalues agree up to zero padding
        let ge = crate::linalg::herm_eig(&got).unwrap().values;
        let de = crate::linalg::herm_eig(&dense).unwrap().values;
        let nonzero = |v: &[f64]| -> Vec<f64> { v.iter().copied().filter(|e| e.abs() > 1e-9).collect() };
        let (a, b) = (nonzero(&ge), nonzero(&de));
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn site_trace_matches_dense() {
        let sp = space();
        let params = HermParams::new(sp.dim, true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_params(params.len(), &mut rng);
        let rho = to_matrix(&params.assemble(&x));
        let dense = partial_trace_dense(&rho, &sp.sym_dims(), &[0, 2]).unwrap();
        let map = SiteTrace {
            dims: sp.sym_dims(),
            keep: vec![true, false, true],
        };
        let got = image_value(&images(&map, &params), &x, map.out_dim());
        assert!((&got - &dense).max_abs() < 1e-12);
    }

    #[test]
    fn permutation_defect_vanishes_on_invariant_operators() {
        let dims = vec![3, 3];
        let map = PermutationDefect {
            dims: dims.clone(),
            perm: vec![1, 0],
        };
        let params = HermParams::new(9, false);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_params(params.len(), &mut rng);
        let rho = to_matrix(&params.assemble(&x));
        let swap = M::from_fn(9, 9, |i, j| {
            let v = if j == (i % 3) * 3 + i / 3 { 1.0 } else { 0.0 };
            crate::linalg::C::new(v, 0.0)
        });
        let sym = (&rho + &swap.matmul(&rho).matmul(&swap)).scale(0.5);
        let p = HermParams::new(9, false);
        let xs: Vec<f64> = p
            .params
            .iter()
            .map(|&(a, b, k)| match k {
                ParamKind::Diag | ParamKind::Re => sym[(a, b)].re,
                ParamKind::Im => sym[(a, b)].im,
            })
            .collect();
        let got = image_value(&images(&map, &params), &xs, 9);
        assert!(got.max_abs() < 1e-12);
        let defect = image_value(&images(&map, &params), &x, 9);
        assert!(defect.max_abs() > 1e-3);
    }
}
