//! Operators on multipartite Hilbert spaces.
//!
//! Subsystem indices are zero-based positions in the operator's shape. The
//! first factor of a tensor product is the slowest-varying index.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, hermitian_tol, ComplexMatrix, LinalgError, Real, C};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QopsError {
    #[error("subsystem index {index} out of range for {count} subsystems")]
    BadIndex { index: usize, count: usize },
    #[error("repeated subsystem index {0}")]
    RepeatedIndex(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, QopsError>;

/// Ordered local dimensions of a tensor-product space.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsystemShape {
    dims: Vec<usize>,
}

impl SubsystemShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(QopsError::ShapeMismatch(format!("subsystem {pos} has dimension 0")));
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Dimension of the full space.
    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            dims: idx.iter().map(|&i| self.dims[i]).collect(),
        }
    }
}

/// Hermitian matrix tagged with the subsystem structure it acts on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HermitianOperator<T> {
    shape: SubsystemShape,
    matrix: ComplexMatrix<T>,
}

impl<T: Real> HermitianOperator<T> {
    /// Validates squareness, dimension and Hermiticity (relative 1e-12).
    pub fn new(dims: Vec<usize>, matrix: ComplexMatrix<T>) -> Result<Self> {
        let shape = SubsystemShape::new(dims)?;
        check_dims(&matrix, shape.dims())?;
        matrix.check_hermitian(hermitian_tol())?;
        Ok(Self { shape, matrix })
    }

    /// Like [`new`](Self::new) but replaces the matrix by its Hermitian part
    /// once it passes a caller-chosen tolerance.
    pub fn new_with_tol(dims: Vec<usize>, matrix: ComplexMatrix<T>, rel_tol: T) -> Result<Self> {
        let shape = SubsystemShape::new(dims)?;
        check_dims(&matrix, shape.dims())?;
        matrix.check_hermitian(rel_tol)?;
        Ok(Self {
            shape,
            matrix: matrix.hermitian_part(),
        })
    }

    /// Skips the Hermiticity check; callers guarantee it by construction.
    pub(crate) fn from_parts(shape: SubsystemShape, matrix: ComplexMatrix<T>) -> Self {
        debug_assert_eq!(shape.total(), matrix.rows());
        Self { shape, matrix }
    }

    pub fn identity(dims: Vec<usize>) -> Result<Self> {
        let shape = SubsystemShape::new(dims)?;
        let n = shape.total();
        Ok(Self::from_parts(shape, ComplexMatrix::identity(n)))
    }

    pub fn maximally_mixed(dims: Vec<usize>) -> Result<Self> {
        let id = Self::identity(dims)?;
        let n = T::of_usize(id.dim());
        Ok(Self::from_parts(id.shape, id.matrix.scale(T::one() / n)))
    }

    /// `|psi><psi|` for a (not necessarily normalized) vector.
    pub fn pure(dims: Vec<usize>, psi: &[C<T>]) -> Result<Self> {
        let shape = SubsystemShape::new(dims)?;
        if shape.total() != psi.len() {
            return Err(QopsError::ShapeMismatch(format!(
                "vector of length {} for total dimension {}",
                psi.len(),
                shape.total()
            )));
        }
        Ok(Self::from_parts(shape, ComplexMatrix::outer(psi)))
    }

    pub fn shape(&self) -> &SubsystemShape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.matrix
    }

    pub fn trace(&self) -> T {
        self.matrix.trace().re
    }

    /// `Re tr(self * other)`, exact for Hermitian pairs.
    pub fn expectation(&self, other: &Self) -> T {
        self.matrix.trace_product(&other.matrix).re
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_parts(self.shape.clone(), self.matrix.scale(s))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(QopsError::ShapeMismatch(format!("{:?} vs {:?}", self.dims(), other.dims())));
        }
        Ok(Self::from_parts(self.shape.clone(), &self.matrix + &other.matrix))
    }

    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        Ok(linalg::herm_eig(&self.matrix)?.values)
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        Ok(self.eigenvalues()?.first().copied().unwrap_or(T::zero()))
    }

    pub fn cast<U: Real>(&self) -> HermitianOperator<U> {
        HermitianOperator {
            shape: self.shape.clone(),
            matrix: self.matrix.cast(),
        }
    }
}

fn check_dims<T: Real>(m: &ComplexMatrix<T>, dims: &[usize]) -> Result<()> {
    let total: usize = dims.iter().product();
    if m.rows() != total || m.cols() != total {
        return Err(QopsError::ShapeMismatch(format!(
            "{}x{} matrix for subsystem dims {dims:?}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

fn check_subset(idx: &[usize], count: usize) -> Result<Vec<bool>> {
    let mut mask = vec![false; count];
    for &i in idx {
        if i >= count {
            return Err(QopsError::BadIndex { index: i, count });
        }
        if mask[i] {
            return Err(QopsError::RepeatedIndex(i));
        }
        mask[i] = true;
    }
    Ok(mask)
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Flat offsets contributed by the subsystems in `subset` (given in
/// increasing order), enumerated row-major over those subsystems.
fn offsets(dims: &[usize], subset: &[usize]) -> Vec<usize> {
    let st = strides(dims);
    let mut out = vec![0usize];
    for &k in subset {
        let mut next = Vec::with_capacity(out.len() * dims[k]);
        for &o in &out {
            for a in 0..dims[k] {
                next.push(o + a * st[k]);
            }
        }
        out = next;
    }
    out
}

fn split(mask: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let on = (0..mask.len()).filter(|&i| mask[i]).collect();
    let off = (0..mask.len()).filter(|&i| !mask[i]).collect();
    (on, off)
}

/// Partial trace of a dense matrix, keeping the listed subsystems in their
/// original order.
pub fn partial_trace_dense<T: Real>(m: &ComplexMatrix<T>, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix<T>> {
    check_dims(m, dims)?;
    let mask = check_subset(keep, dims.len())?;
    let (kept, traced) = split(&mask);
    let ko = offsets(dims, &kept);
    let to = offsets(dims, &traced);
    let n = ko.len();
    let mut out = ComplexMatrix::zeros(n, n);
    for (i, &ri) in ko.iter().enumerate() {
        for (j, &cj) in ko.iter().enumerate() {
            let mut acc = C::new(T::zero(), T::zero());
            for &t in &to {
                acc += m[(ri + t, cj + t)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Transpose the listed tensor factors of a dense matrix.
pub fn partial_transpose_dense<T: Real>(
    m: &ComplexMatrix<T>,
    dims: &[usize],
    flip: &[usize],
) -> Result<ComplexMatrix<T>> {
    check_dims(m, dims)?;
    let mask = check_subset(flip, dims.len())?;
    let (flipped, other) = split(&mask);
    let fo = offsets(dims, &flipped);
    let uo = offsets(dims, &other);
    let mut out = ComplexMatrix::zeros(m.rows(), m.cols());
    for &f1 in &fo {
        for &f2 in &fo {
            for &u1 in &uo {
                for &u2 in &uo {
                    out[(f2 + u1, f1 + u2)] = m[(f1 + u1, f2 + u2)];
                }
            }
        }
    }
    Ok(out)
}

/// Reorder tensor factors: factor `perm[k]` of the input becomes factor `k`.
pub fn permute_dense<T: Real>(m: &ComplexMatrix<T>, dims: &[usize], perm: &[usize]) -> Result<ComplexMatrix<T>> {
    check_dims(m, dims)?;
    if perm.len() != dims.len() {
        return Err(QopsError::ShapeMismatch(format!(
            "permutation of length {} for {} subsystems",
            perm.len(),
            dims.len()
        )));
    }
    check_subset(perm, dims.len())?;
    let map = permutation_map(dims, perm);
    let n = m.rows();
    let mut out = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out[(map[r], map[c])] = m[(r, c)];
        }
    }
    Ok(out)
}

/// `map[old_flat] = new_flat` for a permutation of tensor factors.
pub(crate) fn permutation_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    let new_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let new_st = strides(&new_dims);
    // new stride seen from the old factor
    let mut st_of_old = vec![0; dims.len()];
    for (k, &p) in perm.iter().enumerate() {
        st_of_old[p] = new_st[k];
    }
    let total: usize = dims.iter().product();
    let mut map = vec![0; total];
    let mut digits = vec![0usize; dims.len()];
    for slot in map.iter_mut() {
        *slot = digits.iter().zip(&st_of_old).map(|(d, s)| d * s).sum();
        for k in (0..dims.len()).rev() {
            digits[k] += 1;
            if digits[k] < dims[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    map
}

pub fn kron<T: Real>(a: &HermitianOperator<T>, b: &HermitianOperator<T>) -> HermitianOperator<T> {
    let mut dims = a.dims().to_vec();
    dims.extend_from_slice(b.dims());
    HermitianOperator::from_parts(SubsystemShape { dims }, a.matrix.kron(&b.matrix))
}

pub fn partial_trace<T: Real>(m: &HermitianOperator<T>, keep: &[usize]) -> Result<HermitianOperator<T>> {
    let out = partial_trace_dense(&m.matrix, m.dims(), keep)?;
    let mut kept = keep.to_vec();
    kept.sort_unstable();
    Ok(HermitianOperator::from_parts(m.shape.select(&kept), out))
}

pub fn partial_transpose<T: Real>(m: &HermitianOperator<T>, flip: &[usize]) -> Result<HermitianOperator<T>> {
    let out = partial_transpose_dense(&m.matrix, m.dims(), flip)?;
    Ok(HermitianOperator::from_parts(m.shape.clone(), out))
}

pub fn permute_subsystems<T: Real>(m: &HermitianOperator<T>, perm: &[usize]) -> Result<HermitianOperator<T>> {
    let out = permute_dense(&m.matrix, m.dims(), perm)?;
    Ok(HermitianOperator::from_parts(m.shape.select(perm), out))
}

/// Dimension of the symmetric subspace of `(C^d)^{⊗L}`: `binomial(L + d - 1, d - 1)`.
pub fn sym_dim(levels: usize, d: usize) -> usize {
    assert!(d >= 1, "local dimension must be positive");
    let k = (d - 1).min(levels);
    let n = levels + d - 1;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    usize::try_from(acc).expect("symmetric dimension overflows usize")
}

/// Nondecreasing length-`levels` sequences over `0..d`, in lexicographic
/// order. Entry `k` labels column `k` of [`sym_isometry`].
pub fn sym_multisets(levels: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(sym_dim(levels, d));
    let mut cur = vec![0usize; levels];
    loop {
        out.push(cur.clone());
        // advance to the next nondecreasing sequence
        let mut k = levels;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] + 1 < d {
                let v = cur[k] + 1;
                for slot in cur.iter_mut().skip(k) {
                    *slot = v;
                }
                break;
            }
        }
    }
}

/// Isometry onto the symmetric subspace in the occupation-number basis.
#[derive(Clone, Debug)]
pub struct SymmetricIsometry<T> {
    pub levels: usize,
    pub local_dim: usize,
    pub matrix: ComplexMatrix<T>,
}

impl<T: Real> SymmetricIsometry<T> {
    pub fn sym_dim(&self) -> usize {
        self.matrix.cols()
    }
}

pub fn sym_isometry<T: Real>(levels: usize, d: usize) -> SymmetricIsometry<T> {
    assert!(levels >= 1 && d >= 1, "levels and local dimension must be positive");
    let basis = sym_multisets(levels, d);
    let index: HashMap<&[usize], usize> = basis.iter().enumerate().map(|(i, b)| (b.as_slice(), i)).collect();
    let full = d.pow(levels as u32);
    let mut v = ComplexMatrix::zeros(full, basis.len());
    let mut digits = vec![0usize; levels];
    for row in 0..full {
        let mut sorted = digits.clone();
        sorted.sort_unstable();
        let col = index[sorted.as_slice()];
        let norm = T::of_usize(orbit_size(&sorted)).sqrt();
        v[(row, col)] = C::new(T::one() / norm, T::zero());
        for k in (0..levels).rev() {
            digits[k] += 1;
            if digits[k] < d {
                break;
            }
            digits[k] = 0;
        }
    }
    SymmetricIsometry {
        levels,
        local_dim: d,
        matrix: v,
    }
}

/// Number of distinct orderings of a sorted sequence.
pub(crate) fn orbit_size(sorted: &[usize]) -> usize {
    let mut count: u128 = 1;
    let mut run = 0u128;
    for (i, x) in sorted.iter().enumerate() {
        run = if i > 0 && sorted[i - 1] == *x { run + 1 } else { 1 };
        count = count * (i as u128 + 1) / run;
    }
    count as usize
}

/// `V^dagger op V`.
pub fn lift_to_sym<T: Real>(op: &ComplexMatrix<T>, v: &SymmetricIsometry<T>) -> Result<ComplexMatrix<T>> {
    if op.rows() != v.matrix.rows() || op.cols() != v.matrix.rows() {
        return Err(QopsError::ShapeMismatch(format!(
            "{}x{} operator for a {}-dimensional tensor power",
            op.rows(),
            op.cols(),
            v.matrix.rows()
        )));
    }
    Ok(v.matrix.adjoint().matmul(&op.matmul(&v.matrix)))
}

/// `V op V^dagger`, the inverse of [`lift_to_sym`] on symmetric-supported operators.
pub fn expand_from_sym<T: Real>(op: &ComplexMatrix<T>, v: &SymmetricIsometry<T>) -> Result<ComplexMatrix<T>> {
    if op.rows() != v.sym_dim() || op.cols() != v.sym_dim() {
        return Err(QopsError::ShapeMismatch(format!(
            "{}x{} operator for symmetric dimension {}",
            op.rows(),
            op.cols(),
            v.sym_dim()
        )));
    }
    Ok(v.matrix.matmul(&op.matmul(&v.matrix.adjoint())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = ComplexMatrix<f64>;

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    fn pauli(p: char) -> M {
        match p {
            'X' => M::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            'Z' => M::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            'Y' => M::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]]),
            _ => M::identity(2),
        }
    }

    fn op(dims: Vec<usize>, m: M) -> HermitianOperator<f64> {
        HermitianOperator::new(dims, m).unwrap()
    }

    fn random_density(n: usize, rng: &mut ChaCha8Rng) -> M {
        let g = M::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let p = g.matmul(&g.adjoint());
        let t = p.trace().re;
        p.scale(1.0 / t)
    }

    fn bell() -> HermitianOperator<f64> {
        let s = 0.5f64.sqrt();
        HermitianOperator::pure(vec![2, 2], &[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]).unwrap()
    }

    #[test]
    fn kron_examples() {
        let zz = kron(&op(vec![2], pauli('Z')), &op(vec![2], pauli('Z')));
        assert_eq!(zz.matrix(), &M::diag(&[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(zz.dims(), &[2, 2]);
        let id = kron(&HermitianOperator::identity(vec![2]).unwrap(), &HermitianOperator::identity(vec![3]).unwrap());
        assert_eq!(id.matrix(), &M::identity(6));
        let (x, z) = (pauli('X'), pauli('Z'));
        let xz = kron(&op(vec![2], x.clone()), &op(vec![2], z.clone()));
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        assert_eq!(xz.matrix()[(2 * i + k, 2 * j + l)], x[(i, j)] * z[(k, l)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_examples() {
        let r = partial_trace(&bell(), &[0]).unwrap();
        assert!((r.matrix() - &M::identity(2).scale(0.5)).max_abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = op(vec![2], random_density(2, &mut rng));
        let sigma = op(vec![3], random_density(3, &mut rng).scale(2.0));
        let joint = kron(&rho, &sigma);
        let same = partial_trace(&joint, &[0, 1]).unwrap();
        assert_eq!(same.matrix(), joint.matrix());
        let t1 = partial_trace(&joint, &[1]).unwrap();
        assert!((t1.matrix() - sigma.matrix()).max_abs() < 1e-14);
        assert_eq!(t1.dims(), &[3]);
        assert!(matches!(partial_trace(&joint, &[2]), Err(QopsError::BadIndex { .. })));
    }

    #[test]
    fn partial_transpose_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rho = op(vec![2], random_density(2, &mut rng));
        let sigma = op(vec![2], random_density(2, &mut rng));
        let pt = partial_transpose(&kron(&rho, &sigma), &[1]).unwrap();
        let expect = rho.matrix().kron(&sigma.matrix().transpose());
        assert!((pt.matrix() - &expect).max_abs() < 1e-15);
        assert!(pt.min_eigenvalue().unwrap() > -1e-14);
        let bpt = partial_transpose(&bell(), &[1]).unwrap();
        assert!((bpt.min_eigenvalue().unwrap() + 0.5).abs() < 1e-12);
        let m = op(vec![2, 3], random_density(6, &mut rng));
        let twice = partial_transpose(&partial_transpose(&m, &[0]).unwrap(), &[0]).unwrap();
        assert_eq!(twice.matrix(), m.matrix());
    }

    #[test]
    fn permutation_moves_factors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = op(vec![2], random_density(2, &mut rng));
        let b = op(vec![3], random_density(3, &mut rng));
        let ab = kron(&a, &b);
        let ba = permute_subsystems(&ab, &[1, 0]).unwrap();
        assert_eq!(ba.dims(), &[3, 2]);
        assert!((ba.matrix() - kron(&b, &a).matrix()).max_abs() < 1e-15);
    }

    #[test]
    fn sym_dim_examples() {
        assert_eq!(sym_dim(2, 2), 3);
        assert_eq!(sym_dim(3, 2), 4);
        assert_eq!(sym_dim(2, 3), 6);
        assert_eq!(sym_dim(1, 5), 5);
        assert_eq!(sym_dim(4, 1), 1);
        for l in 1..5 {
            for d in 1..4 {
                assert_eq!(sym_multisets(l, d).len(), sym_dim(l, d));
            }
        }
    }

    #[test]
    fn sym_isometry_small_cases() {
        let v1 = sym_isometry::<f64>(1, 3);
        assert_eq!(v1.matrix, M::identity(3));
        let v = sym_isometry::<f64>(2, 2);
        let s = 0.5f64.sqrt();
        let expect = M::from_real(4, 3, &[1.0, 0.0, 0.0, 0.0, s, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0]);
        assert!((&v.matrix - &expect).max_abs() < 1e-15);
    }

    /// Average of all permutation operators on `levels` factors of dimension `d`.
    fn sym_projector(levels: usize, d: usize) -> M {
        let n = d.pow(levels as u32);
        let dims = vec![d; levels];
        let mut perms: Vec<Vec<usize>> = vec![vec![]];
        for k in 0..levels {
            perms = perms
                .into_iter()
                .flat_map(|p| {
                    (0..=k).map(move |pos| {
                        let mut q = p.clone();
                        q.insert(pos, k);
                        q
                    })
                })
                .collect();
        }
        let mut acc = M::zeros(n, n);
        for p in &perms {
            let map = permutation_map(&dims, p);
            for (r, &m) in map.iter().enumerate() {
                acc[(m, r)] += c(1.0, 0.0);
            }
        }
        acc.scale(1.0 / perms.len() as f64)
    }

    #[test]
    fn sym_isometry_is_isometric_and_symmetric() {
        for l in 1..=4 {
            for d in 1..=3 {
                let v = sym_isometry::<f64>(l, d);
                let vv = v.matrix.adjoint().matmul(&v.matrix);
                assert!((&vv - &M::identity(sym_dim(l, d))).max_abs() < 1e-12);
                let p = sym_projector(l, d);
                assert!((&p.matmul(&v.matrix) - &v.matrix).max_abs() < 1e-12, "L={l} d={d}");
            }
        }
    }

    #[test]
    fn lift_examples() {
        let v = sym_isometry::<f64>(3, 2);
        let id = lift_to_sym(&M::identity(8), &v).unwrap();
        assert!((&id - &M::identity(4)).max_abs() < 1e-14);
        let phi = [c(0.6, 0.0), c(0.0, 0.8)];
        let p = M::outer(&phi);
        let p3 = p.kron(&p).kron(&p);
        let back = expand_from_sym(&lift_to_sym(&p3, &v).unwrap(), &v).unwrap();
        assert!((&back - &p3).max_abs() < 1e-14);
        assert!(matches!(lift_to_sym(&M::identity(4), &v), Err(QopsError::ShapeMismatch(_))));
    }

    #[test]
    fn lift_preserves_spectrum_on_symmetric_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = sym_isometry::<f64>(2, 3);
        let inner = {
            let g = M::from_fn(6, 6, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            &g.matmul(&g.adjoint()) - &M::identity(6).scale(0.3)
        };
        let o = expand_from_sym(&inner, &v).unwrap();
        let small = linalg::herm_eig(&lift_to_sym(&o, &v).unwrap()).unwrap().values;
        let big = linalg::herm_eig(&o).unwrap().values;
        // O has three extra zero eigenvalues from the antisymmetric sector
        let mut nonzero: Vec<f64> = big.into_iter().collect();
        for s in &small {
            let pos = nonzero
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - s).abs().partial_cmp(&(b.1 - s).abs()).unwrap())
                .unwrap()
                .0;
            assert!((nonzero[pos] - s).abs() < 1e-10);
            nonzero.remove(pos);
        }
        assert!(nonzero.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn operator_constructor_checks() {
        let bad = M::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            HermitianOperator::new(vec![2], bad),
            Err(QopsError::Linalg(LinalgError::NotHermitian { .. }))
        ));
        assert!(matches!(
            HermitianOperator::new(vec![3], M::identity(2)),
            Err(QopsError::ShapeMismatch(_))
        ));
        let mm = HermitianOperator::<f64>::maximally_mixed(vec![2, 2]).unwrap();
        assert!((mm.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn works_in_single_precision() {
        let b = bell().cast::<f32>();
        let pt = partial_transpose(&b, &[0]).unwrap();
        assert!((pt.min_eigenvalue().unwrap() + 0.5).abs() < 1e-5);
    }
}
