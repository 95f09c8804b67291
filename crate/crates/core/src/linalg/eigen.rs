use num_complex::Complex;
use num_traits::{One, Zero};

use super::{hermitian_tol, ComplexMatrix, LinalgError, Real, RealMatrix, Result, C};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Real symmetric eigendecomposition: ascending values, eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Eigen<T> {
    pub values: Vec<T>,
    pub vectors: RealMatrix<T>,
}

/// Hermitian eigendecomposition: ascending values, unitary eigenvector matrix.
#[derive(Clone, Debug)]
pub struct HermEigen<T> {
    pub values: Vec<T>,
    pub vectors: ComplexMatrix<T>,
}

impl<T: Real> HermEigen<T> {
    /// `V f(diag) V^dagger`
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> ComplexMatrix<T> {
        let n = self.values.len();
        let fv: Vec<T> = self.values.iter().map(|&x| f(x)).collect();
        let v = &self.vectors;
        let mut out = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut acc = C::zero();
                for (k, &w) in fv.iter().enumerate() {
                    acc += v[(i, k)] * v[(j, k)].conj() * w;
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc.conj();
            }
        }
        out
    }
}

trait Rotate<T> {
    /// `(a, b) <- (c a - s b, s a + c b)`
    fn rotate(a: &mut Self, b: &mut Self, c: T, s: T);
}

impl<T: Real> Rotate<T> for T {
    fn rotate(a: &mut T, b: &mut T, c: T, s: T) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

impl<T: Real> Rotate<T> for Complex<T> {
    fn rotate(a: &mut Complex<T>, b: &mut Complex<T>, c: T, s: T) {
        let (x, y) = (*a, *b);
        *a = x * c - y * s;
        *b = x * s + y * c;
    }
}

/// Implicit-shift QL on a symmetric tridiagonal matrix.
///
/// `d` holds the diagonal, `e[i]` the coupling between `i` and `i + 1`
/// (`e.len() == d.len()`, last entry ignored). When `rows` is given, each of
/// its `n` rows of length `width` is treated as one basis vector and rotated
/// along with the iteration.
fn tql<T: Real, S: Rotate<T> + Copy>(
    d: &mut [T],
    e: &mut [T],
    mut rows: Option<(&mut [S], usize)>,
) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = T::zero();
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let two = T::lit(2.0);
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_SWEEPS_PER_EIGENVALUE {
                    return Err(LinalgError::NoConvergence(MAX_SWEEPS_PER_EIGENVALUE));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some((buf, width)) = rows.as_mut() {
                        let width = *width;
                        let (lo, hi) = buf.split_at_mut((i + 1) * width);
                        let ri = &mut lo[i * width..];
                        let ri1 = &mut hi[..width];
                        for (a, b) in ri.iter_mut().zip(ri1.iter_mut()) {
                            // column i+1 <- s col_i + c col_{i+1}; col_i <- c col_i - s col_{i+1}
                            S::rotate(a, b, c, s);
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

fn ascending_order<T: Real>(values: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}

/// Eigenvalues (ascending) and optionally eigenvectors of a symmetric tridiagonal matrix.
pub fn tridiag_eig<T: Real>(diag: &[T], offdiag: &[T], vectors: bool) -> Result<Eigen<T>> {
    let n = diag.len();
    assert!(offdiag.len() + 1 >= n, "off-diagonal too short");
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(&offdiag[..n.saturating_sub(1)]);
    let mut rows = if vectors {
        RealMatrix::identity(n).as_slice().to_vec()
    } else {
        Vec::new()
    };
    tql(&mut d, &mut e, if vectors { Some((rows.as_mut_slice(), n)) } else { None })?;
    let order = ascending_order(&d);
    let values: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let vectors = if vectors {
        RealMatrix::from_fn(n, n, |r, c| rows[order[c] * n + r])
    } else {
        RealMatrix::zeros(0, 0)
    };
    Ok(Eigen { values, vectors })
}

/// Householder reduction of a real symmetric matrix to tridiagonal form.
///
/// Returns `(d, e, qt)` with `A = Q T Q^T` and `qt = Q^T` stored row-major.
fn householder_real<T: Real>(a: &RealMatrix<T>, want_q: bool) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = a.rows();
    let mut m = a.clone();
    let mut qt = if want_q {
        RealMatrix::identity(n).as_slice().to_vec()
    } else {
        Vec::new()
    };
    let mut e = vec![T::zero(); n];
    let two = T::lit(2.0);
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut v: Vec<T> = (0..len).map(|i| m[(k + 1 + i, k)]).collect();
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if norm <= T::min_positive_value() {
            e[k] = v[0];
            continue;
        }
        let alpha = if v[0] > T::zero() { -norm } else { norm };
        v[0] -= alpha;
        let vn = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if vn <= T::min_positive_value() {
            e[k] = alpha;
            continue;
        }
        for x in v.iter_mut() {
            *x /= vn;
        }
        // p = A v on the trailing block
        let mut p = vec![T::zero(); len];
        for i in 0..len {
            let row = &m.as_slice()[(k + 1 + i) * n + k + 1..(k + 2 + i) * n];
            p[i] = row.iter().zip(&v).map(|(&a, &b)| a * b).sum();
        }
        let kk: T = v.iter().zip(&p).map(|(&a, &b)| a * b).sum();
        let w: Vec<T> = p.iter().zip(&v).map(|(&pi, &vi)| pi - kk * vi).collect();
        for i in 0..len {
            let row = &mut m.as_mut_slice()[(k + 1 + i) * n + k + 1..(k + 2 + i) * n];
            for j in 0..len {
                row[j] -= two * (v[i] * w[j] + w[i] * v[j]);
            }
        }
        for i in 0..len {
            m[(k + 1 + i, k)] = T::zero();
            m[(k, k + 1 + i)] = T::zero();
        }
        m[(k + 1, k)] = alpha;
        m[(k, k + 1)] = alpha;
        e[k] = alpha;
        if want_q {
            // Q^T <- (I - 2 v v^T) Q^T on rows k+1..
            let mut u = vec![T::zero(); n];
            for i in 0..len {
                let row = &qt[(k + 1 + i) * n..(k + 2 + i) * n];
                for (uj, &q) in u.iter_mut().zip(row) {
                    *uj += v[i] * q;
                }
            }
            for i in 0..len {
                let row = &mut qt[(k + 1 + i) * n..(k + 2 + i) * n];
                for (q, &uj) in row.iter_mut().zip(&u) {
                    *q -= two * v[i] * uj;
                }
            }
        }
    }
    if n >= 2 {
        e[n - 2] = m[(n - 1, n - 2)];
    }
    let d = (0..n).map(|i| m[(i, i)]).collect();
    (d, e, qt)
}

fn check_symmetric<T: Real>(a: &RealMatrix<T>) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(LinalgError::NonSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let scale = a.frobenius_norm().max(T::one());
    let defect = a.symmetry_defect();
    if defect > hermitian_tol::<T>() * scale + T::tiny() {
        return Err(LinalgError::NotHermitian {
            asymmetry: defect.to_f64().unwrap_or(f64::INFINITY),
        });
    }
    Ok(())
}

/// Full eigendecomposition of a real symmetric matrix.
pub fn sym_eig<T: Real>(a: &RealMatrix<T>) -> Result<Eigen<T>> {
    check_symmetric(a)?;
    let n = a.rows();
    let (mut d, mut e, mut qt) = householder_real(a, true);
    tql(&mut d, &mut e, Some((qt.as_mut_slice(), n)))?;
    let order = ascending_order(&d);
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = RealMatrix::from_fn(n, n, |r, c| qt[order[c] * n + r]);
    Ok(Eigen { values, vectors })
}

/// Ascending eigenvalues of a real symmetric matrix.
pub fn sym_eigvals<T: Real>(a: &RealMatrix<T>) -> Result<Vec<T>> {
    check_symmetric(a)?;
    let (mut d, mut e, _) = householder_real(a, false);
    tql::<T, T>(&mut d, &mut e, None)?;
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(d)
}

/// Eigendecomposition of a complex Hermitian matrix.
///
/// Householder reflections bring the matrix to Hermitian tridiagonal form, a
/// diagonal phase makes the off-diagonal real, and implicit QL finishes.
pub fn herm_eig<T: Real>(a: &ComplexMatrix<T>) -> Result<HermEigen<T>> {
    a.check_hermitian(hermitian_tol())?;
    let n = a.rows();
    let mut m = a.clone();
    let mut qt = ComplexMatrix::<T>::identity(n).as_slice().to_vec();
    let mut sub = vec![C::<T>::zero(); n];
    let two = T::lit(2.0);
    for k in 0..n.saturating_sub(2) {
        let len = n - k - 1;
        let mut v: Vec<C<T>> = (0..len).map(|i| m[(k + 1 + i, k)]).collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if norm <= T::min_positive_value() {
            sub[k] = v[0];
            continue;
        }
        let phase = if v[0].norm() > T::zero() {
            v[0] / v[0].norm()
        } else {
            C::one()
        };
        let alpha = -phase * norm;
        v[0] -= alpha;
        let vn = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if vn <= T::min_positive_value() {
            sub[k] = alpha;
            continue;
        }
        for z in v.iter_mut() {
            *z /= vn;
        }
        let mut p = vec![C::zero(); len];
        for i in 0..len {
            let row = &m.as_slice()[(k + 1 + i) * n + k + 1..(k + 2 + i) * n];
            p[i] = row.iter().zip(&v).map(|(a, b)| *a * *b).sum();
        }
        let kk: C<T> = v.iter().zip(&p).map(|(a, b)| a.conj() * b).sum();
        let kk = C::new(kk.re, T::zero());
        let w: Vec<C<T>> = p.iter().zip(&v).map(|(pi, vi)| *pi - kk * vi).collect();
        for i in 0..len {
            let row = &mut m.as_mut_slice()[(k + 1 + i) * n + k + 1..(k + 2 + i) * n];
            for j in 0..len {
                row[j] -= (v[i] * w[j].conj() + w[i] * v[j].conj()) * two;
            }
        }
        for i in 0..len {
            m[(k + 1 + i, k)] = C::zero();
            m[(k, k + 1 + i)] = C::zero();
        }
        m[(k + 1, k)] = alpha;
        m[(k, k + 1)] = alpha.conj();
        sub[k] = alpha;
        // Q^T <- (I - 2 conj(v) v^T) Q^T
        let mut u = vec![C::<T>::zero(); n];
        for i in 0..len {
            let row = &qt[(k + 1 + i) * n..(k + 2 + i) * n];
            for (uj, q) in u.iter_mut().zip(row) {
                *uj += v[i] * q;
            }
        }
        for i in 0..len {
            let row = &mut qt[(k + 1 + i) * n..(k + 2 + i) * n];
            let cv = v[i].conj() * two;
            for (q, uj) in row.iter_mut().zip(&u) {
                *q -= cv * uj;
            }
        }
    }
    if n >= 2 {
        sub[n - 2] = m[(n - 1, n - 2)];
    }
    // phases so that D^dagger T D has a real non-negative subdiagonal
    let mut delta = vec![C::<T>::one(); n];
    let mut e = vec![T::zero(); n];
    for j in 0..n.saturating_sub(1) {
        let s = sub[j];
        let r = s.norm();
        e[j] = r;
        delta[j + 1] = if r > T::zero() { delta[j] * (s / r) } else { delta[j] };
    }
    for (i, dl) in delta.iter().enumerate() {
        for q in qt[i * n..(i + 1) * n].iter_mut() {
            *q *= dl;
        }
    }
    let mut d: Vec<T> = (0..n).map(|i| m[(i, i)].re).collect();
    tql(&mut d, &mut e, Some((qt.as_mut_slice(), n)))?;
    let order = ascending_order(&d);
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| qt[order[c] * n + r]);
    Ok(HermEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> ComplexMatrix<f64> {
        let g = ComplexMatrix::from_fn(n, n, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        g.hermitian_part()
    }

    #[test]
    fn diagonal_input_sorted() {
        let m = ComplexMatrix::<f64>::diag(&[3.0, 1.0]);
        let eig = herm_eig(&m).unwrap();
        assert_eq!(eig.values, vec![1.0, 3.0]);
        assert!((eig.vectors[(1, 0)].norm() - 1.0).abs() < 1e-14);
        assert!((eig.vectors[(0, 1)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pauli_x_spectrum() {
        let x = ComplexMatrix::<f64>::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let eig = herm_eig(&x).unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2, 3, 6, 17, 40] {
            let h = random_hermitian(n, &mut rng);
            let eig = herm_eig(&h).unwrap();
            let back = eig.reconstruct_with(|x| x);
            let err = (&back - &h).frobenius_norm();
            assert!(err <= 1e-10 * h.frobenius_norm().max(1e-14), "n={n} err={err}");
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
            let vv = eig.vectors.adjoint().matmul(&eig.vectors);
            assert!((&vv - &ComplexMatrix::identity(n)).frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn real_symmetric_matches_hermitian_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let mut a = RealMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        a.symmetrize();
        let eig = sym_eig(&a).unwrap();
        let h = herm_eig(&a.to_complex()).unwrap();
        for (x, y) in eig.values.iter().zip(&h.values) {
            assert!((x - y).abs() < 1e-12);
        }
        let vals = sym_eigvals(&a).unwrap();
        for (x, y) in eig.values.iter().zip(&vals) {
            assert!((x - y).abs() < 1e-12);
        }
        let v = &eig.vectors;
        let back = v.matmul(&RealMatrix::diag(&eig.values)).matmul_tr(v);
        assert!((&back - &a).frobenius_norm() < 1e-10);
    }

    #[test]
    fn tridiagonal_legendre() {
        // Jacobi matrix of Legendre P_2: roots +-1/sqrt(3)
        let b = 1.0 / 3f64.sqrt();
        let eig = tridiag_eig(&[0.0, 0.0], &[b], false).unwrap();
        assert!((eig.values[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(herm_eig(&m), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn single_precision_works() {
        let m = ComplexMatrix::<f32>::from_real(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let eig = herm_eig(&m).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-5);
        assert!((eig.values[1] - 3.0).abs() < 1e-5);
    }
}
