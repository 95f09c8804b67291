use super::{LinalgError, Real, RealMatrix, Result};

/// Lower-triangular Cholesky factor `L` with `A = L L^T`.
pub fn cholesky<T: Real>(a: &RealMatrix<T>) -> Result<RealMatrix<T>> {
    let n = a.rows();
    if n != a.cols() {
        return Err(LinalgError::NonSquare { rows: n, cols: a.cols() });
    }
    let mut l = RealMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > T::zero()) {
            return Err(LinalgError::NotPositiveDefinite {
                pivot: j,
                value: diag.to_f64().unwrap_or(f64::NAN),
            });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            let (ri, rj) = (l.row(i), l.row(j));
            for k in 0..j {
                s -= ri[k] * rj[k];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solve `L L^T x = b` in place given the Cholesky factor.
pub fn cholesky_solve<T: Real>(l: &RealMatrix<T>, b: &mut [T]) {
    let n = l.rows();
    for i in 0..n {
        let row = l.row(i);
        let mut s = b[i];
        for k in 0..i {
            s -= row[k] * b[k];
        }
        b[i] = s / row[i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Gaussian elimination with partial pivoting.
pub fn lu_solve<T: Real>(a: &RealMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.rows();
    if n != a.cols() {
        return Err(LinalgError::NonSquare { rows: n, cols: a.cols() });
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.max_abs().max(T::min_positive_value());
    for k in 0..n {
        let (p, pv) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -T::one()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if pv <= T::epsilon() * scale {
            return Err(LinalgError::Singular);
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            x.swap(k, p);
        }
        let piv = m[(k, k)];
        for i in (k + 1)..n {
            let f = m[(i, k)] / piv;
            if f == T::zero() {
                continue;
            }
            for j in k..n {
                let v = m[(k, j)];
                m[(i, j)] -= f * v;
            }
            let xk = x[k];
            x[i] -= f * xk;
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Ok(x)
}

/// Thin SVD `A = U diag(values) V^T` with values in descending order.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: RealMatrix<T>,
    pub values: Vec<T>,
    pub v: RealMatrix<T>,
}

/// One-sided (Hestenes) Jacobi SVD of an `m x n` matrix with `m >= n`.
///
/// Small singular values come out with high relative accuracy, which the
/// interior-point scaling update relies on near convergence.
pub fn jacobi_svd<T: Real>(a: &RealMatrix<T>) -> Result<Svd<T>> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(LinalgError::ShapeMismatch(format!("jacobi_svd needs rows >= cols, got {m}x{n}")));
    }
    // columns of A and V stored as rows
    let mut cols = a.transpose();
    let mut vt = RealMatrix::<T>::identity(n);
    let eps = T::epsilon() * T::of_usize(m).sqrt();
    let max_sweeps = 80;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for i in 0..n {
            for j in (i + 1)..n {
                let (ci, cj) = (cols.row(i), cols.row(j));
                let alpha: T = ci.iter().map(|&x| x * x).sum();
                let beta: T = cj.iter().map(|&x| x * x).sum();
                let gamma: T = ci.iter().zip(cj).map(|(&x, &y)| x * y).sum();
                if gamma.abs() <= eps * (alpha * beta).sqrt() || alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut cols, i, j, c, s);
                rotate_rows(&mut vt, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence(max_sweeps));
    }
    let norms: Vec<T> = (0..n)
        .map(|i| cols.row(i).iter().map(|&x| x * x).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<T> = order.iter().map(|&i| norms[i]).collect();
    let u = RealMatrix::from_fn(m, n, |r, c| {
        let k = order[c];
        if norms[k] > T::zero() {
            cols[(k, r)] / norms[k]
        } else {
            T::zero()
        }
    });
    let v = RealMatrix::from_fn(n, n, |r, c| vt[(order[c], r)]);
    Ok(Svd { u, values, v })
}

fn rotate_rows<T: Real>(m: &mut RealMatrix<T>, i: usize, j: usize, c: T, s: T) {
    let n = m.cols();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(j * n);
    let ri = &mut lo[i * n..(i + 1) * n];
    let rj = &mut hi[..n];
    for (x, y) in ri.iter_mut().zip(rj.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}
