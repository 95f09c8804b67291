//! Dense linear algebra over real and complex scalars.
//!
//! Everything here is generic over [`Real`] so the operator algebra can run
//! in `f32` or `f64`. The SDP solver and the hierarchy builders use `f64`.

mod eigen;
mod factor;
mod matrix;

pub use eigen::{herm_eig, sym_eig, sym_eigvals, tridiag_eig, Eigen, HermEigen};
pub use factor::{cholesky, cholesky_solve, jacobi_svd, lu_solve, Svd};
pub use matrix::{ComplexMatrix, RealMatrix};

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, RemAssign, SubAssign};

use num_complex::Complex;
use thiserror::Error;

/// Floating point scalar usable by every generic routine in the crate.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + RemAssign
    + Sum
    + 'static
{
    /// Absolute floor used by relative tolerance checks.
    fn tiny() -> Self;

    /// Convert an `f64` literal.
    fn lit(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).unwrap()
    }

    fn of_usize(v: usize) -> Self {
        <Self as num_traits::NumCast>::from(v).unwrap()
    }
}

impl Real for f64 {
    fn tiny() -> Self {
        1e-14
    }
}

impl Real for f32 {
    fn tiny() -> Self {
        1e-6
    }
}

pub type C<T> = Complex<T>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not Hermitian (asymmetry {asymmetry:e} exceeds tolerance)")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("eigensolver did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("singular matrix")]
    Singular,
    #[error("dimension mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite entry")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Embed a complex Hermitian `m = X + iY` as the real symmetric `[[X, -Y], [Y, X]]`.
///
/// The spectrum of the embedding is the spectrum of `m` with every
/// multiplicity doubled, so positivity is preserved in both directions.
pub fn embed_real<T: Real>(m: &ComplexMatrix<T>) -> Result<RealMatrix<T>> {
    m.check_hermitian(hermitian_tol())?;
    Ok(embed_real_unchecked(m))
}

pub(crate) fn embed_real_unchecked<T: Real>(m: &ComplexMatrix<T>) -> RealMatrix<T> {
    let (r, c) = (m.rows(), m.cols());
    let mut out = RealMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// Sum of singular values.
///
/// Hermitian inputs go through the eigensolver; general square matrices
/// through the one-sided Jacobi SVD of the real embedding, whose singular
/// values are those of `m`, each repeated twice.
pub fn trace_norm<T: Real>(m: &ComplexMatrix<T>) -> Result<T> {
    if m.rows() != m.cols() {
        return Err(LinalgError::NonSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if m.check_hermitian(hermitian_tol()).is_ok() {
        let eig = herm_eig(m)?;
        return Ok(eig.values.iter().map(|v| v.abs()).sum());
    }
    let svd = jacobi_svd(&embed_real_unchecked(m))?;
    Ok(svd.values.iter().copied().sum::<T>() / T::lit(2.0))
}

/// Relative Hermiticity tolerance used by default checks.
pub(crate) fn hermitian_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    #[test]
    fn embed_of_real_symmetric_is_block_diagonal() {
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let e = embed_real(&m).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(e[(i, j)], m[(i, j)].re);
                assert_eq!(e[(i + 2, j + 2)], m[(i, j)].re);
                assert_eq!(e[(i, j + 2)], 0.0);
                assert_eq!(e[(i + 2, j)], 0.0);
            }
        }
    }

    #[test]
    fn embed_of_pauli_y_has_doubled_spectrum() {
        let y = ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]]);
        let e = embed_real(&y).unwrap();
        let vals = sym_eigvals(&e).unwrap();
        let expect = [-1.0, -1.0, 1.0, 1.0];
        for (v, w) in vals.iter().zip(expect) {
            assert!((v - w).abs() < 1e-12, "{vals:?}");
        }
    }

    #[test]
    fn embed_of_identity_is_identity() {
        let e = embed_real(&ComplexMatrix::<f64>::identity(2)).unwrap();
        assert_eq!(e, RealMatrix::identity(4));
    }

    #[test]
    fn embed_rejects_non_hermitian() {
        let m = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(embed_real(&m), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn trace_norm_examples() {
        let z = ComplexMatrix::<f64>::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!((trace_norm(&z).unwrap() - 2.0).abs() < 1e-12);
        let rho = ComplexMatrix::<f64>::from_real(2, 2, &[0.7, 0.1, 0.1, 0.3]);
        assert!((trace_norm(&rho).unwrap() - 1.0).abs() < 1e-12);
        // partial transpose of |Phi+><Phi+| has spectrum {1/2,1/2,1/2,-1/2}
        let mut pt = ComplexMatrix::zeros(4, 4);
        pt[(0, 0)] = c(0.5, 0.0);
        pt[(3, 3)] = c(0.5, 0.0);
        pt[(1, 2)] = c(0.5, 0.0);
        pt[(2, 1)] = c(0.5, 0.0);
        assert!((trace_norm(&pt).unwrap() - 2.0).abs() < 1e-12);
        let nonsq = ComplexMatrix::<f64>::zeros(2, 3);
        assert!(matches!(trace_norm(&nonsq), Err(LinalgError::NonSquare { .. })));
    }

    #[test]
    fn trace_norm_of_non_hermitian_matches_singular_values() {
        // [[0, 2], [0, 0]] has singular values {2, 0}
        let m = ComplexMatrix::<f64>::from_real(2, 2, &[0.0, 2.0, 0.0, 0.0]);
        assert!((trace_norm(&m).unwrap() - 2.0).abs() < 1e-12);
        let m = ComplexMatrix::from_rows(&[vec![c(0.0, 1.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 0.0)]]);
        assert!((trace_norm(&m).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }
}
