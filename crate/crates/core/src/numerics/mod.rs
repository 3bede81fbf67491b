//! Small dense linear algebra and the model-based Riccati oracle.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`; dimensions are
//! desk-scale (n up to a few tens), so the Lyapunov solver uses the
//! n²-dimensional Kronecker-sum system directly.

mod eig;
mod kleinman;
mod logm;
mod lstsq;
mod lyapunov;

pub use eig::{eigenvalues, exp_decay_bound, spectral_abscissa, DecayBound};
pub use kleinman::{are_residual, kleinman_solve, CostSpec, KleinmanTrace};
pub use logm::{logm, sqrtm};
pub use lstsq::{least_squares_min_norm, least_squares_truncated, rank_tolerance, LeastSquares};
pub use lyapunov::solve_lyapunov;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used by the (semi)definiteness checks.
pub const DEFINITENESS_TOL: f64 = 1e-10;

/// Spectral abscissa above `-HURWITZ_MARGIN` counts as not Hurwitz.
pub const HURWITZ_MARGIN: f64 = 1e-12;

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Kronecker product of two vectors, `a ⊗ b`, with `a` as the slow index.
pub fn kron_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra stores column-major, so the raw slice is already vec(A)
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for a `rows × cols` matrix.
pub fn unvec(v: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "unvec: length mismatch");
    DMatrix::from_column_slice(rows, cols, v)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn ensure_finite(a: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = a.amax().max(1.0);
    (a - a.transpose()).amax() <= tol * scale
}

/// Smallest eigenvalue of a symmetric matrix, relative to its largest magnitude.
fn relative_min_eigenvalue(a: &DMatrix<f64>) -> (f64, f64) {
    let eig = a.clone().symmetric_eigen().eigenvalues;
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
    (min, scale)
}

pub fn is_positive_semidefinite(a: &DMatrix<f64>) -> bool {
    let (min, scale) = relative_min_eigenvalue(a);
    min >= -DEFINITENESS_TOL * scale.max(f64::MIN_POSITIVE)
}

pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    let (min, scale) = relative_min_eigenvalue(a);
    scale > 0.0 && min > DEFINITENESS_TOL * scale
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Row-major nested vectors into a matrix; rows must be equal length.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    let m = DMatrix::from_fn(r, c, |i, j| rows[i][j]);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().cloned().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vec_stacks_columns() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(vec(&a).as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(unvec(vec(&a).as_slice(), 2, 2), a);
    }

    #[test]
    fn kron_of_vectors() {
        let a = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(kron_vec(&a, &a).as_slice(), &[1.0, 2.0, 2.0, 4.0]);
        let am = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        assert_eq!(kron(&am, &am).as_slice(), &[1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn definiteness_checks() {
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(is_positive_definite(&p));
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(is_positive_semidefinite(&s));
        assert!(!is_positive_definite(&s));
        let n = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(!is_positive_semidefinite(&n));
    }

    #[test]
    fn from_rows_rejects_ragged_and_nan() {
        assert!(from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(matches!(
            from_rows(&[vec![f64::NAN]]),
            Err(Error::NonFinite(_))
        ));
    }

    fn mat2() -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-3.0f64..3.0, 4).prop_map(|v| DMatrix::from_vec(2, 2, v))
    }

    proptest! {
        #[test]
        fn vec_kron_identity(x in mat2(), y in mat2(), z in mat2()) {
            let lhs = vec(&(&x * &y * &z));
            let rhs = kron(&z.transpose(), &x) * vec(&y);
            prop_assert!((lhs - rhs).amax() <= 1e-12);
        }

        #[test]
        fn kron_vec_matches_matrix_kron(a in proptest::collection::vec(-2.0f64..2.0, 3),
                                         b in proptest::collection::vec(-2.0f64..2.0, 2)) {
            let av = DVector::from_vec(a.clone());
            let bv = DVector::from_vec(b.clone());
            let am = DMatrix::from_vec(3, 1, a);
            let bm = DMatrix::from_vec(2, 1, b);
            let lhs = kron_vec(&av, &bv);
            let rhs = kron(&am, &bm);
            prop_assert_eq!(lhs.as_slice(), rhs.as_slice());
        }
    }
}
