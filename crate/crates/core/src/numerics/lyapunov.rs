use nalgebra::DMatrix;

use super::{identity, kron, spectral_abscissa, symmetrize, unvec, vec, HURWITZ_MARGIN};
use crate::error::{Error, Result};

/// Solves `A_clᵀ P + P A_cl + W = 0` for symmetric `P`.
///
/// Uses the Kronecker-sum form `(I ⊗ A_clᵀ + A_clᵀ ⊗ I) vec(P) = −vec(W)`
/// and symmetrizes the result.
pub fn solve_lyapunov(a_cl: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a_cl.nrows();
    if !a_cl.is_square() || w.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "solve_lyapunov: A is {:?}, W is {:?}",
            a_cl.shape(),
            w.shape()
        )));
    }
    let abscissa = spectral_abscissa(a_cl)?;
    if abscissa >= -HURWITZ_MARGIN {
        return Err(Error::NotHurwitz { abscissa });
    }

    let at = a_cl.transpose();
    let eye = identity(n);
    let op = kron(&eye, &at) + kron(&at, &eye);
    let rhs = -vec(w);
    let sol = op.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    let p = symmetrize(&unvec(sol.as_slice(), n, n));

    let residual = (&at * &p + &p * a_cl + w).norm();
    if !residual.is_finite() || residual > 1e-9 * w.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::SingularSystem);
    }
    Ok(p)
}
