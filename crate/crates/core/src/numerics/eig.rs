use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues of a general real square matrix via the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if !a.is_square() {
        return Err(Error::invalid("eigenvalues of a non-square matrix"));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = a
        .clone()
        .try_schur(f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::EigFailure)?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    let eig = eigenvalues(a)?;
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Constants of the exponential envelope `‖e^{At}‖₂ ≤ k·e^{-λt}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBound {
    pub k: f64,
    pub lambda: f64,
}

/// Envelope from the eigen-decomposition `A = VΛV⁻¹`: `k = cond₂(V)` and
/// `λ = −max Re(Λ)`. Requires a Hurwitz, diagonalizable `A`.
pub fn exp_decay_bound(a: &DMatrix<f64>) -> Result<DecayBound> {
    let n = a.nrows();
    let eig = eigenvalues(a)?;
    let abscissa = eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }
    if super::is_symmetric(a, 1e-14) {
        // orthogonal eigenvectors, repeated eigenvalues included
        return Ok(DecayBound {
            k: 1.0,
            lambda: -abscissa,
        });
    }
    let ac: DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    let scale = a.amax().max(1.0);
    let mut v = DMatrix::<Complex<f64>>::zeros(n, n);
    for (col, lam) in eig.iter().enumerate() {
        let vec = inverse_iteration(&ac, *lam, scale, col)?;
        v.set_column(col, &vec);
    }
    let sv = v.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin <= smax * 1e-12 {
        return Err(Error::invalid(
            "matrix is (numerically) defective; eigen-decomposition bound unavailable",
        ));
    }
    Ok(DecayBound {
        k: smax / smin,
        lambda: -abscissa,
    })
}

fn inverse_iteration(
    a: &DMatrix<Complex<f64>>,
    lam: Complex<f64>,
    scale: f64,
    seed: usize,
) -> Result<DVector<Complex<f64>>> {
    let n = a.nrows();
    // shift slightly off the eigenvalue so the factorization stays regular
    let shift = lam + Complex::new(1e-10 * scale, 1e-10 * scale);
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] -= shift;
    }
    let lu = m.lu();
    // deterministic start vector that is unlikely to be orthogonal to the target
    let mut x = DVector::from_fn(n, |i, _| {
        Complex::new(1.0 + ((i + seed) % 7) as f64 * 0.1, 0.05 * i as f64)
    });
    for _ in 0..3 {
        let y = lu.solve(&x).ok_or(Error::EigFailure)?;
        let norm = y.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::EigFailure);
        }
        x = y.unscale(norm);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abscissa_of_identity_and_rotation() {
        assert!((spectral_abscissa(&DMatrix::identity(2, 2)).unwrap() - 1.0).abs() < 1e-14);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(spectral_abscissa(&rot).unwrap().abs() < 1e-14);
    }

    #[test]
    fn decay_bound_for_normal_matrix_has_unit_k() {
        let a = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -3.0]);
        let b = exp_decay_bound(&a).unwrap();
        assert!((b.k - 1.0).abs() < 1e-8);
        assert!(b.lambda > 0.0);
    }

    #[test]
    fn decay_bound_nonnormal_dominates_exponential() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 5.0, 0.0, -2.0]);
        let b = exp_decay_bound(&a).unwrap();
        assert!(b.k > 1.0);
        // spot-check the envelope against a fine Taylor/scaling exponential
        for &t in &[0.1, 0.5, 1.0, 3.0] {
            let e = (a.clone() * t).exp();
            assert!(
                e.singular_values().max() <= b.k * (-b.lambda * t).exp() * (1.0 + 1e-9) + 1e-12
            );
        }
    }

    #[test]
    fn decay_bound_rejects_unstable() {
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        assert!(matches!(exp_decay_bound(&a), Err(Error::NotHurwitz { .. })));
    }
}
