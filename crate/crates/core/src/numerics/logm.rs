use nalgebra::DMatrix;

use super::eigenvalues;
use crate::error::{Error, Result};

const MAX_SQRT_STEPS: usize = 60;

/// Principal square root by Denman–Beavers iteration.
pub fn sqrtm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(n, n);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse().ok_or(Error::SingularSystem)?;
        let z_inv = z.clone().try_inverse().ok_or(Error::SingularSystem)?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let change = (&y_next - &y).norm() / y_next.norm().max(f64::MIN_POSITIVE);
        y = y_next;
        z = z_next;
        if change < 1e-15 {
            return Ok(y);
        }
    }
    Err(Error::NoConvergence {
        iterations: 100,
        last_change: f64::NAN,
    })
}

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// Fails with [`Error::LogBranch`] when an eigenvalue lies on the closed
/// negative real axis.
pub fn logm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::invalid("logm of a non-square matrix"));
    }
    let n = a.nrows();
    let scale = a.amax().max(1.0);
    for z in eigenvalues(a)? {
        if z.re <= 0.0 && z.im.abs() <= 1e-12 * scale {
            return Err(Error::LogBranch);
        }
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let mut x = a.clone();
    let mut halvings = 0;
    while (&x - &eye).abs().column_sum().max() > 0.25 {
        if halvings == MAX_SQRT_STEPS {
            return Err(Error::NoConvergence {
                iterations: halvings,
                last_change: f64::NAN,
            });
        }
        x = sqrtm(&x)?;
        halvings += 1;
    }

    // log(I + E) = Σ (−1)^{k+1} E^k / k, ‖E‖₁ ≤ 1/4
    let e = &x - &eye;
    let mut term = e.clone();
    let mut log = DMatrix::zeros(n, n);
    for k in 1..200 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let contrib = &term * (sign / k as f64);
        log += &contrib;
        if contrib.amax() <= f64::EPSILON * 1e-3 * log.amax().max(f64::MIN_POSITIVE) {
            break;
        }
        term = &term * &e;
    }
    Ok(log * 2f64.powi(halvings as i32))
}
