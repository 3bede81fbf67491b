use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Numerical-rank threshold: `σ_max · max(rows, cols) · ε · 10³`.
pub fn rank_tolerance(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    sigma_max * rows.max(cols) as f64 * f64::EPSILON * 1e3
}

/// Minimum-norm least-squares solution with its diagnostics.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: DVector<f64>,
    pub rank: usize,
    /// `σ_max / σ_r` over the retained singular values.
    pub condition_number: f64,
    /// Orthonormal basis (columns) of the numerical null space.
    pub null_space: DMatrix<f64>,
}

/// Minimum-norm minimizer of `‖Θz − Φ‖₂` with singular values below
/// [`rank_tolerance`] discarded. Never fails on rank; the caller decides.
pub fn least_squares_truncated(theta: &DMatrix<f64>, phi: &DVector<f64>) -> Result<LeastSquares> {
    let (p, q) = theta.shape();
    if phi.len() != p {
        return Err(Error::invalid(format!(
            "least squares: Θ has {p} rows, Φ has {}",
            phi.len()
        )));
    }
    if p < q {
        return Err(Error::invalid(format!(
            "least squares: {p} equations for {q} unknowns"
        )));
    }
    if q == 0 {
        return Ok(LeastSquares {
            solution: DVector::zeros(0),
            rank: 0,
            condition_number: 1.0,
            null_space: DMatrix::zeros(0, 0),
        });
    }
    let svd = theta
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(Error::EigFailure)?;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].partial_cmp(&sv[i]).unwrap());
    let sigma_max = sv[order[0]];
    let tol = rank_tolerance(sigma_max, p, q);

    let mut solution = DVector::zeros(q);
    let mut rank = 0;
    let mut sigma_min = sigma_max;
    let mut null_cols = Vec::new();
    for &i in &order {
        if sv[i] > tol && sigma_max > 0.0 {
            let coef = u.column(i).dot(phi) / sv[i];
            solution += v_t.row(i).transpose() * coef;
            rank += 1;
            sigma_min = sv[i];
        } else {
            null_cols.push(v_t.row(i).transpose());
        }
    }
    let null_space = if null_cols.is_empty() {
        DMatrix::zeros(q, 0)
    } else {
        DMatrix::from_columns(&null_cols)
    };
    let condition_number = if rank == 0 {
        f64::INFINITY
    } else {
        sigma_max / sigma_min
    };
    Ok(LeastSquares {
        solution,
        rank,
        condition_number,
        null_space,
    })
}

/// Least-squares solve requiring full column rank; returns `(z, cond(Θ))`.
pub fn least_squares_min_norm(
    theta: &DMatrix<f64>,
    phi: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let ls = least_squares_truncated(theta, phi)?;
    if ls.rank < theta.ncols() {
        return Err(Error::RankDeficient {
            required: theta.ncols(),
            achieved: ls.rank,
        });
    }
    Ok((ls.solution, ls.condition_number))
}
