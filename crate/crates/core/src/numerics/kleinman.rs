use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    ensure_finite, is_positive_definite, is_positive_semidefinite, is_symmetric, solve_lyapunov,
    spectral_abscissa, HURWITZ_MARGIN,
};
use crate::error::{Error, Result};
use crate::plant::LtiModel;

/// Quadratic cost weights `∫ xᵀQx + uᵀRu dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl CostSpec {
    /// `q` must be symmetric PSD and `r` symmetric PD.
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        ensure_finite(&q, "Q")?;
        ensure_finite(&r, "R")?;
        if !is_symmetric(&q, 1e-12) || !is_positive_semidefinite(&q) {
            return Err(Error::invalid("Q must be symmetric positive semidefinite"));
        }
        if !is_symmetric(&r, 1e-12) || !is_positive_definite(&r) {
            return Err(Error::invalid("R must be symmetric positive definite"));
        }
        Ok(Self { q, r })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn r_inverse(&self) -> DMatrix<f64> {
        // R is SPD by construction
        self.r
            .clone()
            .cholesky()
            .expect("R is positive definite")
            .inverse()
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }
}

/// Iterate history of the model-based Newton–Kleinman solve.
#[derive(Debug, Clone)]
pub struct KleinmanTrace {
    /// `(P_k, K_k)` where `P_k` evaluates `K_k`.
    pub iterates: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    pub converged: bool,
    /// ARE residual of the final `P`, Frobenius norm.
    pub final_residual: f64,
}

impl KleinmanTrace {
    pub fn p(&self) -> &DMatrix<f64> {
        &self.iterates.last().expect("non-empty trace").0
    }

    /// Gain implied by the final value matrix, `R⁻¹BᵀP`.
    pub fn gain(&self, model: &LtiModel, cost: &CostSpec) -> DMatrix<f64> {
        cost.r_inverse() * model.b().transpose() * self.p()
    }
}

/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F`.
pub fn are_residual(model: &LtiModel, cost: &CostSpec, p: &DMatrix<f64>) -> f64 {
    let a = model.a();
    let b = model.b();
    let res = a.transpose() * p + p * a - p * b * cost.r_inverse() * b.transpose() * p + cost.q();
    res.norm()
}

/// Newton–Kleinman policy iteration on the true model: policy evaluation by
/// Lyapunov solve, then `K_{k+1} = R⁻¹BᵀP_k`, until `‖P_k − P_{k−1}‖_F < tol`.
pub fn kleinman_solve(
    model: &LtiModel,
    cost: &CostSpec,
    k0: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<KleinmanTrace> {
    let (n, m) = (model.n(), model.m());
    if cost.n() != n || cost.m() != m || k0.shape() != (m, n) {
        return Err(Error::invalid("kleinman_solve: dimension mismatch"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("kleinman_solve: tol must be positive"));
    }
    let a = model.a();
    let b = model.b();
    let abscissa = spectral_abscissa(&(a - b * k0))?;
    if abscissa >= -HURWITZ_MARGIN {
        return Err(Error::NotStabilizing { abscissa });
    }

    let r_inv_bt = cost.r_inverse() * b.transpose();
    let mut iterates: Vec<(DMatrix<f64>, DMatrix<f64>)> = Vec::new();
    let mut k = k0.clone();
    let mut last_change = f64::INFINITY;
    for _ in 0..max_iter {
        let a_k = a - b * &k;
        let w = cost.q() + k.transpose() * cost.r() * &k;
        let p = solve_lyapunov(&a_k, &w)?;
        let k_next = &r_inv_bt * &p;
        if let Some((p_prev, _)) = iterates.last() {
            last_change = (&p - p_prev).norm();
        }
        iterates.push((p, k));
        k = k_next;
        if last_change < tol {
            let final_residual = are_residual(model, cost, &iterates.last().unwrap().0);
            if final_residual > 1e-6 {
                return Err(Error::NoConvergence {
                    iterations: iterates.len(),
                    last_change: final_residual,
                });
            }
            return Ok(KleinmanTrace {
                iterates,
                converged: true,
                final_residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: iterates.len(),
        last_change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::identity;

    fn scalar(a: f64, b: f64) -> LtiModel {
        LtiModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
        )
        .unwrap()
    }

    fn unit_cost(n: usize, m: usize) -> CostSpec {
        CostSpec::new(identity(n), identity(m)).unwrap()
    }

    #[test]
    fn scalar_riccati_closed_form() {
        // P² + 2P − 1 = 0  →  P = √2 − 1
        let model = scalar(-1.0, 1.0);
        let cost = unit_cost(1, 1);
        let trace = kleinman_solve(&model, &cost, &DMatrix::zeros(1, 1), 1e-12, 50).unwrap();
        let expected = 2f64.sqrt() - 1.0;
        assert!((trace.p()[(0, 0)] - expected).abs() < 1e-10);
        assert!((trace.gain(&model, &cost)[(0, 0)] - expected).abs() < 1e-10);
        assert!(trace.final_residual <= 1e-6);
    }

    #[test]
    fn zero_input_reduces_to_lyapunov() {
        let model = LtiModel::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let cost = unit_cost(2, 1);
        let trace = kleinman_solve(&model, &cost, &DMatrix::zeros(1, 2), 1e-12, 10).unwrap();
        for (_, k) in &trace.iterates {
            assert_eq!(k.amax(), 0.0);
        }
        let p_lyap = solve_lyapunov(model.a(), cost.q()).unwrap();
        assert!((trace.p() - p_lyap).amax() < 1e-12);
    }

    #[test]
    fn rejects_destabilizing_initial_gain() {
        let model = scalar(1.0, 1.0);
        let cost = unit_cost(1, 1);
        assert!(matches!(
            kleinman_solve(&model, &cost, &DMatrix::zeros(1, 1), 1e-9, 20),
            Err(Error::NotStabilizing { .. })
        ));
        assert!(kleinman_solve(&model, &cost, &DMatrix::from_element(1, 1, 2.0), 1e-9, 20).is_ok());
    }

    #[test]
    fn cost_spec_validation() {
        assert!(CostSpec::new(-identity(2), identity(1)).is_err());
        assert!(CostSpec::new(identity(2), DMatrix::zeros(1, 1)).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(CostSpec::new(asym, identity(1)).is_err());
        assert!(CostSpec::new(DMatrix::zeros(2, 2), identity(1)).is_ok());
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let model = scalar(-1.0, 1.0);
        let cost = unit_cost(1, 1);
        assert!(matches!(
            kleinman_solve(&model, &cost, &DMatrix::zeros(1, 1), 1e-300, 3),
            Err(Error::NoConvergence { .. })
        ));
    }
}
