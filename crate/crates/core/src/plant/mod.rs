//! The true plant `ẋ = Ax + B(u + ψ)`, its excitation and camouflage
//! channels, and the fixed-step simulator that produces trajectory logs.

mod camouflage;
mod exploration;
mod log;
mod sim;

pub use camouflage::{CamouflageGain, CamouflageMap};
pub use exploration::{make_sum_of_sinusoids, ExplorationSignal, Tone};
pub use log::{compute_cost, IntervalIntegrals, TrajectoryLog};
pub use sim::{iss_bound, rk4_step, simulate, Channels, SimOptions};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{eigenvalues, ensure_finite, identity, CostSpec};

/// Continuous-time LTI plant `(A, B)`, stabilizable by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LtiModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        ensure_finite(&a, "A")?;
        ensure_finite(&b, "B")?;
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::invalid(format!(
                "A must be square, got {:?}",
                a.shape()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::invalid(format!(
                "B must be {}×m, got {:?}",
                a.nrows(),
                b.shape()
            )));
        }
        if !is_stabilizable(&a, &b)? {
            return Err(Error::invalid("(A, B) is not stabilizable"));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `A − BK`.
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a - &self.b * k
    }
}

/// PBH test: `rank [A − λI, B] = n` for every eigenvalue with `Re λ ≥ 0`.
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<bool> {
    let n = a.nrows();
    let m = b.ncols();
    let scale = a.amax().max(b.amax()).max(1.0);
    for lam in eigenvalues(a)? {
        if lam.re < -1e-10 * scale {
            continue;
        }
        let pbh = DMatrix::<Complex<f64>>::from_fn(n, n + m, |i, j| {
            if j < n {
                let diag = if i == j { lam } else { Complex::new(0.0, 0.0) };
                Complex::new(a[(i, j)], 0.0) - diag
            } else {
                Complex::new(b[(i, j - n)], 0.0)
            }
        });
        let sv = pbh.singular_values();
        let tol = sv.max() * (n + m) as f64 * f64::EPSILON * 1e3;
        if sv.iter().filter(|s| **s > tol).count() < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Six-agent consensus drift matrix (weighted Laplacian, `A·1 = 0`).
pub fn consensus_drift() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        6,
        6,
        &[
            -5.0, 2.0, 3.0, 0.0, 0.0, 0.0, //
            2.0, -6.0, 0.0, 0.0, 1.0, 3.0, //
            3.0, 0.0, -5.0, 2.0, 0.0, 0.0, //
            0.0, 0.0, 2.0, -2.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, -4.0, 3.0, //
            0.0, 3.0, 0.0, 0.0, 3.0, -6.0,
        ],
    )
}

pub fn consensus_initial_state() -> DVector<f64> {
    DVector::from_vec(vec![0.3, 0.5, 0.4, 0.8, 0.9, 0.6])
}

/// Actuator gain under which [`reference_gain_table`] is the optimal gain.
pub const REFERENCE_INPUT_GAIN: f64 = 5.0;

/// Six-agent benchmark with `B = I₆`, `Q = 10·I₆`, `R = I₆`.
pub fn multi_agent_benchmark() -> (LtiModel, CostSpec, DVector<f64>) {
    multi_agent_benchmark_with_input_gain(1.0)
}

/// Six-agent benchmark with `B = b·I₆`.
pub fn multi_agent_benchmark_with_input_gain(b: f64) -> (LtiModel, CostSpec, DVector<f64>) {
    let model =
        LtiModel::new(consensus_drift(), identity(6) * b).expect("benchmark plant is valid");
    let cost = CostSpec::new(identity(6) * 10.0, identity(6)).expect("benchmark cost is valid");
    (model, cost, consensus_initial_state())
}

/// Reference LQR gain of the six-agent benchmark (four decimals), optimal for
/// `B = 5·I₆`, `Q = 10·I₆`, `R = I₆`.
pub fn reference_gain_table() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        6,
        6,
        &[
            2.3868, 0.2731, 0.4239, 0.0342, 0.0125, 0.0318, //
            0.2731, 2.2564, 0.0319, 0.0010, 0.1899, 0.4100, //
            0.4239, 0.0319, 2.3884, 0.3161, 0.0004, 0.0017, //
            0.0342, 0.0010, 0.3161, 2.8112, -0.0001, -0.0001, //
            0.0125, 0.1899, 0.0004, -0.0001, 2.5188, 0.4408, //
            0.0318, 0.4100, 0.0017, -0.0001, 0.4408, 2.2781,
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{kleinman_solve, spectral_abscissa};

    #[test]
    fn consensus_rows_sum_to_zero() {
        let a = consensus_drift();
        let ones = DVector::from_element(6, 1.0);
        assert_eq!((&a * ones).amax(), 0.0);
        assert_eq!(a, a.transpose());
        assert_eq!(a[(0, 0)], -5.0);
        assert_eq!(a[(1, 5)], 3.0);
    }

    #[test]
    fn consensus_spectrum() {
        let mut eig: Vec<f64> = eigenvalues(&consensus_drift())
            .unwrap()
            .iter()
            .map(|z| z.re)
            .collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected = [-10.00, -8.27, -6.00, -3.00, -0.72, 0.00];
        for (got, want) in eig.iter().zip(expected) {
            assert!((got - want).abs() < 0.01, "{got} vs {want}");
        }
        assert!(spectral_abscissa(&consensus_drift()).unwrap().abs() < 1e-8);
    }

    #[test]
    fn model_validation() {
        assert!(LtiModel::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
        assert!(LtiModel::new(DMatrix::identity(2, 2), DMatrix::zeros(3, 1)).is_err());
        // unstable mode the input cannot reach
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(LtiModel::new(a.clone(), b).is_err());
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(LtiModel::new(a, b).is_ok());
        // stable plant with no input is fine
        assert!(LtiModel::new(-DMatrix::identity(2, 2), DMatrix::zeros(2, 1)).is_ok());
    }

    #[test]
    fn reference_table_is_optimal_at_reference_input_gain() {
        let (model, cost, _) = multi_agent_benchmark_with_input_gain(REFERENCE_INPUT_GAIN);
        let trace = kleinman_solve(&model, &cost, &identity(6), 1e-12, 50).unwrap();
        let k = trace.gain(&model, &cost);
        assert!((k - reference_gain_table()).amax() < 1e-4);
    }

    #[test]
    fn unit_input_gain_optimum_differs_from_reference_table() {
        let (model, cost, _) = multi_agent_benchmark();
        let trace = kleinman_solve(&model, &cost, &identity(6), 1e-12, 50).unwrap();
        let k = trace.gain(&model, &cost);
        assert!((k[(0, 0)] - 1.3353).abs() < 1e-4);
        assert!((k - reference_gain_table()).amax() > 0.5);
    }
}
