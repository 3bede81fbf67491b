//! Data-driven policy iteration: the gain is learned from [`DataMatrices`]
//! alone, never from `(A, B)`.

use std::fmt::Write as _;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::{check_rank, DataMatrices, Mode};
use crate::error::{Error, Result};
use crate::numerics::{identity, kron, least_squares_truncated, symmetrize, unvec, vec, CostSpec};
use crate::textfmt::fmt_sig;

/// Eigenvalue floor below which an extracted `P` is rejected.
pub const P_EIGEN_FLOOR: f64 = -1e-8;
/// Largest null-space weight on the gain block still counted as identifiable.
pub const GAIN_NULL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iterate {
    /// Value matrix of the evaluated gain.
    pub p: DMatrix<f64>,
    /// Gain that was evaluated.
    pub k: DMatrix<f64>,
    /// Improved gain produced by this step.
    pub k_next: DMatrix<f64>,
    /// `‖P_k − P_{k−1}‖_F`; absent on the first step.
    pub p_change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainResult {
    pub k_final: DMatrix<f64>,
    pub p_final: DMatrix<f64>,
    /// Learned `BᵀP` block (camouflage-aware learner only).
    pub btp_final: Option<DMatrix<f64>>,
    pub iterates: Vec<Iterate>,
    pub converged: bool,
    pub condition_numbers: Vec<f64>,
    pub mode: Mode,
}

/// Defaults for the stopping rule.
pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 30;

/// Policy iteration on uncamouflaged data.
pub fn nominal_rl(
    d: &DataMatrices,
    cost: &CostSpec,
    k0: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<GainResult> {
    iterate(d, cost, k0, tol, max_iter, None, Mode::Nominal)
}

/// Policy iteration on camouflaged data: the `x⊗ψ` block carries the
/// coupling, with `BᵀP_k` as an extra unknown, so the gain targets the true
/// plant.
pub fn arrl(
    d: &DataMatrices,
    cost: &CostSpec,
    k0: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<GainResult> {
    let psi = d.mxpsi.as_ref().ok_or(Error::MissingPsi)?;
    if psi.amax() == 0.0 {
        warn!("camouflage block is identically zero; learning on the nominal blocks only");
        return iterate(d, cost, k0, tol, max_iter, None, Mode::Arrl);
    }
    iterate(d, cost, k0, tol, max_iter, Some(psi), Mode::Arrl)
}

fn iterate(
    d: &DataMatrices,
    cost: &CostSpec,
    k0: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
    psi: Option<&DMatrix<f64>>,
    mode: Mode,
) -> Result<GainResult> {
    let (n, m) = (d.n, d.m);
    if cost.n() != n || cost.m() != m {
        return Err(Error::invalid(
            "cost weights do not match the data dimensions",
        ));
    }
    if k0.shape() != (m, n) {
        return Err(Error::invalid(format!("K0 must be {m}×{n}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::invalid("tol and max_iter must be positive"));
    }
    let rank = check_rank(d, Mode::Nominal);
    if !rank.satisfied {
        return Err(Error::RankDeficient {
            required: rank.required,
            achieved: rank.achieved,
        });
    }

    let l = d.windows();
    let (nn, nm) = (n * n, n * m);
    let cols = nn + nm + psi.map_or(0, |_| nm);
    let r = cost.r();
    let i_n = identity(n);
    let xu_block = &d.mxu0 * kron(&i_n, r) * -2.0;

    let mut theta = DMatrix::zeros(l, cols);
    theta.columns_mut(0, nn).copy_from(&d.nxx);
    if let Some(p) = psi {
        theta.columns_mut(nn + nm, nm).copy_from(&(p * -2.0));
    }

    let mut k = k0.clone();
    let mut iterates: Vec<Iterate> = Vec::new();
    let mut condition_numbers = Vec::new();
    let mut btp = None;
    let mut converged = false;
    for step in 0..max_iter {
        let kr = k.transpose() * r;
        let gain_block = &d.mxx * kron(&i_n, &kr) * -2.0 + &xu_block;
        theta.columns_mut(nn, nm).copy_from(&gain_block);
        let phi: DVector<f64> = -(&d.mxx * vec(&(cost.q() + &kr * &k)));

        let ls = least_squares_truncated(&theta, &phi)?;
        let k_weight = if ls.null_space.ncols() > 0 {
            ls.null_space.rows(nn, nm).amax()
        } else {
            0.0
        };
        if k_weight > GAIN_NULL_TOL {
            return Err(Error::RankDeficient {
                required: cols,
                achieved: ls.rank,
            });
        }
        condition_numbers.push(ls.condition_number);

        let p = symmetrize(&unvec(&ls.solution.as_slice()[..nn], n, n));
        let min_eig = p.clone().symmetric_eigen().eigenvalues.min();
        if min_eig < P_EIGEN_FLOOR {
            return Err(Error::NonPositiveP {
                min_eigenvalue: min_eig,
            });
        }
        let k_next = unvec(&ls.solution.as_slice()[nn..nn + nm], m, n);
        if psi.is_some() {
            btp = Some(unvec(&ls.solution.as_slice()[nn + nm..], m, n));
        }
        let p_change = iterates.last().map(|it| (&p - &it.p).norm());
        debug!(
            "iteration {step}: rank {}, cond {:.3e}, |dP| {:?}",
            ls.rank, ls.condition_number, p_change
        );
        iterates.push(Iterate {
            p,
            k: k.clone(),
            k_next: k_next.clone(),
            p_change,
        });
        k = k_next;
        if p_change.is_some_and(|c| c < tol) {
            converged = true;
            break;
        }
    }

    let last = iterates.last().expect("at least one iteration");
    let result = GainResult {
        k_final: last.k_next.clone(),
        p_final: last.p.clone(),
        btp_final: btp,
        iterates: iterates.clone(),
        converged,
        condition_numbers,
        mode,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::LearnerNoConvergence(Box::new(result)))
    }
}

/// Text and CSV convergence summary of a learning run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    /// `key = value` lines.
    pub text: String,
    /// `iteration,p_change,gain_error,condition_number`.
    pub csv: String,
    /// `‖K_final − K*‖_F / ‖K*‖_F` when an oracle gain is supplied.
    pub final_relative_gain_error: Option<f64>,
}

pub fn run_iteration_report(result: &GainResult, oracle: Option<&DMatrix<f64>>) -> IterationReport {
    let rel = |k: &DMatrix<f64>| oracle.map(|o| (k - o).norm() / o.norm().max(f64::MIN_POSITIVE));
    let final_rel = rel(&result.k_final);

    let mut text = String::new();
    let mode = match result.mode {
        Mode::Nominal => "nominal",
        Mode::Arrl => "arrl",
    };
    let _ = writeln!(text, "mode = {mode}");
    let _ = writeln!(text, "converged = {}", result.converged);
    let _ = writeln!(text, "iterations = {}", result.iterates.len());
    let last_change = result.iterates.last().and_then(|it| it.p_change);
    let _ = writeln!(
        text,
        "final_p_change = {}",
        last_change.map_or("n/a".to_string(), |c| fmt_sig(c, 6))
    );
    if let Some(cond) = result.condition_numbers.last() {
        let _ = writeln!(text, "final_condition_number = {}", fmt_sig(*cond, 6));
    }
    if let (Some(e), Some(o)) = (final_rel, oracle) {
        let _ = writeln!(text, "final_relative_gain_error = {}", fmt_sig(e, 6));
        let _ = writeln!(
            text,
            "final_max_abs_gain_error = {}",
            fmt_sig((&result.k_final - o).amax(), 6)
        );
    }
    let tail: Vec<String> = result
        .iterates
        .iter()
        .filter_map(|it| it.p_change)
        .map(|c| fmt_sig(c, 3))
        .collect();
    let _ = writeln!(text, "p_change_trace = {}", tail.join(" "));

    let mut csv = String::from("iteration,p_change,gain_error,condition_number\n");
    for (i, it) in result.iterates.iter().enumerate() {
        let change = it.p_change.map_or(String::new(), |c| fmt_sig(c, 12));
        let err = rel(&it.k_next).map_or(String::new(), |e| fmt_sig(e, 12));
        let cond = result
            .condition_numbers
            .get(i)
            .map_or(String::new(), |c| fmt_sig(*c, 12));
        let _ = writeln!(csv, "{},{change},{err},{cond}", i + 1);
    }
    IterationReport {
        text,
        csv,
        final_relative_gain_error: final_rel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_data_matrices, Quadrature};
    use crate::numerics::kleinman_solve;
    use crate::plant::{
        make_sum_of_sinusoids, simulate, CamouflageGain, CamouflageMap, Channels, LtiModel,
        SimOptions,
    };

    fn scalar_setup() -> (LtiModel, CostSpec) {
        let one = || DMatrix::from_element(1, 1, 1.0);
        (
            LtiModel::new(-one(), one()).unwrap(),
            CostSpec::new(one(), one()).unwrap(),
        )
    }

    fn scalar_data(camouflage: Option<&CamouflageMap>) -> DataMatrices {
        let (model, _) = scalar_setup();
        let expl = make_sum_of_sinusoids(21, 1, 10, 1.0, (0.5, 30.0)).unwrap();
        let ch = Channels {
            exploration: Some(&expl),
            camouflage,
            ..Default::default()
        };
        let log = simulate(
            &model,
            &ch,
            &DVector::from_element(1, 0.5),
            &SimOptions::new(2.0, 0.01),
        )
        .unwrap();
        build_data_matrices(&log, 0.05, 40, camouflage.is_some(), Quadrature::Auto).unwrap()
    }

    #[test]
    fn scalar_nominal_matches_closed_form() {
        let (_, cost) = scalar_setup();
        let res = nominal_rl(&scalar_data(None), &cost, &DMatrix::zeros(1, 1), 1e-10, 30).unwrap();
        assert!(res.converged);
        assert!((res.k_final[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-4);
        assert!(res.btp_final.is_none());
        for it in &res.iterates {
            assert_eq!(it.p, it.p.transpose());
        }
    }

    #[test]
    fn scalar_arrl_recovers_true_gain() {
        let (model, cost) = scalar_setup();
        let camo = CamouflageMap::with_tight_bound(
            CamouflageGain::SinCos {
                scale: 0.3,
                offset: 0.02,
            },
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let d = scalar_data(Some(&camo));
        let res = arrl(&d, &cost, &DMatrix::zeros(1, 1), 1e-10, 30).unwrap();
        let oracle = kleinman_solve(&model, &cost, &DMatrix::zeros(1, 1), 1e-12, 50).unwrap();
        assert!((&res.k_final - oracle.gain(&model, &cost)).amax() < 1e-4);
        let btp = res.btp_final.as_ref().unwrap();
        assert!((btp - model.b().transpose() * &res.p_final).amax() < 1e-4);
        // nominal on camouflaged data learns the wrong plant
        let wrong = nominal_rl(&d, &cost, &DMatrix::zeros(1, 1), 1e-10, 30).unwrap();
        assert!((&wrong.k_final - oracle.gain(&model, &cost)).amax() > 1e-2);
    }

    #[test]
    fn zero_camouflage_block_reproduces_nominal() {
        let (_, cost) = scalar_setup();
        let mut d = scalar_data(None);
        let nominal = nominal_rl(&d, &cost, &DMatrix::zeros(1, 1), 1e-10, 30).unwrap();
        assert!(matches!(
            arrl(&d, &cost, &DMatrix::zeros(1, 1), 1e-10, 30),
            Err(Error::MissingPsi)
        ));
        d.mxpsi = Some(DMatrix::zeros(d.windows(), 1));
        let padded = arrl(&d, &cost, &DMatrix::zeros(1, 1), 1e-10, 30).unwrap();
        assert_eq!(nominal.iterates, padded.iterates);
    }

    #[test]
    fn iteration_cap_surfaces_partial_result() {
        let (_, cost) = scalar_setup();
        match nominal_rl(&scalar_data(None), &cost, &DMatrix::zeros(1, 1), 1e-300, 3) {
            Err(Error::LearnerNoConvergence(partial)) => {
                assert_eq!(partial.iterates.len(), 3);
                assert!(!partial.converged);
                let report = run_iteration_report(&partial, None);
                assert!(report.text.contains("converged = false"));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn unexcited_data_is_rank_deficient() {
        let (model, cost) = scalar_setup();
        let log = simulate(
            &model,
            &Channels::default(),
            &DVector::from_element(1, 1.0),
            &SimOptions::new(1.0, 0.01),
        )
        .unwrap();
        let d = build_data_matrices(&log, 0.01, 50, false, Quadrature::Auto).unwrap();
        assert!(matches!(
            nominal_rl(&d, &cost, &DMatrix::zeros(1, 1), 1e-8, 30),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn report_lists_oracle_error() {
        let (model, cost) = scalar_setup();
        let res = nominal_rl(&scalar_data(None), &cost, &DMatrix::zeros(1, 1), 1e-10, 30).unwrap();
        let oracle = kleinman_solve(&model, &cost, &DMatrix::zeros(1, 1), 1e-12, 50)
            .unwrap()
            .gain(&model, &cost);
        let rep = run_iteration_report(&res, Some(&oracle));
        assert!(rep.final_relative_gain_error.unwrap() < 1e-4);
        assert!(rep.text.contains("final_relative_gain_error"));
        assert_eq!(rep.csv.lines().count(), res.iterates.len() + 1);
        assert_eq!(rep, run_iteration_report(&res, Some(&oracle)));
    }
}
