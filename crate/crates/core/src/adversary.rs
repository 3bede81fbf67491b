//! The two-act adversary: eavesdropping identification from exploration
//! data, then a covert attack that hides its own effect from the sensors.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{least_squares_truncated, logm};
use crate::plant::{rk4_step, CamouflageMap, LtiModel, TrajectoryLog};
use crate::textfmt::matrix_to_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrigin {
    /// Fitted from eavesdropped data.
    Estimated,
    /// The true plant, handed to the attacker.
    WorstCaseExact,
    /// The plant as distorted by a frozen camouflage gain.
    WorstCaseCamouflaged,
}

impl ModelOrigin {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelOrigin::Estimated => "estimated",
            ModelOrigin::WorstCaseExact => "worst_case_exact",
            ModelOrigin::WorstCaseCamouflaged => "worst_case_camouflaged",
        }
    }
}

/// The attacker's surrogate `(Ã, B̃)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedModel {
    pub a_tilde: DMatrix<f64>,
    pub b_tilde: DMatrix<f64>,
    /// RMS residual of the fit (zero for handed-over models).
    pub fit_residual: f64,
    pub mode: ModelOrigin,
}

impl IdentifiedModel {
    pub fn n(&self) -> usize {
        self.a_tilde.nrows()
    }

    pub fn m(&self) -> usize {
        self.b_tilde.ncols()
    }

    /// `(‖Ã − A‖_F / ‖A‖_F, ‖B̃ − B‖_F / ‖B‖_F)`.
    pub fn relative_error(&self, truth: &LtiModel) -> (f64, f64) {
        let rel = |est: &DMatrix<f64>, tru: &DMatrix<f64>| {
            (est - tru).norm() / tru.norm().max(f64::MIN_POSITIVE)
        };
        (rel(&self.a_tilde, truth.a()), rel(&self.b_tilde, truth.b()))
    }

    /// Writes `<stem>_a.csv` and `<stem>_b.csv`, each headed by a `# mode:` line.
    pub fn write_files(&self, dir: &Path, stem: &str) -> Result<()> {
        for (suffix, mat) in [("a", &self.a_tilde), ("b", &self.b_tilde)] {
            let text = format!("# mode: {}\n{}", self.mode.as_str(), matrix_to_csv(mat));
            fs::write(dir.join(format!("{stem}_{suffix}.csv")), text)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentificationMethod {
    /// `x̄(t_{k+1}) − x̄(t_k) = A∫x̄ + B∫u` over every log interval.
    #[default]
    IntegralRegression,
    /// One-step discrete fit followed by a matrix logarithm of the augmented map.
    DiscreteLog,
}

/// Fits `(Ã, B̃)` from the measured state and the applied input of `log`.
/// The camouflage channel is invisible to the attacker.
pub fn eavesdrop_identify(
    log: &TrajectoryLog,
    method: IdentificationMethod,
) -> Result<IdentifiedModel> {
    let (n, m) = (log.n(), log.m());
    let pairs = log.len().saturating_sub(1);
    if pairs < n + m {
        return Err(Error::InsufficientData {
            needed: n + m + 1,
            available: log.len(),
        });
    }
    // rows: regressors z_k; targets: y_k, so that y_kᵀ ≈ z_kᵀ·[A B]ᵀ
    let mut z = DMatrix::zeros(pairs, n + m);
    let mut y = DMatrix::zeros(pairs, n);
    for k in 0..pairs {
        let (zx, zu, target) = match method {
            IdentificationMethod::IntegralRegression => {
                let (ix, iu) = match &log.integrals {
                    Some(ints) => (ints.x[k].clone(), ints.u[k].clone()),
                    None => (
                        (&log.xbar[k] + &log.xbar[k + 1]) * (0.5 * log.dt),
                        (&log.u[k] + &log.u[k + 1]) * (0.5 * log.dt),
                    ),
                };
                (ix, iu, &log.xbar[k + 1] - &log.xbar[k])
            }
            IdentificationMethod::DiscreteLog => (
                log.xbar[k].clone(),
                log.u[k].clone(),
                log.xbar[k + 1].clone(),
            ),
        };
        z.view_mut((k, 0), (1, n)).copy_from(&zx.transpose());
        z.view_mut((k, n), (1, m)).copy_from(&zu.transpose());
        y.row_mut(k).copy_from(&target.transpose());
    }

    let mut coef = DMatrix::zeros(n + m, n);
    let mut residual_sq = 0.0;
    for col in 0..n {
        let rhs = y.column(col).into_owned();
        let ls = least_squares_truncated(&z, &rhs)?;
        if ls.rank < n + m {
            return Err(Error::IllConditioned {
                rank: ls.rank,
                required: n + m,
            });
        }
        residual_sq += (&z * &ls.solution - rhs).norm_squared();
        coef.set_column(col, &ls.solution);
    }
    let fit_residual = (residual_sq / (pairs * n) as f64).sqrt();
    let ab = coef.transpose();

    let (a_tilde, b_tilde) = match method {
        IdentificationMethod::IntegralRegression => {
            (ab.columns(0, n).into_owned(), ab.columns(n, m).into_owned())
        }
        IdentificationMethod::DiscreteLog => {
            let mut aug = DMatrix::identity(n + m, n + m);
            aug.view_mut((0, 0), (n, n + m)).copy_from(&ab);
            let cont = logm(&aug)? / log.dt;
            (
                cont.view((0, 0), (n, n)).into_owned(),
                cont.view((0, n), (n, m)).into_owned(),
            )
        }
    };
    Ok(IdentifiedModel {
        a_tilde,
        b_tilde,
        fit_residual,
        mode: ModelOrigin::Estimated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortionSign {
    /// `Ã = A − ε·f(t₀)·B·C`.
    #[default]
    Minus,
    /// `Ã = A + ε·f(t₀)·B·C`.
    Plus,
}

/// Model an attacker ends up with when the camouflage gain is frozen at `t0`
/// and scaled by `eps_sc`; `B̃ = B`.
pub fn worst_case_model(
    model: &LtiModel,
    camouflage: &CamouflageMap,
    t0: f64,
    eps_sc: f64,
    sign: DistortionSign,
) -> Result<IdentifiedModel> {
    if camouflage.n() != model.n() || camouflage.m() != model.m() {
        return Err(Error::invalid(
            "camouflage dimensions do not match the plant",
        ));
    }
    let s = match sign {
        DistortionSign::Minus => -1.0,
        DistortionSign::Plus => 1.0,
    };
    let shift = model.b() * camouflage.mixing() * (s * eps_sc * camouflage.f(t0));
    Ok(IdentifiedModel {
        a_tilde: model.a() + shift,
        b_tilde: model.b().clone(),
        fit_residual: 0.0,
        mode: ModelOrigin::WorstCaseCamouflaged,
    })
}

/// The true plant as the attacker's model.
pub fn exact_model(model: &LtiModel) -> IdentifiedModel {
    IdentifiedModel {
        a_tilde: model.a().clone(),
        b_tilde: model.b().clone(),
        fit_residual: 0.0,
        mode: ModelOrigin::WorstCaseExact,
    }
}

/// Injection waveform, in time since onset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZetaSignal {
    Constant {
        value: f64,
    },
    Sinusoid {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    Ramp {
        slope: f64,
    },
}

impl ZetaSignal {
    pub fn eval(&self, since_onset: f64) -> f64 {
        match *self {
            ZetaSignal::Constant { value } => value,
            ZetaSignal::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * since_onset + phase).sin(),
            ZetaSignal::Ramp { slope } => slope * since_onset,
        }
    }
}

impl Default for ZetaSignal {
    fn default() -> Self {
        ZetaSignal::Constant { value: 1.0 }
    }
}

/// When and how the attacker injects, and the model it compensates with.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    onset: f64,
    zeta: Vec<ZetaSignal>,
    identified: IdentifiedModel,
}

impl AttackPlan {
    pub fn new(onset: f64, zeta: Vec<ZetaSignal>, identified: IdentifiedModel) -> Result<Self> {
        if !(onset >= 0.0 && onset.is_finite()) {
            return Err(Error::invalid("attack onset must be non-negative"));
        }
        if zeta.len() != identified.m() {
            return Err(Error::invalid(format!(
                "need one injection signal per input channel ({}), got {}",
                identified.m(),
                zeta.len()
            )));
        }
        Ok(Self {
            onset,
            zeta,
            identified,
        })
    }

    /// Same waveform on every channel.
    pub fn uniform(onset: f64, zeta: ZetaSignal, identified: IdentifiedModel) -> Result<Self> {
        let m = identified.m();
        Self::new(onset, vec![zeta; m], identified)
    }

    pub fn onset(&self) -> f64 {
        self.onset
    }

    pub fn identified(&self) -> &IdentifiedModel {
        &self.identified
    }

    pub fn zeta_channels(&self) -> usize {
        self.zeta.len()
    }

    /// `ζ(t)`, zero before onset.
    pub fn zeta(&self, t: f64) -> DVector<f64> {
        if t < self.onset {
            return DVector::zeros(self.zeta.len());
        }
        DVector::from_iterator(
            self.zeta.len(),
            self.zeta.iter().map(|z| z.eval(t - self.onset)),
        )
    }
}

/// Internal state of the attacker's model, zero at onset.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerState {
    pub x_tilde: DVector<f64>,
}

impl AttackerState {
    pub fn at_onset(n: usize) -> Self {
        Self {
            x_tilde: DVector::zeros(n),
        }
    }
}

/// Advances `x̃˙ = Ãx̃ + B̃ζ` by one RK4 step with `ζ` held over the step.
/// Returns the new state and the compensation `x̃` subtracted from the sensors.
pub fn covert_attack_step(
    state: &AttackerState,
    identified: &IdentifiedModel,
    zeta: &DVector<f64>,
    t: f64,
    h: f64,
) -> Result<(AttackerState, DVector<f64>)> {
    if state.x_tilde.len() != identified.n() || zeta.len() != identified.m() {
        return Err(Error::invalid(
            "attacker state or injection has the wrong size",
        ));
    }
    let drive = &identified.b_tilde * zeta;
    let f = |_t: f64, x: &DVector<f64>| &identified.a_tilde * x + &drive;
    let next = rk4_step(f, t, &state.x_tilde, h);
    let norm = next.amax();
    if !(norm <= 1e6) {
        return Err(Error::Divergence { time: t + h, norm });
    }
    let compensation = next.clone();
    Ok((AttackerState { x_tilde: next }, compensation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{
        make_sum_of_sinusoids, multi_agent_benchmark, simulate, CamouflageGain, Channels,
        SimOptions,
    };

    fn camo() -> CamouflageMap {
        CamouflageMap::with_tight_bound(
            CamouflageGain::SinCos {
                scale: 0.3,
                offset: 0.02,
            },
            DMatrix::identity(6, 6),
        )
        .unwrap()
    }

    #[test]
    fn worst_case_shift_matches_hand_value() {
        let (model, _, _) = multi_agent_benchmark();
        let id = worst_case_model(&model, &camo(), 0.0, 2.0, DistortionSign::Minus).unwrap();
        let expected = model.a() - DMatrix::identity(6, 6) * 0.612;
        assert!((&id.a_tilde - expected).amax() < 1e-15);
        assert_eq!(&id.b_tilde, model.b());
        let flat = worst_case_model(&model, &camo(), 0.0, 0.0, DistortionSign::Minus).unwrap();
        assert_eq!(&flat.a_tilde, model.a());
        let off = CamouflageMap::new(CamouflageGain::Zero, DMatrix::identity(6, 6), 1.0).unwrap();
        let none = worst_case_model(&model, &off, 0.0, 2.0, DistortionSign::Plus).unwrap();
        assert_eq!(&none.a_tilde, model.a());
    }

    #[test]
    fn zeta_is_zero_before_onset() {
        let (model, _, _) = multi_agent_benchmark();
        let plan = AttackPlan::uniform(5.0, ZetaSignal::default(), exact_model(&model)).unwrap();
        assert_eq!(plan.zeta(4.999).amax(), 0.0);
        assert_eq!(plan.zeta(5.0), DVector::from_element(6, 1.0));
        let ramp = ZetaSignal::Ramp { slope: 2.0 };
        assert!((ramp.eval(0.5) - 1.0).abs() < 1e-15);
        assert!(AttackPlan::new(1.0, vec![ramp], exact_model(&model)).is_err());
    }

    #[test]
    fn zero_injection_keeps_state_at_rest() {
        let (model, _, _) = multi_agent_benchmark();
        let id = exact_model(&model);
        let mut s = AttackerState::at_onset(6);
        for k in 0..100 {
            let (next, comp) =
                covert_attack_step(&s, &id, &DVector::zeros(6), k as f64 * 1e-3, 1e-3).unwrap();
            assert_eq!(comp.amax(), 0.0);
            s = next;
        }
    }

    #[test]
    fn scalar_autonomous_decay_is_identified() {
        let model = LtiModel::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let expl = make_sum_of_sinusoids(4, 1, 5, 0.5, (0.5, 5.0)).unwrap();
        let ch = Channels {
            exploration: Some(&expl),
            ..Default::default()
        };
        let log = simulate(
            &model,
            &ch,
            &DVector::from_element(1, 1.0),
            &SimOptions::new(2.0, 0.01),
        )
        .unwrap();
        for method in [
            IdentificationMethod::IntegralRegression,
            IdentificationMethod::DiscreteLog,
        ] {
            let id = eavesdrop_identify(&log, method).unwrap();
            let tol = if method == IdentificationMethod::DiscreteLog {
                1e-2
            } else {
                1e-9
            };
            assert!(
                (id.a_tilde[(0, 0)] + 1.0).abs() < tol,
                "{method:?}: {}",
                id.a_tilde
            );
        }
    }

    #[test]
    fn unexcited_data_is_ill_conditioned() {
        let (model, _, x0) = multi_agent_benchmark();
        let log = simulate(
            &model,
            &Channels::default(),
            &x0,
            &SimOptions::new(1.0, 0.01),
        )
        .unwrap();
        assert!(matches!(
            eavesdrop_identify(&log, IdentificationMethod::IntegralRegression),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn discrete_log_error_shrinks_with_dt() {
        let model = LtiModel::new(
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let expl = make_sum_of_sinusoids(9, 1, 8, 1.0, (0.3, 3.0)).unwrap();
        let ch = Channels {
            exploration: Some(&expl),
            ..Default::default()
        };
        let x0 = DVector::from_vec(vec![1.0, -1.0]);
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&dt| {
                let log = simulate(&model, &ch, &x0, &SimOptions::new(10.0, dt)).unwrap();
                let id = eavesdrop_identify(&log, IdentificationMethod::DiscreteLog).unwrap();
                id.relative_error(&model).0
            })
            .collect();
        assert!(
            errs[1] <= errs[0] * 0.6 && errs[2] <= errs[1] * 0.6,
            "{errs:?}"
        );
    }
}
