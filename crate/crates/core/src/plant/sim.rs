use nalgebra::{DMatrix, DVector};

use super::{CamouflageMap, ExplorationSignal, IntervalIntegrals, LtiModel, TrajectoryLog};
use crate::adversary::AttackPlan;
use crate::error::{Error, Result};
use crate::numerics::{exp_decay_bound, kron_vec, spectral_norm};

/// One classical Runge–Kutta step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(f: F, t: f64, y: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Optional signal paths around the plant. Everything absent means an
/// autonomous open-loop run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Channels<'a> {
    /// Feedback `u = −K·x̄`.
    pub controller_gain: Option<&'a DMatrix<f64>>,
    pub exploration: Option<&'a ExplorationSignal>,
    pub camouflage: Option<&'a CamouflageMap>,
    pub attack: Option<&'a AttackPlan>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub start_time: f64,
    pub horizon: f64,
    /// Logging step.
    pub dt: f64,
    /// RK4 steps per logging step.
    pub substeps: usize,
    /// Sup-norm bound on `x` beyond which the run is aborted.
    pub blowup: f64,
    /// Accumulate the exact per-interval regression integrals.
    pub record_integrals: bool,
}

impl SimOptions {
    pub fn new(horizon: f64, dt: f64) -> Self {
        Self {
            start_time: 0.0,
            horizon,
            dt,
            substeps: 10,
            blowup: 1e6,
            record_integrals: true,
        }
    }

    pub fn starting_at(mut self, t0: f64) -> Self {
        self.start_time = t0;
        self
    }

    pub fn without_integrals(mut self) -> Self {
        self.record_integrals = false;
        self
    }
}

struct Signals {
    xbar: DVector<f64>,
    u0: DVector<f64>,
    u: DVector<f64>,
    psi: DVector<f64>,
    zeta: DVector<f64>,
}

struct Layout {
    n: usize,
    m: usize,
    integrals: bool,
}

impl Layout {
    fn len(&self) -> usize {
        let (n, m) = (self.n, self.m);
        if self.integrals {
            2 * n + n * n + 2 * n * m + n + m
        } else {
            2 * n
        }
    }
}

/// Simulates `ẋ = Ax + B(u + ψ)` with `u = −K·x̄ + u₀ + ζ`, `ψ = f(t)·C·x`
/// and `x̄ = x − x̃`, where the attacker's `x̃˙ = Ãx̃ + B̃ζ` is integrated on
/// the same RK4 clock. Samples are logged every `dt`, from `start_time` to
/// `start_time + horizon` inclusive.
pub fn simulate(
    model: &LtiModel,
    channels: &Channels<'_>,
    x0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<TrajectoryLog> {
    let (n, m) = (model.n(), model.m());
    validate(model, channels, x0, opts)?;
    let steps = (opts.horizon / opts.dt).round() as usize;
    let h = opts.dt / opts.substeps as f64;
    let layout = Layout {
        n,
        m,
        integrals: opts.record_integrals,
    };

    let zero_m = DVector::<f64>::zeros(m);
    let signals = |t: f64, x: &DVector<f64>, x_tilde: &DVector<f64>| -> Signals {
        let xbar = x - x_tilde;
        let u0 = channels
            .exploration
            .map_or_else(|| zero_m.clone(), |e| e.eval(t));
        let zeta = channels
            .attack
            .map_or_else(|| zero_m.clone(), |a| a.zeta(t));
        let mut u = &u0 + &zeta;
        if let Some(k) = channels.controller_gain {
            u -= k * &xbar;
        }
        let psi = channels
            .camouflage
            .map_or_else(|| zero_m.clone(), |c| c.psi(t, x));
        Signals {
            xbar,
            u0,
            u,
            psi,
            zeta,
        }
    };

    let rhs = |t: f64, y: &DVector<f64>| -> DVector<f64> {
        let x = y.rows(0, n).into_owned();
        let x_tilde = y.rows(n, n).into_owned();
        let s = signals(t, &x, &x_tilde);
        let mut dy = DVector::zeros(layout.len());
        let dx = model.a() * &x + model.b() * (&s.u + &s.psi);
        dy.rows_mut(0, n).copy_from(&dx);
        if let Some(attack) = channels.attack {
            let id = attack.identified();
            let dxt = &id.a_tilde * &x_tilde + &id.b_tilde * &s.zeta;
            dy.rows_mut(n, n).copy_from(&dxt);
        }
        if layout.integrals {
            let mut at = 2 * n;
            for block in [
                kron_vec(&s.xbar, &s.xbar),
                kron_vec(&s.xbar, &s.u),
                kron_vec(&s.xbar, &s.psi),
                s.xbar.clone(),
                s.u.clone(),
            ] {
                dy.rows_mut(at, block.len()).copy_from(&block);
                at += block.len();
            }
        }
        dy
    };

    let mut log = TrajectoryLog::empty(opts.dt);
    log.has_camouflage = channels.camouflage.is_some();
    let mut ints = IntervalIntegrals::default();

    let mut y = DVector::zeros(layout.len());
    y.rows_mut(0, n).copy_from(x0);
    for k in 0..=steps {
        let t_k = opts.start_time + k as f64 * opts.dt;
        let x = y.rows(0, n).into_owned();
        let x_tilde = y.rows(n, n).into_owned();
        let s = signals(t_k, &x, &x_tilde);
        log.t.push(t_k);
        log.x.push(x);
        log.u0.push(s.u0);
        log.u.push(s.u);
        log.psi.push(s.psi);
        log.xbar.push(s.xbar);
        log.zeta.push(s.zeta);
        if k == steps {
            break;
        }

        for j in 0..opts.substeps {
            let t = t_k + j as f64 * h;
            y = rk4_step(rhs, t, &y, h);
            let norm = y.rows(0, n).amax();
            if !(norm <= opts.blowup) {
                return Err(Error::Divergence { time: t + h, norm });
            }
        }

        if layout.integrals {
            let mut at = 2 * n;
            let mut take = |len: usize| {
                let v = y.rows(at, len).into_owned();
                at += len;
                v
            };
            ints.xx.push(take(n * n));
            ints.xu.push(take(n * m));
            ints.xpsi.push(take(n * m));
            ints.x.push(take(n));
            ints.u.push(take(m));
            let tail = y.len() - 2 * n;
            y.rows_mut(2 * n, tail).fill(0.0);
        }
    }
    if layout.integrals {
        log.integrals = Some(ints);
    }
    Ok(log)
}

fn validate(
    model: &LtiModel,
    channels: &Channels<'_>,
    x0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<()> {
    let (n, m) = (model.n(), model.m());
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::invalid("dt must be positive"));
    }
    if !(opts.horizon >= opts.dt * (1.0 - 1e-9)) || !opts.horizon.is_finite() {
        return Err(Error::invalid("horizon must be at least dt"));
    }
    let steps = opts.horizon / opts.dt;
    if (steps - steps.round()).abs() > 1e-6 {
        return Err(Error::invalid("horizon must be a whole number of dt steps"));
    }
    if opts.substeps == 0 || !(opts.blowup > 0.0) {
        return Err(Error::invalid(
            "substeps and blow-up bound must be positive",
        ));
    }
    if x0.len() != n || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("x0 must be a finite {n}-vector")));
    }
    if let Some(k) = channels.controller_gain {
        if k.shape() != (m, n) {
            return Err(Error::invalid(format!("controller gain must be {m}×{n}")));
        }
    }
    if let Some(e) = channels.exploration {
        if e.m() != m {
            return Err(Error::invalid(format!(
                "exploration must have {m} channels"
            )));
        }
    }
    if let Some(c) = channels.camouflage {
        if c.m() != m || c.n() != n {
            return Err(Error::invalid(format!("camouflage mixing must be {m}×{n}")));
        }
    }
    if let Some(a) = channels.attack {
        let id = a.identified();
        if id.a_tilde.shape() != (n, n) || id.b_tilde.shape() != (n, m) || a.zeta_channels() != m {
            return Err(Error::invalid(
                "attack model dimensions do not match the plant",
            ));
        }
        let end = opts.start_time + opts.horizon;
        if a.onset() < opts.start_time || a.onset() > end {
            return Err(Error::invalid(format!(
                "attack onset {} outside the simulated span [{}, {end}]",
                a.onset(),
                opts.start_time
            )));
        }
    }
    Ok(())
}

/// Input-to-state bound `k‖x₀‖ + (k‖B‖/λ)(sup‖u₀‖ + sup‖ψ‖)` for the
/// closed loop `A − BK`, with `(k, λ)` from its eigen-decomposition.
pub fn iss_bound(
    closed_loop: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x0_norm: f64,
    sup_u0: f64,
    sup_psi: f64,
) -> Result<f64> {
    let env = exp_decay_bound(closed_loop)?;
    Ok(env.k * x0_norm + env.k * spectral_norm(b) / env.lambda * (sup_u0 + sup_psi))
}
