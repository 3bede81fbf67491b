use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ensure_finite, spectral_norm};

/// Scalar time-varying gain `f(t)` of the camouflage coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CamouflageGain {
    /// `scale·(sin t + cos t + offset)`.
    SinCos {
        scale: f64,
        offset: f64,
    },
    Constant {
        value: f64,
    },
    Zero,
}

impl CamouflageGain {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            CamouflageGain::SinCos { scale, offset } => scale * (t.sin() + t.cos() + offset),
            CamouflageGain::Constant { value } => value,
            CamouflageGain::Zero => 0.0,
        }
    }

    /// `sup_t |f(t)|`.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            CamouflageGain::SinCos { scale, offset } => {
                scale.abs() * (std::f64::consts::SQRT_2 + offset.abs())
            }
            CamouflageGain::Constant { value } => value.abs(),
            CamouflageGain::Zero => 0.0,
        }
    }
}

/// State-dependent coupling `ψ = f(t)·C·x` with `‖ψ‖₂ ≤ γ‖x‖₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamouflageMap {
    gain: CamouflageGain,
    mixing: DMatrix<f64>,
    gamma: f64,
}

impl CamouflageMap {
    /// Rejects maps whose worst case `sup|f|·σ_max(C)` exceeds `gamma`.
    pub fn new(gain: CamouflageGain, mixing: DMatrix<f64>, gamma: f64) -> Result<Self> {
        ensure_finite(&mixing, "camouflage mixing matrix")?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("camouflage gamma must be positive"));
        }
        let worst = gain.sup_abs() * spectral_norm(&mixing);
        if worst > gamma * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "camouflage bound violated: sup|f|·σ_max(C) = {worst} > γ = {gamma}"
            )));
        }
        Ok(Self {
            gain,
            mixing,
            gamma,
        })
    }

    /// Map with the tightest admissible `γ = sup|f|·σ_max(C)` (or a tiny
    /// positive value when that is zero).
    pub fn with_tight_bound(gain: CamouflageGain, mixing: DMatrix<f64>) -> Result<Self> {
        let gamma = (gain.sup_abs() * spectral_norm(&mixing)).max(f64::MIN_POSITIVE);
        Self::new(gain, mixing, gamma)
    }

    pub fn gain(&self) -> &CamouflageGain {
        &self.gain
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn m(&self) -> usize {
        self.mixing.nrows()
    }

    pub fn n(&self) -> usize {
        self.mixing.ncols()
    }

    pub fn f(&self, t: f64) -> f64 {
        self.gain.eval(t)
    }

    pub fn psi(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.mixing * x * self.gain.eval(t)
    }

    /// Checks `f(t) ≠ 0` on `[t0, t1]`, sampled at `step` (sign changes count
    /// as zeros).
    pub fn ensure_nonvanishing(&self, t0: f64, t1: f64, step: f64) -> Result<()> {
        let count = ((t1 - t0) / step).ceil().max(1.0) as usize;
        let mut prev = self.f(t0);
        for k in 0..=count {
            let t = (t0 + k as f64 * step).min(t1);
            let v = self.f(t);
            if v == 0.0 || v.signum() != prev.signum() {
                return Err(Error::invalid(format!(
                    "camouflage gain vanishes near t = {t:.4}"
                )));
            }
            prev = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard() -> CamouflageGain {
        CamouflageGain::SinCos {
            scale: 0.3,
            offset: 0.02,
        }
    }

    #[test]
    fn sincos_values() {
        assert!((standard().eval(0.0) - 0.306).abs() < 1e-15);
        assert!((standard().sup_abs() - 0.3 * (2f64.sqrt() + 0.02)).abs() < 1e-15);
    }

    #[test]
    fn bound_enforced() {
        let c = DMatrix::identity(2, 2);
        assert!(CamouflageMap::new(standard(), c.clone(), 0.4).is_err());
        let map = CamouflageMap::new(standard(), c * 1.0, 0.5).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0]);
        for k in 0..1000 {
            let t = k as f64 * 0.01;
            assert!(map.psi(t, &x).norm() <= map.gamma() * x.norm());
        }
    }

    #[test]
    fn nonvanishing_on_exploration_window_only() {
        let map = CamouflageMap::with_tight_bound(standard(), DMatrix::identity(6, 6)).unwrap();
        assert!(map.ensure_nonvanishing(0.0, 2.0, 1e-3).is_ok());
        // sin t + cos t = −0.02 just past t = 3π/4
        assert!(map.ensure_nonvanishing(0.0, 3.0, 1e-3).is_err());
    }
}
