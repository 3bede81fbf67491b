//! Regression blocks of the off-policy trajectory relation and the
//! excitation rank checks.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{kron_vec, rank_tolerance};
use crate::plant::TrajectoryLog;
use crate::textfmt::fmt_sig;

/// Which learner the data feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Nominal,
    Arrl,
}

/// How window integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// Exact simulator integrals when the log carries them, trapezoid otherwise.
    #[default]
    Auto,
    Exact,
    Trapezoid,
}

/// Stacked regression data, one row per window.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    /// `x⊗x` at window end minus window start.
    pub nxx: DMatrix<f64>,
    /// `∫ x⊗x` per window.
    pub mxx: DMatrix<f64>,
    /// `∫ x⊗u` per window.
    pub mxu0: DMatrix<f64>,
    /// `∫ x⊗ψ` per window, when requested.
    pub mxpsi: Option<DMatrix<f64>>,
    /// Window length in seconds.
    pub window: f64,
    pub n: usize,
    pub m: usize,
}

impl DataMatrices {
    pub fn windows(&self) -> usize {
        self.nxx.nrows()
    }

    /// One line per matrix row: `block,row,values...`, preceded by a
    /// `# window=..,windows=..,n=..,m=..` line.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# window={},windows={},n={},m={}\nblock,row,values\n",
            fmt_sig(self.window, 12),
            self.windows(),
            self.n,
            self.m
        );
        let mut blocks = vec![("nxx", &self.nxx), ("mxx", &self.mxx), ("mxu0", &self.mxu0)];
        if let Some(p) = &self.mxpsi {
            blocks.push(("mxpsi", p));
        }
        for (name, mat) in blocks {
            for i in 0..mat.nrows() {
                let vals: Vec<String> = mat.row(i).iter().map(|v| fmt_sig(*v, 17)).collect();
                let _ = writeln!(out, "{name},{i},{}", vals.join(","));
            }
        }
        out
    }
}

/// Builds `l` back-to-back windows of length `window` starting at the first
/// log sample.
pub fn build_data_matrices(
    log: &TrajectoryLog,
    window: f64,
    l: usize,
    with_psi: bool,
    quadrature: Quadrature,
) -> Result<DataMatrices> {
    let (n, m) = (log.n(), log.m());
    if l == 0 {
        return Err(Error::invalid("need at least one window"));
    }
    let ratio = window / log.dt;
    let steps = ratio.round();
    if !(steps >= 1.0) || (ratio - steps).abs() > 1e-6 {
        return Err(Error::invalid(format!(
            "window {window} is not a positive multiple of dt = {}",
            log.dt
        )));
    }
    let steps = steps as usize;
    let needed = l * steps + 1;
    if log.len() < needed {
        return Err(Error::InsufficientData {
            needed,
            available: log.len(),
        });
    }
    if with_psi && !log.has_camouflage {
        return Err(Error::MissingPsi);
    }
    let exact = match quadrature {
        Quadrature::Trapezoid => None,
        Quadrature::Auto => log.integrals.as_ref(),
        Quadrature::Exact => Some(
            log.integrals
                .as_ref()
                .ok_or_else(|| Error::invalid("exact quadrature needs simulator integrals"))?,
        ),
    };

    let mut nxx = DMatrix::zeros(l, n * n);
    let mut mxx = DMatrix::zeros(l, n * n);
    let mut mxu0 = DMatrix::zeros(l, n * m);
    let mut mxpsi = with_psi.then(|| DMatrix::zeros(l, n * m));

    for i in 0..l {
        let (k0, k1) = (i * steps, (i + 1) * steps);
        let xx = |k: usize| kron_vec(&log.xbar[k], &log.xbar[k]);
        nxx.set_row(i, &(xx(k1) - xx(k0)).transpose());

        let mut sxx = DVector::zeros(n * n);
        let mut sxu = DVector::zeros(n * m);
        let mut sxp = DVector::zeros(n * m);
        for k in k0..k1 {
            match exact {
                Some(ints) => {
                    sxx += &ints.xx[k];
                    sxu += &ints.xu[k];
                    sxp += &ints.xpsi[k];
                }
                None => {
                    let h = 0.5 * (log.t[k + 1] - log.t[k]);
                    let (a, b) = (&log.xbar[k], &log.xbar[k + 1]);
                    sxx += (kron_vec(a, a) + kron_vec(b, b)) * h;
                    sxu += (kron_vec(a, &log.u[k]) + kron_vec(b, &log.u[k + 1])) * h;
                    if with_psi {
                        sxp += (kron_vec(a, &log.psi[k]) + kron_vec(b, &log.psi[k + 1])) * h;
                    }
                }
            }
        }
        mxx.set_row(i, &sxx.transpose());
        mxu0.set_row(i, &sxu.transpose());
        if let Some(p) = mxpsi.as_mut() {
            p.set_row(i, &sxp.transpose());
        }
    }
    Ok(DataMatrices {
        nxx,
        mxx,
        mxu0,
        mxpsi,
        window: steps as f64 * log.dt,
        n,
        m,
    })
}

/// Verdict of the excitation rank test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub required: usize,
    pub achieved: usize,
    pub satisfied: bool,
    /// The `required`-th largest singular value (0 if there are fewer).
    pub smallest_singular_value: f64,
}

/// Required count for `mode` on an `n`-state, `m`-input plant.
pub fn required_rank(n: usize, m: usize, mode: Mode) -> usize {
    let base = n * (n + 1) / 2 + n * m;
    match mode {
        Mode::Nominal => base,
        Mode::Arrl => base + n * m,
    }
}

/// Numerical rank of `[M_xx, M_xu0]` (nominal) or `[M_xx, M_xu0, M_xψ]` (arrl).
pub fn check_rank(d: &DataMatrices, mode: Mode) -> RankReport {
    let required = required_rank(d.n, d.m, mode);
    let mut blocks = vec![&d.mxx, &d.mxu0];
    if mode == Mode::Arrl {
        if let Some(p) = &d.mxpsi {
            blocks.push(p);
        }
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut stacked = DMatrix::zeros(d.windows(), cols);
    let mut at = 0;
    for b in blocks {
        stacked.view_mut((0, at), b.shape()).copy_from(b);
        at += b.ncols();
    }
    let mut sv: Vec<f64> = stacked.singular_values().iter().cloned().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let tol = rank_tolerance(sigma_max, stacked.nrows(), stacked.ncols());
    let achieved = if sigma_max > 0.0 {
        sv.iter().filter(|s| **s > tol).count()
    } else {
        0
    };
    RankReport {
        required,
        achieved,
        satisfied: achieved >= required,
        smallest_singular_value: sv.get(required.wrapping_sub(1)).copied().unwrap_or(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{
        make_sum_of_sinusoids, multi_agent_benchmark, simulate, CamouflageGain, CamouflageMap,
        Channels, SimOptions,
    };

    fn frozen_log(c: &[f64], samples: usize, dt: f64) -> TrajectoryLog {
        let x = DVector::from_column_slice(c);
        let csv_header = {
            let n = c.len();
            let mut cols = vec!["t".to_string()];
            cols.extend((1..=n).map(|i| format!("x{i}")));
            cols.push("u01".into());
            cols.push("u1".into());
            cols.push("psi1".into());
            cols.extend((1..=n).map(|i| format!("xbar{i}")));
            cols.push("zeta1".into());
            cols.join(",")
        };
        let mut text = csv_header + "\n";
        for k in 0..samples {
            let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            text += &format!(
                "{},{},0,0,0,{},0\n",
                k as f64 * dt,
                xs.join(","),
                xs.join(",")
            );
        }
        TrajectoryLog::from_csv(&text).unwrap()
    }

    #[test]
    fn constant_state_gives_zero_differences() {
        let log = frozen_log(&[1.0, -2.0], 11, 0.1);
        let d = build_data_matrices(&log, 0.2, 5, false, Quadrature::Auto).unwrap();
        assert_eq!(d.nxx.amax(), 0.0);
        let cc = [1.0, -2.0, -2.0, 4.0];
        for i in 0..5 {
            for j in 0..4 {
                assert!((d.mxx[(i, j)] - 0.2 * cc[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_ramp_trapezoid_integral() {
        let mut log = frozen_log(&[0.0], 101, 0.01);
        for k in 0..101 {
            let t = k as f64 * 0.01;
            log.x[k][0] = t;
            log.xbar[k][0] = t;
        }
        let d = build_data_matrices(&log, 1.0, 1, false, Quadrature::Trapezoid).unwrap();
        // trapezoid error for t² over [0,1] at h = 0.01 is h²/6
        assert!((d.mxx[(0, 0)] - 1.0 / 3.0).abs() <= 0.01f64.powi(2) / 6.0 + 1e-14);
    }

    #[test]
    fn errors_on_short_log_missing_psi_and_bad_window() {
        let log = frozen_log(&[1.0], 11, 0.1);
        assert!(matches!(
            build_data_matrices(&log, 0.1, 11, false, Quadrature::Auto),
            Err(Error::InsufficientData {
                needed: 12,
                available: 11
            })
        ));
        assert!(matches!(
            build_data_matrices(&log, 0.1, 5, true, Quadrature::Auto),
            Err(Error::MissingPsi)
        ));
        assert!(build_data_matrices(&log, 0.15, 2, false, Quadrature::Auto).is_err());
        assert!(build_data_matrices(&log, 0.1, 2, false, Quadrature::Exact).is_err());
    }

    #[test]
    fn required_counts() {
        assert_eq!(required_rank(6, 6, Mode::Nominal), 57);
        assert_eq!(required_rank(6, 6, Mode::Arrl), 93);
        assert_eq!(required_rank(1, 1, Mode::Nominal), 2);
    }

    #[test]
    fn benchmark_shapes_and_zero_exploration() {
        let (model, _, x0) = multi_agent_benchmark();
        let expl = make_sum_of_sinusoids(0, 6, 100, 0.0, (0.1, 200.0)).unwrap();
        let ch = Channels {
            exploration: Some(&expl),
            ..Default::default()
        };
        let log = simulate(&model, &ch, &x0, &SimOptions::new(2.0, 0.01)).unwrap();
        let d = build_data_matrices(&log, 0.01, 114, false, Quadrature::Auto).unwrap();
        assert_eq!(d.nxx.shape(), (114, 36));
        assert_eq!(d.mxx.shape(), (114, 36));
        assert_eq!(d.mxu0.shape(), (114, 36));
        let r = check_rank(&d, Mode::Nominal);
        assert!(!r.satisfied);
    }

    #[test]
    fn exact_and_trapezoid_agree_on_slow_data() {
        let (model, _, x0) = multi_agent_benchmark();
        let expl = make_sum_of_sinusoids(3, 6, 5, 1.0, (0.1, 2.0)).unwrap();
        let camo = CamouflageMap::with_tight_bound(
            CamouflageGain::SinCos {
                scale: 0.3,
                offset: 0.02,
            },
            DMatrix::identity(6, 6),
        )
        .unwrap();
        let ch = Channels {
            exploration: Some(&expl),
            camouflage: Some(&camo),
            ..Default::default()
        };
        let log = simulate(&model, &ch, &x0, &SimOptions::new(1.0, 0.01)).unwrap();
        let a = build_data_matrices(&log, 0.05, 20, true, Quadrature::Exact).unwrap();
        let b = build_data_matrices(&log, 0.05, 20, true, Quadrature::Trapezoid).unwrap();
        assert_eq!(a.nxx, b.nxx);
        let scale = a.mxx.amax();
        assert!((&a.mxx - &b.mxx).amax() < 1e-3 * scale);
        assert!((a.mxpsi.unwrap() - b.mxpsi.unwrap()).amax() < 1e-3 * scale);
    }
}
