//! Set-point detector on the measured state channel.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::TrajectoryLog;

pub const DEFAULT_MARGIN: f64 = 3.0;
pub const DEFAULT_PERSISTENCE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub setpoint: DVector<f64>,
    /// Alarm level on `‖x̄ − setpoint‖_∞`.
    pub threshold: f64,
    /// Consecutive exceeding samples needed to alarm.
    pub persistence: usize,
    pub margin: f64,
    /// Samples before this time are ignored.
    pub arm_time: f64,
}

impl DetectorConfig {
    pub fn new(
        setpoint: DVector<f64>,
        threshold: f64,
        persistence: usize,
        arm_time: f64,
    ) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::invalid("detector threshold must be positive"));
        }
        if persistence == 0 {
            return Err(Error::invalid("detector persistence must be at least 1"));
        }
        Ok(Self {
            setpoint,
            threshold,
            persistence,
            margin: 1.0,
            arm_time,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    /// Time of the first sample of the exceeding run.
    pub time: f64,
    /// State index with the largest deviation at that sample.
    pub channel: usize,
    pub residual: f64,
}

fn residual(x: &DVector<f64>, setpoint: &DVector<f64>) -> (f64, usize) {
    let d = x - setpoint;
    let idx = d.iamax();
    (d[idx].abs(), idx)
}

/// Threshold `margin × max ‖x̄ − 0‖_∞` over the samples in `[t0, t1]` of an
/// attack-free closed-loop log. The detector is armed from `t0`.
pub fn calibrate(
    log: &TrajectoryLog,
    window: (f64, f64),
    margin: f64,
    persistence: usize,
) -> Result<DetectorConfig> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::invalid("calibration margin must be positive"));
    }
    if persistence == 0 {
        return Err(Error::invalid("detector persistence must be at least 1"));
    }
    let (t0, t1) = window;
    let slack = 1e-9 * log.dt;
    let setpoint = DVector::zeros(log.n());
    let peaks: Vec<f64> = log
        .t
        .iter()
        .zip(&log.xbar)
        .filter(|(t, _)| **t >= t0 - slack && **t <= t1 + slack)
        .map(|(_, x)| residual(x, &setpoint).0)
        .collect();
    if peaks.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let peak = peaks.iter().cloned().fold(0.0, f64::max);
    let threshold = margin * peak;
    if !(threshold > 0.0) {
        return Err(Error::DegenerateCalibration);
    }
    Ok(DetectorConfig {
        setpoint,
        threshold,
        persistence,
        margin,
        arm_time: t0,
    })
}

/// First run of `persistence` consecutive samples above threshold.
pub fn detect(log: &TrajectoryLog, cfg: &DetectorConfig) -> Option<Alarm> {
    let mut run: Option<Alarm> = None;
    let mut count = 0;
    for (t, x) in log.t.iter().zip(&log.xbar) {
        if *t < cfg.arm_time {
            continue;
        }
        let (r, channel) = residual(x, &cfg.setpoint);
        if r > cfg.threshold {
            if count == 0 {
                run = Some(Alarm {
                    time: *t,
                    channel,
                    residual: r,
                });
            }
            count += 1;
            if count >= cfg.persistence {
                return run;
            }
        } else {
            count = 0;
        }
    }
    None
}
