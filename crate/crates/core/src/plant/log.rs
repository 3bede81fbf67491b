use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::numerics::CostSpec;
use crate::textfmt::fmt_sig;

/// Exact integrals over each log interval `[t_k, t_{k+1}]`, accumulated by the
/// simulator at its inner step. Entry `k` belongs to the interval that starts
/// at sample `k`; all products use the measured state `x̄`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalIntegrals {
    /// `∫ x̄ ⊗ x̄`.
    pub xx: Vec<DVector<f64>>,
    /// `∫ x̄ ⊗ u`.
    pub xu: Vec<DVector<f64>>,
    /// `∫ x̄ ⊗ ψ`.
    pub xpsi: Vec<DVector<f64>>,
    /// `∫ x̄`.
    pub x: Vec<DVector<f64>>,
    /// `∫ u`.
    pub u: Vec<DVector<f64>>,
}

impl IntervalIntegrals {
    pub fn len(&self) -> usize {
        self.xx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xx.is_empty()
    }

    fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            xx: self.xx[from..to].to_vec(),
            xu: self.xu[from..to].to_vec(),
            xpsi: self.xpsi[from..to].to_vec(),
            x: self.x[from..to].to_vec(),
            u: self.u[from..to].to_vec(),
        }
    }
}

/// Uniformly sampled record of one simulation.
///
/// `u` is the applied control `−Kx̄ + u₀ + ζ`; the plant sees `u + ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u0: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub psi: Vec<DVector<f64>>,
    pub xbar: Vec<DVector<f64>>,
    pub zeta: Vec<DVector<f64>>,
    /// Whether a camouflage channel was present when the log was produced.
    pub has_camouflage: bool,
    pub integrals: Option<IntervalIntegrals>,
}

impl TrajectoryLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn n(&self) -> usize {
        self.x.first().map_or(0, |v| v.len())
    }

    pub fn m(&self) -> usize {
        self.u.first().map_or(0, |v| v.len())
    }

    pub fn start_time(&self) -> f64 {
        self.t.first().copied().unwrap_or(0.0)
    }

    pub fn end_time(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    fn out_of_range(&self, start: f64, end: f64) -> Error {
        Error::WindowOutOfRange {
            start,
            end,
            log_start: self.start_time(),
            log_end: self.end_time(),
        }
    }

    /// Index of the sample at time `t`, which must lie on the grid (to within
    /// a millionth of a step) and inside the log.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let pos = (t - self.start_time()) / self.dt;
        let k = pos.round();
        if (pos - k).abs() > 1e-6 || k < 0.0 || k as usize >= self.len() {
            return Err(self.out_of_range(t, t));
        }
        Ok(k as usize)
    }

    /// Index range `[i0, i1]` (inclusive) covering `[t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> Result<(usize, usize)> {
        if !(t1 >= t0) {
            return Err(self.out_of_range(t0, t1));
        }
        let i0 = self.index_of(t0).map_err(|_| self.out_of_range(t0, t1))?;
        let i1 = self.index_of(t1).map_err(|_| self.out_of_range(t0, t1))?;
        Ok((i0, i1))
    }

    /// Samples `from..=to` as a new log (interval integrals kept for the
    /// intervals fully inside).
    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from > to || to >= self.len() {
            return Err(Error::invalid(format!(
                "slice {from}..={to} of a log with {} samples",
                self.len()
            )));
        }
        let r = from..to + 1;
        Ok(Self {
            dt: self.dt,
            t: self.t[r.clone()].to_vec(),
            x: self.x[r.clone()].to_vec(),
            u0: self.u0[r.clone()].to_vec(),
            u: self.u[r.clone()].to_vec(),
            psi: self.psi[r.clone()].to_vec(),
            xbar: self.xbar[r.clone()].to_vec(),
            zeta: self.zeta[r].to_vec(),
            has_camouflage: self.has_camouflage,
            integrals: self.integrals.as_ref().map(|i| i.slice(from, to)),
        })
    }

    /// Appends `next`, whose first sample must coincide with this log's last.
    pub fn concat(&self, next: &TrajectoryLog) -> Result<Self> {
        if (next.dt - self.dt).abs() > 1e-12 * self.dt
            || (next.start_time() - self.end_time()).abs() > 1e-9
            || next.n() != self.n()
            || next.m() != self.m()
        {
            return Err(Error::invalid("logs are not contiguous"));
        }
        let mut out = self.clone();
        out.t.extend_from_slice(&next.t[1..]);
        out.x.extend_from_slice(&next.x[1..]);
        out.u0.extend_from_slice(&next.u0[1..]);
        out.u.extend_from_slice(&next.u[1..]);
        out.psi.extend_from_slice(&next.psi[1..]);
        out.xbar.extend_from_slice(&next.xbar[1..]);
        out.zeta.extend_from_slice(&next.zeta[1..]);
        out.has_camouflage |= next.has_camouflage;
        out.integrals = match (&self.integrals, &next.integrals) {
            (Some(a), Some(b)) => {
                let mut c = a.clone();
                c.xx.extend_from_slice(&b.xx);
                c.xu.extend_from_slice(&b.xu);
                c.xpsi.extend_from_slice(&b.xpsi);
                c.x.extend_from_slice(&b.x);
                c.u.extend_from_slice(&b.u);
                Some(c)
            }
            _ => None,
        };
        Ok(out)
    }

    pub fn header(&self) -> String {
        csv_header(self.n(), self.m())
    }

    /// CSV with 12 significant digits. Interval integrals are not serialized.
    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for k in 0..self.len() {
            let mut fields = vec![fmt_sig(self.t[k], 12)];
            for series in [
                &self.x, &self.u0, &self.u, &self.psi, &self.xbar, &self.zeta,
            ] {
                fields.extend(series[k].iter().map(|v| fmt_sig(*v, 12)));
            }
            let _ = writeln!(out, "{}", fields.join(","));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty log".into()))?;
        let names: Vec<&str> = header.split(',').map(str::trim).collect();
        let count = |prefix: &str| {
            names
                .iter()
                .filter(|c| {
                    c.strip_prefix(prefix).is_some_and(|rest| {
                        !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
                    })
                })
                .count()
        };
        let n = count("x");
        let m = count("zeta");
        if n == 0 || m == 0 || names.first() != Some(&"t") {
            return Err(Error::Parse("unrecognized log header".into()));
        }
        if csv_header(n, m) != names.join(",") {
            return Err(Error::Parse("unrecognized log header".into()));
        }

        let width = 1 + 2 * n + 4 * m;
        let mut log = Self::empty(0.0);
        for (lineno, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: {e}", lineno + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != width {
                return Err(Error::Parse(format!(
                    "row {}: expected {width} fields, got {}",
                    lineno + 1,
                    vals.len()
                )));
            }
            let mut at = 1;
            let mut take = |len: usize| {
                let v = DVector::from_column_slice(&vals[at..at + len]);
                at += len;
                v
            };
            log.t.push(vals[0]);
            log.x.push(take(n));
            log.u0.push(take(m));
            log.u.push(take(m));
            log.psi.push(take(m));
            log.xbar.push(take(n));
            log.zeta.push(take(m));
        }
        if log.len() < 2 {
            return Err(Error::Parse("log needs at least two samples".into()));
        }
        log.dt = (log.end_time() - log.start_time()) / (log.len() - 1) as f64;
        if !(log.dt > 0.0) {
            return Err(Error::Parse("log times must increase".into()));
        }
        log.has_camouflage = log.psi.iter().any(|p| p.iter().any(|v| *v != 0.0));
        Ok(log)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&fs::read_to_string(path)?)
    }

    pub(crate) fn empty(dt: f64) -> Self {
        Self {
            dt,
            t: Vec::new(),
            x: Vec::new(),
            u0: Vec::new(),
            u: Vec::new(),
            psi: Vec::new(),
            xbar: Vec::new(),
            zeta: Vec::new(),
            has_camouflage: false,
            integrals: None,
        }
    }
}

fn csv_header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=m).map(|i| format!("u0{i}")));
    cols.extend((1..=m).map(|i| format!("u{i}")));
    cols.extend((1..=m).map(|i| format!("psi{i}")));
    cols.extend((1..=n).map(|i| format!("xbar{i}")));
    cols.extend((1..=m).map(|i| format!("zeta{i}")));
    cols.join(",")
}

/// `J = ∫ xᵀQx + uᵀRu dt` over `[t0, t1]` by the trapezoid rule on the
/// logged samples, using the actual state.
pub fn compute_cost(log: &TrajectoryLog, cost: &CostSpec, t0: f64, t1: f64) -> Result<f64> {
    if cost.n() != log.n() || cost.m() != log.m() {
        return Err(Error::invalid(
            "cost weights do not match the log dimensions",
        ));
    }
    let (i0, i1) = log.window(t0, t1)?;
    let stage = |k: usize| {
        let x = &log.x[k];
        let u = &log.u[k];
        x.dot(&(cost.q() * x)) + u.dot(&(cost.r() * u))
    };
    let mut j = 0.0;
    for k in i0..i1 {
        j += 0.5 * (stage(k) + stage(k + 1)) * (log.t[k + 1] - log.t[k]);
    }
    Ok(j)
}
