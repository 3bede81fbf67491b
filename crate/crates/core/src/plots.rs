//! SVG figures of a finished scenario, each with its data as CSV.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::ops::Range;
use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::plant::TrajectoryLog;
use crate::scenario::ScenarioRun;
use crate::textfmt::fmt_sig;

pub const ACTUAL_STATES: &str = "actual_states.svg";
pub const MEASURED_STATES: &str = "measured_states.svg";
pub const GAIN_CONVERGENCE: &str = "gain_convergence.svg";
pub const RESIDUAL: &str = "residual.svg";

type Series = (String, Vec<(f64, f64)>);

fn plot_err(e: impl std::fmt::Display) -> Error {
    Error::Io(io::Error::other(e.to_string()))
}

fn bounds(series: &[Series], extra_y: &[f64]) -> (Range<f64>, Range<f64>) {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    for &y in extra_y {
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-9);
    (x0..x1, (y0 - pad)..(y1 + pad))
}

struct Figure<'a> {
    title: &'a str,
    x_label: &'a str,
    y_label: &'a str,
    series: Vec<Series>,
    hlines: Vec<(f64, &'a str)>,
    vlines: Vec<(f64, &'a str)>,
}

impl Figure<'_> {
    fn draw(&self, path: &Path) -> Result<()> {
        let ys: Vec<f64> = self.hlines.iter().map(|h| h.0).collect();
        let (xr, yr) = bounds(&self.series, &ys);
        let root = SVGBackend::new(path, (900, 520)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(self.title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(xr.clone(), yr.clone())
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc(self.x_label)
            .y_desc(self.y_label)
            .draw()
            .map_err(plot_err)?;
        for (i, (name, pts)) in self.series.iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            chart
                .draw_series(LineSeries::new(pts.iter().cloned(), color.stroke_width(2)))
                .map_err(plot_err)?
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
        }
        for (y, name) in &self.hlines {
            chart
                .draw_series(LineSeries::new(
                    vec![(xr.start, *y), (xr.end, *y)],
                    BLACK.stroke_width(1),
                ))
                .map_err(plot_err)?
                .label(*name)
                .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLACK));
        }
        for (i, (x, name)) in self.vlines.iter().enumerate() {
            let color = if i == 0 { RED } else { BLUE };
            chart
                .draw_series(LineSeries::new(
                    vec![(*x, yr.start), (*x, yr.end)],
                    color.stroke_width(2),
                ))
                .map_err(plot_err)?
                .label(*name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
        Ok(())
    }
}

fn state_series(logs: &[&TrajectoryLog], measured: bool) -> Vec<Series> {
    let n = logs.first().map_or(0, |l| l.n());
    (0..n)
        .map(|i| {
            let pts = logs
                .iter()
                .flat_map(|log| {
                    let xs = if measured { &log.xbar } else { &log.x };
                    log.t.iter().zip(xs).map(move |(t, x)| (*t, x[i]))
                })
                .collect();
            (format!("x{}", i + 1), pts)
        })
        .collect()
}

/// Writes the four figures (and `gain_convergence.csv`, `residual.csv`)
/// into `dir`; returns the file names.
pub fn emit_plots(run: &ScenarioRun, dir: &Path) -> Result<Vec<String>> {
    let logs = [&run.exploration_log, &run.control_log];
    let onset = run.report.attack.as_ref().map(|a| a.onset);
    let alarm = run.report.alarm.map(|a| a.time);
    let mut markers = Vec::new();
    if let Some(t) = onset {
        markers.push((t, "attack onset"));
    }
    if let Some(t) = alarm {
        markers.push((t, "alarm"));
    }

    Figure {
        title: "Actual states",
        x_label: "t [s]",
        y_label: "x",
        series: state_series(&logs, false),
        hlines: Vec::new(),
        vlines: markers.clone(),
    }
    .draw(&dir.join(ACTUAL_STATES))?;

    Figure {
        title: "Measured states",
        x_label: "t [s]",
        y_label: "measured x",
        series: state_series(&logs, true),
        hlines: Vec::new(),
        vlines: markers.clone(),
    }
    .draw(&dir.join(MEASURED_STATES))?;

    let mut conv_csv = String::from("iteration,p_change,log10_p_change\n");
    let mut conv = Vec::new();
    for (i, it) in run.gain.iterates.iter().enumerate() {
        if let Some(c) = it.p_change {
            let l = c.max(f64::MIN_POSITIVE).log10();
            conv.push(((i + 1) as f64, l));
            let _ = writeln!(conv_csv, "{},{},{}", i + 1, fmt_sig(c, 12), fmt_sig(l, 12));
        }
    }
    fs::write(dir.join("gain_convergence.csv"), conv_csv)?;
    Figure {
        title: "Value iterate change",
        x_label: "iteration",
        y_label: "log10 |P_k - P_(k-1)|_F",
        series: vec![("log10 change".into(), conv)],
        hlines: Vec::new(),
        vlines: Vec::new(),
    }
    .draw(&dir.join(GAIN_CONVERGENCE))?;

    let mut res_csv = String::from("t,residual\n");
    let mut res = Vec::new();
    for log in logs {
        let skip = usize::from(!res.is_empty());
        for (t, x) in log.t.iter().zip(&log.xbar).skip(skip) {
            let r = x.amax();
            res.push((*t, r));
            let _ = writeln!(res_csv, "{},{}", fmt_sig(*t, 12), fmt_sig(r, 12));
        }
    }
    fs::write(dir.join("residual.csv"), res_csv)?;
    Figure {
        title: "Detector residual",
        x_label: "t [s]",
        y_label: "|measured x|_inf",
        series: vec![("residual".into(), res)],
        hlines: run
            .detector_threshold
            .map(|th| vec![(th, "threshold")])
            .unwrap_or_default(),
        vlines: markers,
    }
    .draw(&dir.join(RESIDUAL))?;

    Ok(vec![
        ACTUAL_STATES.into(),
        MEASURED_STATES.into(),
        "gain_convergence.csv".into(),
        GAIN_CONVERGENCE.into(),
        "residual.csv".into(),
        RESIDUAL.into(),
    ])
}
