//! Number formatting and the one-matrix-per-file CSV format.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `%.{sig}g`-style formatting: `sig` significant digits, trailing zeros trimmed.
pub(crate) fn fmt_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= sig as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub(crate) fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| fmt_sig(*v, 17)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub(crate) fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    crate::numerics::from_rows(&rows)
}

/// Reads a matrix file: one row per line, comma separated, dimensions inferred.
pub fn read_matrix_file(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_csv(&fs::read_to_string(path)?)
}

pub fn write_matrix_file(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m))?;
    Ok(())
}
