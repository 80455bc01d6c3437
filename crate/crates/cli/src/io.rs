//! CSV ingestion and emission.
//!
//! Panels: header row, first column the time index (`0..n` or equidistant
//! timestamps), remaining columns levels. Matrices: dense, row-major, header
//! of 1-based column indices. Values use 17 significant digits so a write/read
//! cycle is bit-exact.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use hfprec_core::{PathPanel, SymMatrix};
use nalgebra::DMatrix;

use crate::error::CliError;

/// Relative tolerance for the equidistance check on timestamps.
pub const GRID_REL_TOL: f64 = 1e-9;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_cell(s: &str, row: usize, col: usize, path: &Path) -> Result<f64, CliError> {
    let v: f64 = s.trim().parse().map_err(|_| {
        CliError::Input(format!("{}: row {row}, column {}: cannot parse '{s}'", path.display(), col + 1))
    })?;
    if !v.is_finite() {
        return Err(CliError::Input(format!(
            "{}: row {row}, column {}: non-finite value",
            path.display(),
            col + 1
        )));
    }
    Ok(v)
}

/// How the non-time columns of a panel file are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PanelFormat {
    #[default]
    Levels,
    /// Per-interval returns, cumulated into levels starting at zero.
    Returns,
}

/// Reads a panel. Rows are numbered from 1 (the first data row after the
/// header) in error messages.
pub fn ingest_panel(path: &Path, format: PanelFormat) -> Result<PathPanel, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let width = rdr
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .len();
    if width < 2 {
        return Err(CliError::Input(format!(
            "{}: need a time column and at least one level column",
            path.display()
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| CliError::Input(format!("{}: row {row}: {e}", path.display())))?;
        if rec.len() != width {
            return Err(CliError::Input(format!(
                "{}: row {row} has {} fields, expected {width}",
                path.display(),
                rec.len()
            )));
        }
        times.push(parse_cell(&rec[0], row, 0, path)?);
        for c in 1..width {
            values.push(parse_cell(&rec[c], row, c, path)?);
        }
    }
    let rows = times.len();
    let min_rows = if format == PanelFormat::Levels { 2 } else { 1 };
    if rows < min_rows {
        return Err(CliError::Input(format!("{}: too few observations", path.display())));
    }
    let step = if rows > 1 { times[1] - times[0] } else { 1.0 };
    if step.is_nan() || step <= 0.0 {
        return Err(CliError::Input(format!("{}: time column must increase", path.display())));
    }
    for h in 1..rows {
        let dt = times[h] - times[h - 1];
        if (dt - step).abs() > GRID_REL_TOL * step {
            return Err(CliError::Input(format!(
                "{}: row {}: observation grid is not equidistant",
                path.display(),
                h + 1
            )));
        }
    }
    let m = DMatrix::from_row_slice(rows, width - 1, &values);
    Ok(match format {
        PanelFormat::Levels => PathPanel::new(m)?,
        PanelFormat::Returns => PathPanel::from_returns(&m, None)?,
    })
}

pub fn emit_panel(path: &Path, panel: &PathPanel) -> Result<(), CliError> {
    let v = panel.values();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=v.ncols()).map(|j| j.to_string()));
    w.write_record(&header)?;
    for h in 0..v.nrows() {
        let mut rec = vec![h.to_string()];
        rec.extend(v.row(h).iter().map(|&x| fmt_f64(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((1..=m.ncols()).map(|j| j.to_string()))?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

/// Nonzero entries with `i ≤ j`, 1-based.
pub fn emit_triplets(path: &Path, m: &SymMatrix) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j", "value"])?;
    for i in 0..m.dim() {
        for j in i..m.dim() {
            let v = m[(i, j)];
            if v != 0.0 {
                w.write_record([(i + 1).to_string(), (j + 1).to_string(), fmt_f64(v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let width = rdr.headers()?.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for c in 0..width {
            values.push(parse_cell(&rec[c], k + 1, c, path)?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, width, &values))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}
