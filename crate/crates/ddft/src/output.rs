//! CSV and JSON writers.
//!
//! CSV is RFC 4180 with `.` decimals and 17 significant digits, so every
//! double reads back bit for bit. Missing values are empty cells.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ddft_core::diagnostics::{TrajectoryRecord, COLUMNS};
use ddft_core::{Field, Grid, VectorField};
use sha2::{Digest, Sha256};

/// 17 significant digits in scientific notation.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn cell(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

pub fn write_diagnostics(path: &Path, traj: &TrajectoryRecord) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(COLUMNS)?;
    for row in &traj.rows {
        let mut rec: Vec<String> = row.values().iter().map(|v| cell(*v)).collect();
        // iteration counts are integers
        *rec.last_mut().expect("nonempty") = row.flux_iterations.to_string();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn coord_header(g: &Grid) -> Vec<&'static str> {
    if g.dim() == 1 {
        vec!["x"]
    } else {
        vec!["x", "y"]
    }
}

/// One row per cell: center coordinates, density and (optionally) flux.
pub fn write_field(path: &Path, g: &Grid, name: &str, rho: &Field, flux: Option<&VectorField>) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<&str> = coord_header(g);
    header.push(name);
    if flux.is_some() {
        header.extend(if g.dim() == 1 { &["a_x"][..] } else { &["a_x", "a_y"][..] });
    }
    w.write_record(&header)?;
    for (c, x) in g.centers().iter().enumerate() {
        let mut rec: Vec<String> = x[..g.dim()].iter().map(|v| fmt17(*v)).collect();
        rec.push(fmt17(rho.values[c]));
        if let Some(a) = flux {
            rec.extend(a.values[c][..g.dim()].iter().map(|v| fmt17(*v)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram(path: &Path, g: &Grid, density: &Field, counts: &[u64]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = coord_header(g);
    header.extend(["density", "count"]);
    w.write_record(&header)?;
    for (c, x) in g.centers().iter().enumerate() {
        let mut rec: Vec<String> = x[..g.dim()].iter().map(|v| fmt17(*v)).collect();
        rec.push(fmt17(density.values[c]));
        rec.push(counts[c].to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_positions(path: &Path, dim: usize, positions: &[[f64; 2]]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(if dim == 1 { &["x"][..] } else { &["x", "y"][..] })?;
    for p in positions {
        w.write_record(p[..dim].iter().map(|v| fmt17(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the first column whose header is one of `names`.
pub fn read_column(path: &Path, names: &[&str]) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let Some(col) = headers.iter().position(|h| names.contains(&h.trim())) else {
        bail!("{} has no column named {}", path.display(), names.join(" or "));
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let s = rec.get(col).unwrap_or("").trim();
        let v: f64 = s.parse().with_context(|| format!("{} row {}: `{s}` is not a number", path.display(), i + 2))?;
        out.push(v);
    }
    Ok(out)
}

/// Content hash in the style of git's object ids (`blob <len>\0<bytes>`),
/// with SHA-256.
pub fn content_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", text.len()).as_bytes());
    h.update(text.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
