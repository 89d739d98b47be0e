//! Artifact writers: convergence tables, field dumps and TOML reports.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SktError};
use crate::grid::SpatialGrid;
use crate::snapshots::SnapshotMatrix;

/// One row of a convergence table. Mode pairs are `(k1, k2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub tol_ric: f64,
    pub method: String,
    pub modes: Option<(usize, usize)>,
    pub modes_i1: Option<(usize, usize)>,
    pub modes_i2: Option<(usize, usize)>,
    pub error_u: f64,
    pub error_v: f64,
}

pub const TABLE_HEADER: [&str; 7] = ["tol_ric", "method", "modes", "modes-I1", "modes-I2", "error-u", "error-v"];

fn mode_cell(m: Option<(usize, usize)>) -> String {
    m.map_or_else(String::new, |(k1, k2)| format!("{k1}({k2})"))
}

/// CSV with one row per `(tol_ric, method)`; mode cells read `k1(k2)`.
pub fn emit_tables<W: Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            format!("{:e}", r.tol_ric),
            r.method.clone(),
            mode_cell(r.modes),
            mode_cell(r.modes_i1),
            mode_cell(r.modes_i2),
            format!("{:e}", r.error_u),
            format!("{:e}", r.error_v),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar entry describing one dumped field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldIndexEntry {
    pub file: String,
    /// `u1`, `u2`, or `u1+u2` for a 1D dump holding both.
    pub species: String,
    pub sample: usize,
    pub t: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

/// Sample index closest to `t`, or an error naming the stored range.
pub fn sample_at(times: &[f64], t: f64) -> Result<usize> {
    let (&start, &end) = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(SktError::InvalidSize("empty trajectory".into())),
    };
    let tol = 1e-9 * end.abs().max(1.0);
    if !(t >= start - tol && t <= end + tol) {
        return Err(SktError::TimeOutOfRange {
            requested: t,
            start,
            end,
        });
    }
    let n = times.partition_point(|&s| s < t);
    Ok(match n {
        0 => 0,
        n if n == times.len() => n - 1,
        n if (times[n] - t).abs() < (t - times[n - 1]).abs() => n,
        n => n - 1,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn write_grid(path: &Path, values: &[f64], n_x: usize, n_y: usize) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    for ix in 0..n_x {
        w.write_record(values[ix * n_y..(ix + 1) * n_y].iter().map(|&v| fmt(v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Dump both species at the samples nearest to `times` into `dir`.
///
/// 1D files hold `x, u1, u2` rows. 2D files hold one species each as an
/// `n_x × n_y` grid (row `ix`, column `iy`). Every dump is listed in
/// `<prefix>_index.csv`, whose path is returned.
pub fn emit_fields(
    dir: &Path,
    prefix: &str,
    s1: &SnapshotMatrix,
    s2: &SnapshotMatrix,
    grid: &SpatialGrid,
    times: &[f64],
) -> Result<PathBuf> {
    check_len(grid.len(), s1.n_states(), "field size")?;
    check_len(s1.len(), s2.len(), "species samples")?;
    let samples = times
        .iter()
        .map(|&t| sample_at(s1.times(), t))
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(dir)?;
    let (x, y) = (grid.x_axis(), grid.y_axis());
    let entry = |file: String, species: &str, sample: usize| FieldIndexEntry {
        file,
        species: species.into(),
        sample,
        t: s1.times()[sample],
        n_x: grid.n_x(),
        n_y: grid.n_y(),
        x_lo: x.lo,
        x_hi: x.hi,
        y_lo: y.map_or(0.0, |a| a.lo),
        y_hi: y.map_or(0.0, |a| a.hi),
    };
    let mut index = Vec::new();
    for (k, &n) in samples.iter().enumerate() {
        if grid.dim() == 1 {
            let file = format!("{prefix}_{k:03}.csv");
            let mut w = csv::Writer::from_path(dir.join(&file))?;
            w.write_record(["x", "u1", "u2"])?;
            for (j, (a, b)) in s1.column(n).iter().zip(s2.column(n)).enumerate() {
                w.write_record([fmt(x.node(j)), fmt(*a), fmt(*b)])?;
            }
            w.flush()?;
            index.push(entry(file, "u1+u2", n));
        } else {
            for (species, s) in [("u1", s1), ("u2", s2)] {
                let file = format!("{prefix}_{k:03}_{species}.csv");
                write_grid(&dir.join(&file), s.column(n), grid.n_x(), grid.n_y())?;
                index.push(entry(file, species, n));
            }
        }
    }
    let index_path = dir.join(format!("{prefix}_index.csv"));
    let mut w = csv::Writer::from_path(&index_path)?;
    for e in &index {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(index_path)
}

pub fn read_field_index(path: &Path) -> Result<Vec<FieldIndexEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|e| e.map_err(SktError::from)).collect()
}

fn parse(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| SktError::Format(format!("bad number {s:?}")))
}

/// Read a 1D dump into `(x, u1, u2)` columns.
pub fn read_field_1d(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let (mut x, mut u1, mut u2) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(SktError::Format(format!("expected 3 columns, got {}", rec.len())));
        }
        x.push(parse(&rec[0])?);
        u1.push(parse(&rec[1])?);
        u2.push(parse(&rec[2])?);
    }
    Ok((x, u1, u2))
}

/// Read a 2D grid dump as an `n_x × n_y` matrix.
pub fn read_field_grid(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(parse).collect::<Result<_>>()?);
    }
    let n_y = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_y) {
        return Err(SktError::Format("ragged grid dump".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), n_y, |i, j| rows[i][j]))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| SktError::Format(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| SktError::Format(format!("{}: {e}", path.display())))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| SktError::Format(format!("cannot open {}: {e}", path.display())))
}
