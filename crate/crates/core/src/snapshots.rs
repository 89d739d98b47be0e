//! Snapshot matrices and their on-disk formats.
//!
//! Binary layout (little-endian): magic `SKTS`, version `u32`, `N: u64`,
//! `N_t: u64`, then the `N × N_t` entries row-major as `f64`, then the `N_t`
//! sample times.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Result, SktError};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SKTS";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Which species a snapshot set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Species {
    U1,
    U2,
}

impl Species {
    pub fn index(self) -> usize {
        match self {
            Species::U1 => 1,
            Species::U2 => 2,
        }
    }
}

/// States of one species at a sequence of times, one column per time.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    data: DMatrix<f64>,
    times: Vec<f64>,
    species: Species,
}

impl SnapshotMatrix {
    pub fn new(data: DMatrix<f64>, times: Vec<f64>, species: Species) -> Result<Self> {
        if data.ncols() != times.len() {
            return Err(SktError::DimensionMismatch {
                expected: data.ncols(),
                found: times.len(),
                context: "snapshot times",
            });
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(SktError::InvalidSize("snapshot matrix contains NaN".into()));
        }
        Ok(Self {
            data,
            times,
            species,
        })
    }

    /// Build from column-major storage of `n` rows.
    pub fn from_columns(n: usize, columns: Vec<f64>, times: Vec<f64>, species: Species) -> Result<Self> {
        if n == 0 || columns.len() != n * times.len() {
            return Err(SktError::InvalidSize(format!(
                "{} values do not form {} columns of length {n}",
                columns.len(),
                times.len()
            )));
        }
        Self::new(DMatrix::from_vec(n, times.len(), columns), times, species)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn species(&self) -> Species {
        self.species
    }

    /// Number of stored samples `N_t`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State dimension `N`.
    pub fn n_states(&self) -> usize {
        self.data.nrows()
    }

    pub fn column(&self, n: usize) -> &[f64] {
        let rows = self.data.nrows();
        &self.data.as_slice()[n * rows..(n + 1) * rows]
    }

    /// Columns `range` as a new snapshot set.
    pub fn window(&self, range: std::ops::RangeInclusive<usize>) -> Result<Self> {
        let (a, b) = (*range.start(), *range.end());
        if a > b || b >= self.len() {
            return Err(SktError::InvalidSize(format!(
                "window {a}..={b} outside 0..{}",
                self.len()
            )));
        }
        Self::new(
            self.data.columns(a, b - a + 1).into_owned(),
            self.times[a..=b].to_vec(),
            self.species,
        )
    }

    /// Leading samples with `t <= t_max` (plus a small tolerance).
    pub fn up_to(&self, t_max: f64) -> Result<Self> {
        let tol = 1e-9 * t_max.abs().max(1.0);
        let last = self.times.iter().rposition(|&t| t <= t_max + tol).ok_or_else(|| {
            SktError::InvalidSize(format!("no snapshot at or before t = {t_max}"))
        })?;
        self.window(0..=last)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n_states() as u64).to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        for i in 0..self.n_states() {
            for j in 0..self.len() {
                w.write_all(&self.data[(i, j)].to_le_bytes())?;
            }
        }
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R, species: Species) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(SktError::Format(format!("bad snapshot magic {magic:?}")));
        }
        let version = read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(SktError::Format(format!(
                "unsupported snapshot version {version}"
            )));
        }
        let n = read_u64(&mut r)? as usize;
        let nt = read_u64(&mut r)? as usize;
        let mut data = DMatrix::zeros(n, nt);
        for i in 0..n {
            for j in 0..nt {
                data[(i, j)] = read_f64(&mut r)?;
            }
        }
        let times = (0..nt).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
        Self::new(data, times, species)
    }

    /// CSV for inspection: one row per node, one column per sample time.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["node".to_string()];
        header.extend(self.times.iter().map(|t| format!("t={t:e}")));
        w.write_record(&header)?;
        for i in 0..self.n_states() {
            let mut row = vec![i.to_string()];
            row.extend((0..self.len()).map(|j| format!("{:e}", self.data[(i, j)])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
