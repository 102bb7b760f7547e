//! Joint histograms over quantized PCA projections.
//!
//! Descriptor file layout, little-endian: magic `STRFHIST1`, 32-byte config
//! digest, `u32` M, `u32` n_bins, `u8` binary flag, `u8` normalized flag,
//! `u64` total count, `u64` record count, then records of (`u64` cell index,
//! `f64` value) in ascending index order. Only nonzero cells are stored.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::binning::BinningSpec;
use super::pca::{read_f64, read_u32, read_u64};
use crate::error::{Error, Result};

pub const HIST_MAGIC: &[u8; 9] = b"STRFHIST1";

/// Histograms with at most this many cells use dense storage.
pub const DENSE_LIMIT: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
enum Cells {
    Dense(Vec<f64>),
    Sparse(HashMap<u64, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    dims: usize,
    n_bins: usize,
    binary: bool,
    cells: Cells,
    total: u64,
    normalized: bool,
}

pub fn cell_count(dims: usize, n_bins: usize) -> Result<u64> {
    (n_bins as u64)
        .checked_pow(dims as u32)
        .ok_or_else(|| Error::BadParams(format!("{n_bins}^{dims} cells overflow 64 bits")))
}

impl JointHistogram {
    /// Empty histogram; dense when `n_bins^dims <= 2^16`.
    pub fn new(dims: usize, n_bins: usize) -> Result<Self> {
        let n = cell_count(dims, n_bins)?;
        Self::with_storage(dims, n_bins, n <= DENSE_LIMIT)
    }

    pub fn new_sparse(dims: usize, n_bins: usize) -> Result<Self> {
        Self::with_storage(dims, n_bins, false)
    }

    pub fn new_dense(dims: usize, n_bins: usize) -> Result<Self> {
        let n = cell_count(dims, n_bins)?;
        if n > 1 << 28 {
            return Err(Error::BadParams(format!(
                "{n} cells is too many for dense storage"
            )));
        }
        Self::with_storage(dims, n_bins, true)
    }

    fn with_storage(dims: usize, n_bins: usize, dense: bool) -> Result<Self> {
        if dims == 0 || n_bins < 2 {
            return Err(Error::BadParams(format!(
                "histogram needs dims >= 1 and n_bins >= 2, got {dims} and {n_bins}"
            )));
        }
        let n = cell_count(dims, n_bins)?;
        Ok(JointHistogram {
            dims,
            n_bins,
            binary: n_bins == 2,
            cells: if dense {
                Cells::Dense(vec![0.0; n as usize])
            } else {
                Cells::Sparse(HashMap::new())
            },
            total: 0,
            normalized: false,
        })
    }

    /// Histogram shaped for `binning`.
    pub fn for_binning(binning: &BinningSpec) -> Result<Self> {
        let mut h = Self::new(binning.dims(), binning.n_bins)?;
        h.binary = binning.binary;
        Ok(h)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn binary(&self) -> bool {
        self.binary
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.cells, Cells::Dense(_))
    }

    pub fn n_cells(&self) -> u64 {
        cell_count(self.dims, self.n_bins).unwrap_or(u64::MAX)
    }

    /// Increments the cell of projected vector `v`.
    pub fn accumulate(&mut self, binning: &BinningSpec, v: &[f64]) -> Result<()> {
        if v.len() != self.dims || binning.dims() != self.dims || binning.n_bins != self.n_bins {
            return Err(Error::dims(
                format!("{} dims x {} bins", self.dims, self.n_bins),
                format!(
                    "{} values, {} dims x {} bins",
                    v.len(),
                    binning.dims(),
                    binning.n_bins
                ),
            ));
        }
        self.add_cell(binning.cell_index(v))
    }

    /// Increments cell `index` by one.
    pub fn add_cell(&mut self, index: u64) -> Result<()> {
        if self.normalized {
            return Err(Error::NormalizedHistogramWrite);
        }
        match &mut self.cells {
            Cells::Dense(v) => v[index as usize] += 1.0,
            Cells::Sparse(m) => *m.entry(index).or_insert(0.0) += 1.0,
        }
        self.total += 1;
        Ok(())
    }

    pub fn get(&self, index: u64) -> f64 {
        match &self.cells {
            Cells::Dense(v) => v.get(index as usize).copied().unwrap_or(0.0),
            Cells::Sparse(m) => m.get(&index).copied().unwrap_or(0.0),
        }
    }

    pub fn nonzero_count(&self) -> usize {
        match &self.cells {
            Cells::Dense(v) => v.iter().filter(|&&x| x != 0.0).count(),
            Cells::Sparse(m) => m.values().filter(|&&x| x != 0.0).count(),
        }
    }

    /// Nonzero cells in ascending index order.
    pub fn entries(&self) -> Vec<(u64, f64)> {
        match &self.cells {
            Cells::Dense(v) => v
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0.0)
                .map(|(i, &x)| (i as u64, x))
                .collect(),
            Cells::Sparse(m) => {
                let mut e: Vec<(u64, f64)> = m
                    .iter()
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(&i, &x)| (i, x))
                    .collect();
                e.sort_unstable_by_key(|&(i, _)| i);
                e
            }
        }
    }

    pub fn sum(&self) -> f64 {
        self.entries().iter().map(|(_, v)| v).sum()
    }

    /// Relative frequencies; the result rejects further accumulation.
    pub fn normalize(&self) -> Result<JointHistogram> {
        if self.total == 0 {
            return Err(Error::EmptyHistogram);
        }
        if self.normalized {
            return Ok(self.clone());
        }
        let t = self.total as f64;
        let cells = match &self.cells {
            Cells::Dense(v) => Cells::Dense(v.iter().map(|x| x / t).collect()),
            Cells::Sparse(m) => Cells::Sparse(m.iter().map(|(&i, &x)| (i, x / t)).collect()),
        };
        Ok(JointHistogram {
            cells,
            normalized: true,
            ..self.clone_shape()
        })
    }

    fn clone_shape(&self) -> JointHistogram {
        JointHistogram {
            dims: self.dims,
            n_bins: self.n_bins,
            binary: self.binary,
            cells: Cells::Sparse(HashMap::new()),
            total: self.total,
            normalized: self.normalized,
        }
    }

    /// Cellwise sum of two unnormalized histograms of the same shape.
    pub fn merge(&self, other: &JointHistogram) -> Result<JointHistogram> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &JointHistogram) -> Result<()> {
        if self.dims != other.dims || self.n_bins != other.n_bins || self.binary != other.binary {
            return Err(Error::IncompatibleHistograms(format!(
                "{}x{} vs {}x{}",
                self.dims, self.n_bins, other.dims, other.n_bins
            )));
        }
        if self.normalized || other.normalized {
            return Err(Error::IncompatibleHistograms(
                "normalized histograms cannot be merged".into(),
            ));
        }
        for (i, v) in other.entries() {
            match &mut self.cells {
                Cells::Dense(d) => d[i as usize] += v,
                Cells::Sparse(m) => *m.entry(i).or_insert(0.0) += v,
            }
        }
        self.total += other.total;
        Ok(())
    }

    pub fn write(&self, path: &Path, digest: &[u8; 32]) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w, digest)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W, digest: &[u8; 32]) -> Result<()> {
        let entries = self.entries();
        w.write_all(HIST_MAGIC)?;
        w.write_all(digest)?;
        w.write_all(&(self.dims as u32).to_le_bytes())?;
        w.write_all(&(self.n_bins as u32).to_le_bytes())?;
        w.write_all(&[u8::from(self.binary), u8::from(self.normalized)])?;
        w.write_all(&self.total.to_le_bytes())?;
        w.write_all(&(entries.len() as u64).to_le_bytes())?;
        for (i, v) in entries {
            w.write_all(&i.to_le_bytes())?;
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a descriptor file, returning its config digest and histogram.
    pub fn read(path: &Path) -> Result<([u8; 32], JointHistogram)> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read_from(&mut bytes.as_slice())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<([u8; 32], JointHistogram)> {
        let corrupt = |m: &str| Error::CorruptHeader(format!("descriptor: {m}"));
        let mut magic = [0u8; 9];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated"))?;
        if &magic != HIST_MAGIC {
            return Err(Error::UnsupportedFormat("missing STRFHIST1 magic".into()));
        }
        let mut digest = [0u8; 32];
        r.read_exact(&mut digest)
            .map_err(|_| corrupt("truncated"))?;
        let dims = read_u32(r)? as usize;
        let n_bins = read_u32(r)? as usize;
        let mut flags = [0u8; 2];
        r.read_exact(&mut flags).map_err(|_| corrupt("truncated"))?;
        if flags[0] > 1 || flags[1] > 1 {
            return Err(corrupt("bad flags"));
        }
        let total = read_u64(r)?;
        let n_records = read_u64(r)?;
        let mut h = JointHistogram::new(dims, n_bins).map_err(|_| corrupt("bad shape"))?;
        h.binary = flags[0] == 1;
        let n_cells = h.n_cells();
        let mut prev: Option<u64> = None;
        for _ in 0..n_records {
            let i = read_u64(r)?;
            let v = read_f64(r)?;
            if i >= n_cells || prev.is_some_and(|p| p >= i) {
                return Err(corrupt("records out of order or out of range"));
            }
            prev = Some(i);
            match &mut h.cells {
                Cells::Dense(d) => d[i as usize] = v,
                Cells::Sparse(m) => {
                    m.insert(i, v);
                }
            }
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        h.total = total;
        h.normalized = flags[1] == 1;
        Ok((digest, h))
    }
}
