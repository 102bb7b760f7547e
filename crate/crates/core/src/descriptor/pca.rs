//! Principal component analysis of per-pixel feature vectors.
//!
//! File layout, little-endian: magic `STRFPCA1`, `u32` name length, name
//! bytes (UTF-8 field-set name), `u64` channel-order hash, `u64` sampling
//! seed, `u32` N, `u32` M_max, then `f64` arrays: mean (N), components
//! (M_max rows of N), proj_mean (M_max), proj_std (M_max).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const PCA_MAGIC: &[u8; 8] = b"STRFPCA1";

/// Eigenvalues below this fraction of the largest are treated as degenerate.
const RELATIVE_EIGEN_FLOOR: f64 = 1e-12;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub field_set: String,
    pub channel_hash: u64,
    pub seed: u64,
    pub input_dim: usize,
    pub mean: Vec<f64>,
    /// Principal directions, one row per component, descending variance.
    pub components: Vec<Vec<f64>>,
    pub proj_mean: Vec<f64>,
    pub proj_std: Vec<f64>,
}

/// Fits PCA to `samples`, a row-major `n x dim` matrix. Returns at most
/// `m_max` components; directions with (numerically) zero variance are dropped.
pub fn fit_pca(samples: &[f64], dim: usize, m_max: usize) -> Result<PcaModel> {
    if dim == 0 || !samples.len().is_multiple_of(dim) {
        return Err(Error::dims(format!("multiple of {dim}"), samples.len()));
    }
    if m_max == 0 || m_max > dim {
        return Err(Error::BadParams(format!(
            "component count {m_max} must be in 1..={dim}"
        )));
    }
    let n = samples.len() / dim;
    if n < m_max + 1 {
        return Err(Error::InsufficientSamples {
            needed: m_max + 1,
            got: n,
        });
    }

    // Fixed-size chunks summed in order keep the result independent of the
    // thread count.
    let partial_sums: Vec<Vec<f64>> = samples
        .par_chunks(CHUNK * dim)
        .map(|chunk| {
            let mut s = vec![0.0; dim];
            for row in chunk.chunks_exact(dim) {
                for (a, &v) in s.iter_mut().zip(row) {
                    *a += v;
                }
            }
            s
        })
        .collect();
    let mut mean = vec![0.0; dim];
    for s in &partial_sums {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let partial_cov: Vec<Vec<f64>> = samples
        .par_chunks(CHUNK * dim)
        .map(|chunk| {
            let mut c = vec![0.0; dim * dim];
            let mut centered = vec![0.0; dim];
            for row in chunk.chunks_exact(dim) {
                for ((d, &v), &m) in centered.iter_mut().zip(row).zip(&mean) {
                    *d = v - m;
                }
                for i in 0..dim {
                    let ci = centered[i];
                    if ci == 0.0 {
                        continue;
                    }
                    let dst = &mut c[i * dim..i * dim + i + 1];
                    for (o, &cj) in dst.iter_mut().zip(&centered[..=i]) {
                        *o += ci * cj;
                    }
                }
            }
            c
        })
        .collect();
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for c in &partial_cov {
        for i in 0..dim {
            for j in 0..=i {
                cov[(i, j)] += c[i * dim + j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..dim {
        for j in 0..=i {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let largest = eig.eigenvalues[order[0]];
    if !(largest > 0.0) || !largest.is_finite() {
        return Err(Error::DegenerateCovariance);
    }

    let mut components = Vec::with_capacity(m_max);
    for &k in order.iter().take(m_max) {
        if eig.eigenvalues[k] <= RELATIVE_EIGEN_FLOOR * largest {
            break;
        }
        let mut row: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
        if let Some(first) = row.iter().find(|v| v.abs() > 1e-12) {
            if *first < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
            }
        }
        components.push(row);
    }

    let m = components.len();
    let mut model = PcaModel {
        field_set: String::new(),
        channel_hash: 0,
        seed: 0,
        input_dim: dim,
        mean,
        components,
        proj_mean: vec![0.0; m],
        proj_std: vec![0.0; m],
    };

    let partial_proj: Vec<(Vec<f64>, Vec<f64>)> = samples
        .par_chunks(CHUNK * dim)
        .map(|chunk| {
            let mut s = vec![0.0; m];
            let mut s2 = vec![0.0; m];
            let mut p = vec![0.0; m];
            for row in chunk.chunks_exact(dim) {
                model.project_centered(row, &mut p);
                for i in 0..m {
                    s[i] += p[i];
                    s2[i] += p[i] * p[i];
                }
            }
            (s, s2)
        })
        .collect();
    let mut s = vec![0.0; m];
    let mut s2 = vec![0.0; m];
    for (a, b) in &partial_proj {
        for i in 0..m {
            s[i] += a[i];
            s2[i] += b[i];
        }
    }
    for i in 0..m {
        let mu = s[i] / n as f64;
        let var = ((s2[i] - n as f64 * mu * mu) / denom).max(0.0);
        model.proj_mean[i] = mu;
        model.proj_std[i] = var.sqrt();
    }
    // A direction can pass the eigenvalue floor yet project to a constant.
    while model.proj_std.last().is_some_and(|&sd| !(sd > 0.0)) {
        model.components.pop();
        model.proj_mean.pop();
        model.proj_std.pop();
    }
    if model.components.is_empty() {
        return Err(Error::DegenerateCovariance);
    }
    Ok(model)
}

impl PcaModel {
    pub fn max_components(&self) -> usize {
        self.components.len()
    }

    /// Writes `c_i . (x - mean)` for the first `out.len()` components.
    pub fn project_centered(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            let mut acc = 0.0;
            for ((&ci, &xi), &mi) in c.iter().zip(x).zip(&self.mean) {
                acc += ci * (xi - mi);
            }
            *o = acc;
        }
    }

    /// Writes `c_i . x` (no mean subtraction); used by the zero-threshold
    /// binary rule so that scaling `x` by `lambda > 0` scales every output.
    pub fn project_uncentered(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            let mut acc = 0.0;
            for (&ci, &xi) in c.iter().zip(x) {
                acc += ci * xi;
            }
            *o = acc;
        }
    }

    pub fn check_input(&self, x: &[f64], m: usize) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::dims(self.input_dim, x.len()));
        }
        if m > self.components.len() {
            return Err(Error::dims(
                format!("at most {} components", self.components.len()),
                m,
            ));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(PCA_MAGIC)?;
        let name = self.field_set.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&self.channel_hash.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.input_dim as u32).to_le_bytes())?;
        w.write_all(&(self.components.len() as u32).to_le_bytes())?;
        let floats = self
            .mean
            .iter()
            .chain(self.components.iter().flatten())
            .chain(&self.proj_mean)
            .chain(&self.proj_std);
        for v in floats {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<PcaModel> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::read_from(&mut bytes.as_slice())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<PcaModel> {
        let corrupt = |m: &str| Error::CorruptHeader(format!("PCA model: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated"))?;
        if &magic != PCA_MAGIC {
            return Err(Error::UnsupportedFormat("missing STRFPCA1 magic".into()));
        }
        let name_len = read_u32(r)? as usize;
        if name_len > 4096 {
            return Err(corrupt("name too long"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| corrupt("truncated"))?;
        let field_set = String::from_utf8(name).map_err(|_| corrupt("name is not UTF-8"))?;
        let channel_hash = read_u64(r)?;
        let seed = read_u64(r)?;
        let n = read_u32(r)? as usize;
        let m = read_u32(r)? as usize;
        if n == 0 || m == 0 || m > n || n > 1 << 16 {
            return Err(corrupt("bad dimensions"));
        }
        let mut floats = |k: usize| -> Result<Vec<f64>> { (0..k).map(|_| read_f64(r)).collect() };
        let mean = floats(n)?;
        let flat = floats(m * n)?;
        let proj_mean = floats(m)?;
        let proj_std = floats(m)?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        Ok(PcaModel {
            field_set,
            channel_hash,
            seed,
            input_dim: n,
            mean,
            components: flat.chunks(n).map(|c| c.to_vec()).collect(),
            proj_mean,
            proj_std,
        })
    }
}

/// `components[..m] . (x - mean)`.
pub fn project(model: &PcaModel, x: &[f64], m: usize) -> Result<Vec<f64>> {
    model.check_input(x, m)?;
    let mut out = vec![0.0; m];
    model.project_centered(x, &mut out);
    Ok(out)
}

fn read_bytes<R: Read, const K: usize>(r: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)
        .map_err(|_| Error::CorruptHeader("unexpected end of file".into()))?;
    Ok(b)
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_bytes(r)?))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_bytes(r)?))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_bytes(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
        // Box-Muller
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn cloud(n: usize, stds: &[f64], offset: &[f64], seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n * stds.len());
        for _ in 0..n {
            for (s, o) in stds.iter().zip(offset) {
                out.push(o + s * gaussian(&mut rng));
            }
        }
        out
    }

    #[test]
    fn anisotropic_cloud_aligns_with_axis() {
        let data = cloud(5000, &[3.0, 1.0], &[0.0, 0.0], 1);
        let m = fit_pca(&data, 2, 2).unwrap();
        assert!((m.components[0][0].abs() - 1.0).abs() < 1e-2);
        assert!(m.components[0][1].abs() < 1e-1);
        assert!(m.components[0][0] > 0.0);
        assert!(m.proj_std[0] > m.proj_std[1]);
    }

    #[test]
    fn projections_are_centered() {
        let data = cloud(2000, &[1.0, 2.0, 0.5], &[0.0, 7.0, -3.0], 2);
        let m = fit_pca(&data, 3, 3).unwrap();
        for pm in &m.proj_mean {
            assert!(pm.abs() < 1e-9);
        }
    }

    #[test]
    fn full_basis_is_an_isometry() {
        let data = cloud(500, &[1.0, 2.0, 0.5, 3.0], &[1.0, 2.0, 3.0, 4.0], 3);
        let m = fit_pca(&data, 4, 4).unwrap();
        for (i, a) in m.components.iter().enumerate() {
            for (j, b) in m.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
            }
        }
        let x = [0.3, -2.0, 5.0, 1.5];
        let p = project(&m, &x, 4).unwrap();
        let pn: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dn: f64 = x
            .iter()
            .zip(&m.mean)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!((pn - dn).abs() < 1e-6);
        // reconstruction
        let mut rec = m.mean.clone();
        for (k, c) in m.components.iter().enumerate() {
            for (r, ci) in rec.iter_mut().zip(c) {
                *r += p[k] * ci;
            }
        }
        for (r, xi) in rec.iter().zip(&x) {
            assert!((r - xi).abs() < 1e-6);
        }
        let z = project(&m, &m.mean, 4).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-12));
        let e0: Vec<f64> = m
            .mean
            .iter()
            .zip(&m.components[0])
            .map(|(a, b)| a + b)
            .collect();
        let p0 = project(&m, &e0, 4).unwrap();
        assert!((p0[0] - 1.0).abs() < 1e-9 && p0[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn degenerate_and_small_inputs() {
        let constant = vec![2.0; 30];
        assert!(matches!(
            fit_pca(&constant, 3, 2),
            Err(Error::DegenerateCovariance)
        ));
        assert!(matches!(
            fit_pca(&[1.0, 2.0, 3.0, 4.0], 2, 2),
            Err(Error::InsufficientSamples { needed: 3, got: 2 })
        ));
        // rank one data keeps a single component
        let line: Vec<f64> = (0..50).flat_map(|i| [i as f64, 2.0 * i as f64]).collect();
        let m = fit_pca(&line, 2, 2).unwrap();
        assert_eq!(m.max_components(), 1);
        assert!(matches!(
            project(&m, &[1.0], 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn file_roundtrip() {
        let data = cloud(100, &[1.0, 2.0, 3.0], &[0.0; 3], 4);
        let mut m = fit_pca(&data, 3, 2).unwrap();
        m.field_set = "STRF-Njet".into();
        m.channel_hash = 0xdead_beef;
        m.seed = 42;
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"STRFPCA1");
        assert_eq!(buf.len(), 8 + 4 + 9 + 8 + 8 + 4 + 4 + 8 * (3 + 6 + 2 + 2));
        assert_eq!(PcaModel::read_from(&mut buf.as_slice()).unwrap(), m);
        assert!(PcaModel::read_from(&mut &buf[..buf.len() - 1]).is_err());
    }
}
