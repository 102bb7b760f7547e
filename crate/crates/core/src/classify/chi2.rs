use rayon::prelude::*;

use crate::descriptor::JointHistogram;
use crate::error::{Error, Result};

/// Sparse histogram: nonzero `(cell, value)` pairs in ascending cell order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Descriptor {
    pub entries: Vec<(u64, f64)>,
}

impl Descriptor {
    /// Sorts and merges duplicate cells; zero values are dropped.
    pub fn from_pairs(mut pairs: Vec<(u64, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u64, f64)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            match entries.last_mut() {
                Some((j, w)) if *j == i => *w += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        Descriptor { entries }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Descriptor {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u64, v))
                .collect(),
        }
    }

    /// Normalized copy of `hist`'s cells.
    pub fn from_histogram(hist: &JointHistogram) -> Result<Self> {
        let h = if hist.is_normalized() {
            hist.clone()
        } else {
            hist.normalize()?
        };
        Ok(Descriptor {
            entries: h.entries(),
        })
    }

    pub fn nonzero(&self) -> usize {
        self.entries.len()
    }
}

/// `sum_i (x_i - y_i)^2 / (x_i + y_i)` over the union of nonzero cells.
pub fn chi2_distance(x: &Descriptor, y: &Descriptor) -> f64 {
    let (a, b) = (&x.entries, &y.entries);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0;
    while i < a.len() && j < b.len() {
        let (ka, va) = a[i];
        let (kb, vb) = b[j];
        if ka == kb {
            let s = va + vb;
            if s != 0.0 {
                let t = va - vb;
                d += t * t / s;
            }
            i += 1;
            j += 1;
        } else if ka < kb {
            d += va;
            i += 1;
        } else {
            d += vb;
            j += 1;
        }
    }
    d += a[i..].iter().map(|(_, v)| v).sum::<f64>();
    d += b[j..].iter().map(|(_, v)| v).sum::<f64>();
    d
}

/// Dense variant; both vectors must have the same length.
pub fn chi2_distance_dense(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims(x.len(), y.len()));
    }
    Ok(x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let s = a + b;
            if s == 0.0 {
                0.0
            } else {
                (a - b) * (a - b) / s
            }
        })
        .sum())
}

pub fn chi2_kernel_from_distance(d: f64, gamma: f64) -> f64 {
    (-gamma * d).exp()
}

pub fn chi2_kernel(x: &Descriptor, y: &Descriptor, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::BadParams(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok(chi2_kernel_from_distance(chi2_distance(x, y), gamma))
}

/// Symmetric matrix of pairwise distances, computed once and shared by folds.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn compute(items: &[Descriptor]) -> Self {
        let n = items.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| chi2_distance(&items[i], &items[j]))
                    .collect()
            })
            .collect();
        let mut d = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                let j = i + 1 + k;
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        DistanceMatrix { n, d }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = f(i, j);
            }
        }
        DistanceMatrix { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DistanceMatrix {
            n: self.n,
            d: self.d.iter().map(|v| v * factor).collect(),
        }
    }
}
