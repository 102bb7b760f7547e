use super::pca::PcaModel;
use crate::error::{Error, Result};

/// Where the single edge of a binary histogram sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdRule {
    /// Sign of the uncentered projection `c . x`.
    #[default]
    Zero,
    /// Centered projection against its training mean.
    Mean,
}

impl ThresholdRule {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdRule::Zero => "zero",
            ThresholdRule::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(ThresholdRule::Zero),
            "mean" => Ok(ThresholdRule::Mean),
            other => Err(Error::BadParams(format!(
                "unknown threshold rule `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinningSpec {
    pub n_bins: usize,
    pub d: f64,
    pub binary: bool,
    pub rule: ThresholdRule,
    /// Per dimension, `n_bins + 1` increasing edges.
    pub edges: Vec<Vec<f64>>,
}

/// Equidistant bins over `proj_mean +- d proj_std`; binary mode puts the only
/// interior edge at 0 (zero rule) or at the projection mean (mean rule).
pub fn make_binning(
    model: &PcaModel,
    m: usize,
    n_bins: usize,
    d: f64,
    binary: bool,
) -> Result<BinningSpec> {
    make_binning_with(model, m, n_bins, d, binary, ThresholdRule::Zero)
}

pub fn make_binning_with(
    model: &PcaModel,
    m: usize,
    n_bins: usize,
    d: f64,
    binary: bool,
    rule: ThresholdRule,
) -> Result<BinningSpec> {
    if n_bins < 2 {
        return Err(Error::BadParams(format!(
            "n_bins must be >= 2, got {n_bins}"
        )));
    }
    if binary && n_bins != 2 {
        return Err(Error::BadParams(
            "binary histograms have exactly 2 bins".into(),
        ));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::BadParams(format!("d must be positive, got {d}")));
    }
    if m == 0 || m > model.max_components() {
        return Err(Error::dims(
            format!("1..={} components", model.max_components()),
            m,
        ));
    }
    let edges = (0..m)
        .map(|i| {
            let (mu, sd) = (model.proj_mean[i], model.proj_std[i]);
            let (lo, hi) = (mu - d * sd, mu + d * sd);
            if binary {
                let t = match rule {
                    ThresholdRule::Zero => 0.0,
                    ThresholdRule::Mean => mu,
                };
                vec![lo.min(t), t, hi.max(t)]
            } else {
                let width = (hi - lo) / n_bins as f64;
                (0..=n_bins).map(|k| lo + k as f64 * width).collect()
            }
        })
        .collect();
    Ok(BinningSpec {
        n_bins,
        d,
        binary,
        rule,
        edges,
    })
}

impl BinningSpec {
    pub fn dims(&self) -> usize {
        self.edges.len()
    }

    /// Whether projections must be centered on the model mean before binning.
    pub fn centered(&self) -> bool {
        !(self.binary && self.rule == ThresholdRule::Zero)
    }

    /// Bin of value `v` along dimension `i`; out-of-range values clamp.
    pub fn bin(&self, i: usize, v: f64) -> usize {
        let e = &self.edges[i];
        if self.binary {
            return usize::from(v > e[1]);
        }
        let lo = e[0];
        let width = (e[self.n_bins] - lo) / self.n_bins as f64;
        if !(width > 0.0) {
            return 0;
        }
        let k = ((v - lo) / width).floor();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.n_bins - 1)
        }
    }

    /// Mixed-radix cell index `sum_i bin_i n_bins^i`.
    pub fn cell_index(&self, v: &[f64]) -> u64 {
        let mut idx = 0u64;
        let mut radix = 1u64;
        for (i, &x) in v.iter().enumerate() {
            idx += self.bin(i, x) as u64 * radix;
            radix = radix.wrapping_mul(self.n_bins as u64);
        }
        idx
    }

    /// Short description written into configuration digests.
    pub fn rule_name(&self) -> &'static str {
        if self.binary {
            self.rule.name()
        } else {
            "equidistant"
        }
    }
}

/// PCA projection followed by binning: maps a feature vector to its cell.
#[derive(Debug, Clone)]
pub struct Quantizer {
    pub model: PcaModel,
    pub binning: BinningSpec,
    pub m: usize,
}

impl Quantizer {
    pub fn new(model: PcaModel, binning: BinningSpec) -> Result<Self> {
        let m = binning.dims();
        if m > model.max_components() {
            return Err(Error::dims(model.max_components(), m));
        }
        Ok(Quantizer { model, binning, m })
    }

    /// Projection fed to the binning for feature vector `x`.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        if self.binning.centered() {
            self.model.project_centered(x, &mut out[..self.m]);
        } else {
            self.model.project_uncentered(x, &mut out[..self.m]);
        }
    }

    pub fn cell(&self, x: &[f64], scratch: &mut [f64]) -> u64 {
        self.project_into(x, scratch);
        self.binning.cell_index(&scratch[..self.m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(mean: &[f64], std: &[f64]) -> PcaModel {
        let n = mean.len();
        PcaModel {
            field_set: String::new(),
            channel_hash: 0,
            seed: 0,
            input_dim: n,
            mean: vec![0.0; n],
            components: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            proj_mean: mean.to_vec(),
            proj_std: std.to_vec(),
        }
    }

    #[test]
    fn equidistant_edges() {
        let b = make_binning(&model(&[0.0], &[1.0]), 1, 2, 5.0, false).unwrap();
        assert_eq!(b.edges[0], vec![-5.0, 0.0, 5.0]);
        let b = make_binning(&model(&[1.0], &[2.0]), 1, 5, 5.0, false).unwrap();
        assert_eq!(b.edges[0], vec![-9.0, -5.0, -1.0, 3.0, 7.0, 11.0]);
        assert_eq!(b.bin(0, -100.0), 0);
        assert_eq!(b.bin(0, 100.0), 4);
        assert_eq!(b.bin(0, -1.0), 2);
        assert_eq!(b.bin(0, 2.9), 2);
    }

    #[test]
    fn binary_threshold_ignores_statistics() {
        let b = make_binning(&model(&[3.0, -2.0], &[0.5, 7.0]), 2, 2, 5.0, true).unwrap();
        assert_eq!(b.edges[0][1], 0.0);
        assert_eq!(b.edges[1][1], 0.0);
        assert_eq!(b.cell_index(&[0.3, -0.7]), 1);
        assert_eq!(b.cell_index(&[-0.3, 0.7]), 2);
        assert_eq!(b.cell_index(&[0.0, 0.0]), 0);
        let b = make_binning_with(&model(&[3.0], &[1.0]), 1, 2, 5.0, true, ThresholdRule::Mean)
            .unwrap();
        assert_eq!(b.edges[0][1], 3.0);
        assert!(b.centered());
    }

    #[test]
    fn rejects_bad_parameters() {
        let m = model(&[0.0], &[1.0]);
        assert!(make_binning(&m, 1, 1, 5.0, false).is_err());
        assert!(make_binning(&m, 1, 3, 5.0, true).is_err());
        assert!(make_binning(&m, 1, 2, 0.0, false).is_err());
        assert!(make_binning(&m, 2, 2, 5.0, false).is_err());
    }
}
