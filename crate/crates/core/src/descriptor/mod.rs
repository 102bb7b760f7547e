//! PCA reduction of jet responses and joint histogram descriptors.

mod binning;
mod histogram;
mod pca;

pub use binning::{make_binning, make_binning_with, BinningSpec, Quantizer, ThresholdRule};
pub use histogram::{cell_count, JointHistogram, DENSE_LIMIT, HIST_MAGIC};
pub use pca::{fit_pca, project, PcaModel, PCA_MAGIC};

use crate::error::Result;

pub fn accumulate(hist: &mut JointHistogram, binning: &BinningSpec, v: &[f64]) -> Result<()> {
    hist.accumulate(binning, v)
}

pub fn normalize(hist: &JointHistogram) -> Result<JointHistogram> {
    hist.normalize()
}

pub fn merge(a: &JointHistogram, b: &JointHistogram) -> Result<JointHistogram> {
    a.merge(b)
}
