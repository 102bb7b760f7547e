//! Published best-parameter rows, addressable as
//! `appendix-b:<benchmark>-<classifier>[-rotinv|-spatial|-previous]`.

use crate::classify::CvScheme;
use crate::error::{Error, Result};
use crate::rfields::FieldSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetClassifier {
    Svm,
    Nn,
}

impl PresetClassifier {
    pub fn name(self) -> &'static str {
        match self {
            PresetClassifier::Svm => "svm",
            PresetClassifier::Nn => "nn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub benchmark: &'static str,
    pub classifier: PresetClassifier,
    pub field_set: FieldSet,
    pub n_comp: usize,
    pub n_bins: usize,
    pub binary: bool,
    pub sigma_s: &'static [f64],
    pub sigma_tau_ms: &'static [f64],
}

impl Preset {
    pub fn name(&self) -> String {
        let suffix = match self.field_set {
            FieldSet::StrfNjet => "",
            FieldSet::StrfRotInv => "-rotinv",
            FieldSet::RfSpatial => "-spatial",
            FieldSet::StrfNjetPrevious => "-previous",
        };
        format!(
            "appendix-b:{}-{}{}",
            self.benchmark,
            self.classifier.name(),
            suffix
        )
    }

    /// Evaluation protocol used for the benchmark.
    pub fn scheme(&self) -> CvScheme {
        default_scheme(self.benchmark).expect("preset benchmarks are known")
    }
}

pub const BENCHMARKS: [&str; 6] = ["ucla8", "ucla9", "ucla50", "alpha", "beta", "gamma"];

pub fn default_scheme(benchmark: &str) -> Option<CvScheme> {
    match benchmark {
        "ucla50" => Some(CvScheme::KFoldByInstance { folds: 4 }),
        "ucla8" | "ucla9" => Some(CvScheme::RandomSplit {
            trials: 1000,
            train_fraction: 0.5,
        }),
        "alpha" | "beta" | "gamma" => Some(CvScheme::LeaveOneOut),
        _ => None,
    }
}

macro_rules! row {
    ($bench:literal, $clf:ident, $fs:ident, $nc:literal, [$($s:literal),*], [$($t:literal),*]) => {
        Preset {
            benchmark: $bench,
            classifier: PresetClassifier::$clf,
            field_set: FieldSet::$fs,
            n_comp: $nc,
            n_bins: 2,
            binary: true,
            sigma_s: &[$($s as f64),*],
            sigma_tau_ms: &[$($t as f64),*],
        }
    };
}

pub fn all() -> Vec<Preset> {
    vec![
        row!("ucla8", Svm, StrfNjet, 16, [4, 8], [100, 200]),
        row!("ucla8", Nn, StrfNjet, 16, [4], [50]),
        row!("ucla9", Svm, StrfNjet, 14, [1, 2], [50, 100]),
        row!("ucla9", Nn, StrfNjet, 14, [1], [50]),
        row!("ucla50", Svm, StrfNjet, 13, [4, 8], [50, 100]),
        row!("ucla50", Nn, StrfNjet, 12, [8, 16], [50, 100]),
        row!("ucla8", Svm, StrfRotInv, 14, [4, 8], [50, 100]),
        row!("ucla8", Nn, StrfRotInv, 13, [4, 8], [50, 100]),
        row!("ucla9", Svm, StrfRotInv, 12, [4, 8], [50, 100]),
        row!("ucla9", Nn, StrfRotInv, 13, [1, 2], [100, 200]),
        row!("ucla50", Svm, StrfRotInv, 6, [4, 8], [50, 100]),
        row!("ucla50", Nn, StrfRotInv, 5, [4, 8], [50, 100]),
        row!("ucla8", Svm, RfSpatial, 10, [8, 16], []),
        row!("ucla8", Nn, RfSpatial, 9, [8, 16], []),
        row!("ucla9", Svm, RfSpatial, 9, [4, 8], []),
        row!("ucla9", Nn, RfSpatial, 6, [4, 8], []),
        row!("ucla50", Svm, RfSpatial, 5, [4, 8], []),
        row!("ucla50", Nn, RfSpatial, 5, [4, 8], []),
        row!("ucla8", Svm, StrfNjetPrevious, 15, [1, 2], [50, 100]),
        row!("ucla8", Nn, StrfNjetPrevious, 15, [1, 2], [50, 100]),
        row!("ucla9", Svm, StrfNjetPrevious, 15, [1, 2], [50, 100]),
        row!("ucla9", Nn, StrfNjetPrevious, 15, [1, 2], [50, 100]),
        row!("ucla50", Svm, StrfNjetPrevious, 15, [1, 2], [50, 100]),
        row!("ucla50", Nn, StrfNjetPrevious, 15, [1, 2], [50, 100]),
        row!("alpha", Svm, StrfNjet, 17, [2], [200]),
        row!("alpha", Nn, StrfNjet, 11, [1], [400]),
        row!("beta", Svm, StrfNjet, 17, [8], [200]),
        row!("beta", Nn, StrfNjet, 13, [2, 4], [200, 400]),
        row!("gamma", Svm, StrfNjet, 16, [4, 8], [50, 100]),
        row!("gamma", Nn, StrfNjet, 13, [2, 4], [200, 400]),
        row!("alpha", Svm, StrfRotInv, 5, [8, 16], [100, 200]),
        row!("alpha", Nn, StrfRotInv, 5, [8, 16], [100, 200]),
        row!("beta", Svm, StrfRotInv, 15, [4, 8], [200, 400]),
        row!("beta", Nn, StrfRotInv, 17, [8, 16], [100, 200]),
        row!("gamma", Svm, StrfRotInv, 15, [2, 4], [100, 200]),
        row!("gamma", Nn, StrfRotInv, 16, [2, 4], [50, 100]),
        row!("alpha", Svm, RfSpatial, 8, [8, 16], []),
        row!("alpha", Nn, RfSpatial, 5, [4, 8], []),
        row!("beta", Svm, RfSpatial, 10, [2, 4], []),
        row!("beta", Nn, RfSpatial, 10, [4, 8], []),
        row!("gamma", Svm, RfSpatial, 10, [2, 4], []),
        row!("gamma", Nn, RfSpatial, 10, [2, 4], []),
        row!("alpha", Svm, StrfNjetPrevious, 15, [2, 4], [200, 400]),
        row!("alpha", Nn, StrfNjetPrevious, 15, [2, 4], [200, 400]),
        row!("beta", Svm, StrfNjetPrevious, 15, [2, 4], [200, 400]),
        row!("beta", Nn, StrfNjetPrevious, 15, [2, 4], [200, 400]),
        row!("gamma", Svm, StrfNjetPrevious, 15, [2, 4], [200, 400]),
        row!("gamma", Nn, StrfNjetPrevious, 15, [2, 4], [200, 400]),
    ]
}

/// Looks a preset up by name (the `appendix-b:` prefix is optional).
pub fn find(name: &str) -> Result<Preset> {
    let key = name.to_ascii_lowercase();
    let key = if key.starts_with("appendix-b:") {
        key
    } else {
        format!("appendix-b:{key}")
    };
    all()
        .into_iter()
        .find(|p| p.name() == key)
        .ok_or_else(|| Error::BadParams(format!("unknown preset `{name}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_shape() {
        let rows = all();
        assert_eq!(rows.len(), 48);
        let mut names: Vec<String> = rows.iter().map(|p| p.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 48);
        for p in &rows {
            assert!(p.n_comp <= 17 && p.n_comp >= 2);
            assert_eq!(p.field_set.is_temporal(), !p.sigma_tau_ms.is_empty());
            assert!(BENCHMARKS.contains(&p.benchmark));
        }
    }

    #[test]
    fn lookup() {
        let p = find("appendix-b:ucla50-svm").unwrap();
        assert_eq!(p.n_comp, 13);
        assert_eq!(p.sigma_s, &[4.0, 8.0]);
        assert_eq!(p.scheme(), CvScheme::KFoldByInstance { folds: 4 });
        let p = find("alpha-nn-spatial").unwrap();
        assert_eq!(p.n_comp, 5);
        assert_eq!(p.scheme(), CvScheme::LeaveOneOut);
        assert!(find("appendix-b:nope").is_err());
    }
}
