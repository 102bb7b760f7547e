use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use strf_core::classify::{Classifier, CvScheme, SvmParams};
use strf_core::descriptor::ThresholdRule;
use strf_core::pipeline::DescriptorConfig;
use strf_core::presets::{self, Preset, PresetClassifier};
use strf_core::rfields::{FieldSet, TemporalOptions};
use strf_core::scalespace::TauDistribution;

#[derive(Debug, Parser)]
#[command(
    name = "strf",
    version,
    about = "Time-causal receptive field descriptors for dynamic textures"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierChoice {
    Svm,
    Nn,
    Both,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Dataset manifest (tab-separated: path, class, instance[, crop]).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// RF-Spatial, STRF-Njet, STRF-RotInv or STRF-Njet-previous.
    #[arg(long, global = true)]
    pub fieldset: Option<String>,
    /// Spatial scales, comma separated (pixels).
    #[arg(long = "sigma-s", global = true, value_delimiter = ',')]
    pub sigma_s: Option<Vec<f64>>,
    /// Temporal scales, comma separated (milliseconds).
    #[arg(long = "sigma-tau", global = true, value_delimiter = ',')]
    pub sigma_tau: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub ncomp: Option<usize>,
    #[arg(long, global = true)]
    pub nbins: Option<usize>,
    /// Sign-only histograms (two bins per dimension); `--binary=false` overrides a preset.
    #[arg(long, global = true, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub binary: Option<bool>,
    /// Half-width of the binning range in projection standard deviations.
    #[arg(long, global = true)]
    pub d: Option<f64>,
    /// Ratio between successive temporal scale levels.
    #[arg(long, global = true)]
    pub c: Option<f64>,
    /// Number of recursive filter stages.
    #[arg(long = "K", global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Split every video into windows of this many frames.
    #[arg(long, global = true)]
    pub window: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub classifier: Option<ClassifierChoice>,
    #[arg(long = "svm-gamma", global = true, default_value_t = 0.1)]
    pub svm_gamma: f64,
    #[arg(long = "svm-c", global = true, default_value_t = 10_000.0)]
    pub svm_c: f64,
    #[arg(long = "cache-dir", global = true, default_value = ".strf-cache")]
    pub cache_dir: PathBuf,
    #[arg(long, global = true, default_value = "strf-out")]
    pub out: PathBuf,
    /// Named parameter row, e.g. appendix-b:ucla50-svm.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// loo, kfold:<k> or random:<trials>:<train fraction>.
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    /// Frame rate for converting temporal scales (overrides manifest and video).
    #[arg(long, global = true)]
    pub fps: Option<f64>,
    /// Binary threshold rule: zero or mean.
    #[arg(long = "threshold-rule", global = true, default_value = "zero")]
    pub threshold_rule: String,
    /// linear-in-c or quadratic-in-c.
    #[arg(
        long = "tau-distribution",
        global = true,
        default_value = "linear-in-c"
    )]
    pub tau_distribution: String,
    /// Explicit PCA model file instead of the cached one.
    #[arg(long, global = true)]
    pub pca: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute descriptor files for every video (or window) of a manifest.
    Extract(ExtractArgs),
    /// Fit the PCA model on a manifest.
    FitPca(FitPcaArgs),
    /// Cross-validate a classifier and write accuracy and confusion tables.
    Eval,
    /// Grid search over descriptor parameters.
    Tune(TuneArgs),
    /// Generate a synthetic raw container (or the desk3 dataset).
    Synth(SynthArgs),
    /// Aggregate eval summaries or tuning tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Fit the PCA model first when none is available.
    #[arg(long = "fit-pca")]
    pub fit_pca: bool,
}

#[derive(Debug, Args)]
pub struct FitPcaArgs {
    /// Refit even if a cached model exists.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Component counts: comma list and/or ranges such as 2-17.
    #[arg(long = "grid-ncomp")]
    pub grid_ncomp: Option<String>,
    /// given, singles, pairs or both.
    #[arg(long = "grid-scales", default_value = "given")]
    pub grid_scales: String,
    /// Field sets to search, comma separated.
    #[arg(long = "grid-fieldsets", value_delimiter = ',')]
    pub grid_fieldsets: Option<Vec<String>>,
    /// Bin counts to search.
    #[arg(long = "grid-nbins", value_delimiter = ',')]
    pub grid_nbins: Option<Vec<usize>>,
    /// Select parameters by nested cross-validation.
    #[arg(long)]
    pub nested: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// translating-sine, flicker, advected-noise, static-noise, sine-mixture or desk3.
    #[arg(long, default_value = "translating-sine")]
    pub kind: String,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 128)]
    pub frames: usize,
    #[arg(long)]
    pub wavelength: Option<f64>,
    #[arg(long)]
    pub velocity: Option<f64>,
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long = "noise-scale")]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub orientation: Option<f64>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Videos per class for desk3.
    #[arg(long = "per-class", default_value_t = 10)]
    pub per_class: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Eval summary or tune CSV files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Emit (n_comp, mean non-empty cells, accuracy) rows.
    #[arg(long = "size-vs-accuracy")]
    pub size_vs_accuracy: bool,
}

impl Global {
    pub fn preset(&self) -> Result<Option<Preset>> {
        self.preset
            .as_deref()
            .map(presets::find)
            .transpose()
            .map_err(Into::into)
    }

    pub fn descriptor_config(&self) -> Result<DescriptorConfig> {
        let preset = self.preset()?;
        let d = DescriptorConfig::default();
        let field_set = match (&self.fieldset, &preset) {
            (Some(s), _) => FieldSet::parse(s)?,
            (None, Some(p)) => p.field_set,
            _ => d.field_set,
        };
        let sigma_s = self
            .sigma_s
            .clone()
            .or_else(|| preset.as_ref().map(|p| p.sigma_s.to_vec()))
            .unwrap_or(d.sigma_s);
        let sigma_tau_ms = if field_set.is_temporal() {
            self.sigma_tau
                .clone()
                .or_else(|| {
                    preset
                        .as_ref()
                        .filter(|p| p.field_set.is_temporal())
                        .map(|p| p.sigma_tau_ms.to_vec())
                })
                .unwrap_or(d.sigma_tau_ms)
        } else {
            Vec::new()
        };
        let n_comp = self
            .ncomp
            .or(preset.as_ref().map(|p| p.n_comp))
            .unwrap_or(d.n_comp);
        let n_bins = self
            .nbins
            .or(preset.as_ref().map(|p| p.n_bins))
            .unwrap_or(d.n_bins);
        let binary = self
            .binary
            .or(preset.as_ref().map(|p| p.binary))
            .unwrap_or(false);
        let defaults = TemporalOptions::default();
        let cfg = DescriptorConfig {
            field_set,
            sigma_s,
            sigma_tau_ms,
            n_comp,
            n_bins,
            binary,
            threshold: ThresholdRule::parse(&self.threshold_rule)?,
            d: self.d.unwrap_or(d.d),
            temporal: TemporalOptions {
                c: self.c.unwrap_or(defaults.c),
                stages: self.k.unwrap_or(defaults.stages),
                distribution: TauDistribution::parse(&self.tau_distribution)?,
            },
            fps: self.fps,
            window: self.window,
            seed: self.seed.unwrap_or(0),
            pca_samples_per_video: d.pca_samples_per_video,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scheme(&self) -> Result<CvScheme> {
        if let Some(s) = &self.scheme {
            return Ok(CvScheme::parse(s)?);
        }
        Ok(match self.preset()? {
            Some(p) => p.scheme(),
            None => CvScheme::LeaveOneOut,
        })
    }

    pub fn classifiers(&self) -> Result<Vec<Classifier>> {
        let svm = Classifier::Svm(SvmParams {
            gamma: self.svm_gamma,
            c: self.svm_c,
            ..SvmParams::default()
        });
        if let Classifier::Svm(p) = &svm {
            p.validate()?;
        }
        let choice = match (self.classifier, self.preset()?) {
            (Some(c), _) => c,
            (None, Some(p)) if p.classifier == PresetClassifier::Nn => ClassifierChoice::Nn,
            (None, Some(_)) => ClassifierChoice::Svm,
            (None, None) => ClassifierChoice::Both,
        };
        Ok(match choice {
            ClassifierChoice::Svm => vec![svm],
            ClassifierChoice::Nn => vec![Classifier::Nn],
            ClassifierChoice::Both => vec![svm, Classifier::Nn],
        })
    }

    pub fn manifest_path(&self) -> Result<&PathBuf> {
        self.manifest
            .as_ref()
            .context("--manifest is required for this command")
            .map_err(|e| crate::cli_error("Usage", format!("{e}")))
    }
}

/// Parses `2-17,20` style lists.
pub fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
            out.extend(a..=b);
        } else {
            out.push(part.parse()?);
        }
    }
    if out.is_empty() {
        return Err(crate::cli_error("Usage", format!("empty list `{s}`")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_usize_list("2-4,7").unwrap(), vec![2, 3, 4, 7]);
        assert!(parse_usize_list("").is_err());
    }

    #[test]
    fn preset_fills_unset_flags() {
        let cli = Cli::parse_from(["strf", "--preset", "appendix-b:ucla50-svm", "eval"]);
        let cfg = cli.global.descriptor_config().unwrap();
        assert_eq!(cfg.field_set, FieldSet::StrfNjet);
        assert_eq!(cfg.sigma_s, vec![4.0, 8.0]);
        assert_eq!(cfg.sigma_tau_ms, vec![50.0, 100.0]);
        assert_eq!(cfg.n_comp, 13);
        assert!(cfg.binary);
        assert_eq!(
            cli.global.scheme().unwrap(),
            CvScheme::KFoldByInstance { folds: 4 }
        );
        assert_eq!(cli.global.classifiers().unwrap().len(), 1);

        let cli = Cli::parse_from([
            "strf",
            "--preset",
            "appendix-b:ucla50-svm",
            "--ncomp",
            "7",
            "eval",
        ]);
        assert_eq!(cli.global.descriptor_config().unwrap().n_comp, 7);
    }
}
