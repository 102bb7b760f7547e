//! End-to-end descriptor extraction: frames to jets, PCA sampling, and
//! per-video (or per-window) joint histograms.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::classify::{CvDataset, Descriptor, SampleMeta};
use crate::descriptor::{
    fit_pca, make_binning_with, JointHistogram, PcaModel, Quantizer, ThresholdRule,
};
use crate::error::{Error, Result};
use crate::ingest::{read_frames, Cropped, DatasetManifest, FrameStream, DEFAULT_FPS};
use crate::plane::Plane;
use crate::rfields::{
    assemble, scale_grid, FieldSet, FieldSetSpec, JetExtractor, TemporalOptions,
    CHANNEL_ORDER_VERSION,
};
use crate::scalespace::TauDistribution;

pub const DEFAULT_PCA_SAMPLES: usize = 10_000;

/// Everything that determines a descriptor's numerical content.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorConfig {
    pub field_set: FieldSet,
    pub sigma_s: Vec<f64>,
    pub sigma_tau_ms: Vec<f64>,
    pub n_comp: usize,
    pub n_bins: usize,
    pub binary: bool,
    pub threshold: ThresholdRule,
    pub d: f64,
    pub temporal: TemporalOptions,
    /// Rate used to convert temporal scales to frames; `None` uses each
    /// video's own rate.
    pub fps: Option<f64>,
    /// Frames per window; `None` describes the whole video.
    pub window: Option<usize>,
    pub seed: u64,
    pub pca_samples_per_video: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        DescriptorConfig {
            field_set: FieldSet::StrfNjet,
            sigma_s: vec![2.0, 4.0],
            sigma_tau_ms: vec![50.0, 100.0],
            n_comp: 10,
            n_bins: 2,
            binary: true,
            threshold: ThresholdRule::Zero,
            d: 5.0,
            temporal: TemporalOptions::default(),
            fps: None,
            window: None,
            seed: 0,
            pca_samples_per_video: DEFAULT_PCA_SAMPLES,
        }
    }
}

fn list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(",")
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_s.is_empty() {
            return Err(Error::BadParams(
                "at least one spatial scale is required".into(),
            ));
        }
        if self.field_set.is_temporal() && self.sigma_tau_ms.is_empty() {
            return Err(Error::BadParams(format!(
                "{} needs at least one temporal scale",
                self.field_set
            )));
        }
        if self.n_comp == 0 {
            return Err(Error::BadParams("n_comp must be positive".into()));
        }
        if self.binary && self.n_bins != 2 {
            return Err(Error::BadParams("binary descriptors use n_bins = 2".into()));
        }
        if self.n_bins < 2 {
            return Err(Error::BadParams("n_bins must be >= 2".into()));
        }
        if self.window == Some(0) {
            return Err(Error::BadParams("window must be at least one frame".into()));
        }
        if let Some(f) = self.fps {
            if !(f > 0.0) {
                return Err(Error::BadParams("fps must be positive".into()));
            }
        }
        if self.pca_samples_per_video == 0 {
            return Err(Error::BadParams("PCA sample count must be positive".into()));
        }
        crate::descriptor::cell_count(self.n_comp, self.n_bins)?;
        self.field_set_spec()?;
        Ok(())
    }

    pub fn field_set_spec(&self) -> Result<FieldSetSpec> {
        let tau: &[f64] = if self.field_set.is_temporal() {
            &self.sigma_tau_ms
        } else {
            &[]
        };
        assemble(self.field_set, &scale_grid(&self.sigma_s, tau))
    }

    fn fps_text(&self) -> String {
        match self.fps {
            Some(f) => format!("{f}"),
            None => "per-video".into(),
        }
    }

    /// Parameters the PCA model depends on.
    pub fn pca_text(&self) -> String {
        let tau = if self.field_set.is_temporal() {
            list(&self.sigma_tau_ms)
        } else {
            "-".into()
        };
        let mut s = String::new();
        let _ = writeln!(s, "channel_order={CHANNEL_ORDER_VERSION}");
        let _ = writeln!(s, "field_set={}", self.field_set.name());
        let _ = writeln!(s, "sigma_s={}", list(&self.sigma_s));
        let _ = writeln!(s, "sigma_tau_ms={tau}");
        let _ = writeln!(s, "gamma_s=1");
        let _ = writeln!(s, "gamma_tau=1");
        let _ = writeln!(s, "c={}", self.temporal.c);
        let _ = writeln!(s, "K={}", self.temporal.stages);
        let _ = writeln!(s, "tau_distribution={}", self.temporal.distribution.name());
        let _ = writeln!(s, "fps={}", self.fps_text());
        let _ = writeln!(s, "pca_seed={}", self.seed);
        let _ = writeln!(s, "pca_samples_per_video={}", self.pca_samples_per_video);
        s
    }

    /// Canonical text of the whole configuration; one `key=value` per line.
    pub fn canonical_text(&self) -> String {
        let mut s = String::from("strf-descriptor 1\n");
        s.push_str(&self.pca_text());
        let _ = writeln!(s, "n_comp={}", self.n_comp);
        let _ = writeln!(s, "n_bins={}", self.n_bins);
        let _ = writeln!(s, "binary={}", self.binary);
        let rule = if self.binary {
            self.threshold.name()
        } else {
            "equidistant"
        };
        let _ = writeln!(s, "threshold={rule}");
        let _ = writeln!(s, "d={}", self.d);
        let window = self
            .window
            .map(|w| w.to_string())
            .unwrap_or_else(|| "none".into());
        let _ = writeln!(s, "window={window}");
        s
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_text().as_bytes()).into()
    }

    /// Digest of the configuration together with the PCA model it uses.
    pub fn digest_with_model(&self, model: &PcaModel) -> Result<[u8; 32]> {
        let mut bytes = Vec::new();
        model.write_to(&mut bytes)?;
        let mut h = Sha256::new();
        h.update(self.canonical_text().as_bytes());
        h.update(b"pca_model=");
        h.update(hex::encode(Sha256::digest(&bytes)).as_bytes());
        Ok(h.finalize().into())
    }

    pub fn set_distribution(&mut self, d: TauDistribution) {
        self.temporal.distribution = d;
    }
}

/// Width of the border left out of statistics: the largest smoothing radius
/// plus the stencil, capped at a quarter of the frame so some interior remains.
pub fn accumulation_margin(
    extractor: &JetExtractor,
    width: usize,
    height: usize,
) -> (usize, usize) {
    let m = extractor.margin();
    (m.min(width / 4), m.min(height / 4))
}

/// Streams `frames` through the jet extractor and calls `visit(t, jet)` for
/// every frame `t` past the warm-up.
pub fn for_each_jet(
    frames: impl Iterator<Item = Result<Plane>>,
    width: usize,
    height: usize,
    fps: f64,
    spec: &FieldSetSpec,
    opts: TemporalOptions,
    mut visit: impl FnMut(usize, &JetExtractor, &crate::rfields::JetResponse) -> Result<()>,
) -> Result<usize> {
    let mut ex = JetExtractor::new(spec, width, height, fps, opts)?;
    let mut t = 0;
    for frame in frames {
        ex.push(&frame?)?;
        if ex.ready() {
            let jet = ex.compute()?;
            visit(t, &ex, &jet)?;
        }
        t += 1;
    }
    Ok(t)
}

/// Uniform sample of up to `cap` interior post-warm-up feature vectors
/// (reservoir sampling over pixels in stream order).
#[allow(clippy::too_many_arguments)]
pub fn sample_features(
    frames: impl Iterator<Item = Result<Plane>>,
    width: usize,
    height: usize,
    fps: f64,
    spec: &FieldSetSpec,
    opts: TemporalOptions,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    let dim = spec.dim();
    let mut reservoir: Vec<f64> = Vec::with_capacity(cap.min(1 << 20) * dim);
    let mut seen: u64 = 0;
    for_each_jet(frames, width, height, fps, spec, opts, |_, ex, jet| {
        let (mx, my) = accumulation_margin(ex, width, height);
        for y in my..height - my {
            for x in mx..width - mx {
                let v = jet.pixel(x, y);
                if (seen as usize) < cap {
                    reservoir.extend_from_slice(v);
                } else {
                    let j = rng.random_range(0..=seen);
                    if (j as usize) < cap {
                        let k = j as usize * dim;
                        reservoir[k..k + dim].copy_from_slice(v);
                    }
                }
                seen += 1;
            }
        }
        Ok(())
    })?;
    Ok(reservoir)
}

/// Histograms of one video for several quantizers at once: `out[q][w]` is
/// window `w` under quantizer `q` (a single window without windowing).
#[allow(clippy::too_many_arguments)]
pub fn histograms_from_frames(
    frames: impl Iterator<Item = Result<Plane>>,
    width: usize,
    height: usize,
    fps: f64,
    spec: &FieldSetSpec,
    opts: TemporalOptions,
    quantizers: &[Quantizer],
    window: Option<usize>,
) -> Result<Vec<Vec<JointHistogram>>> {
    let mut out: Vec<Vec<JointHistogram>> = vec![Vec::new(); quantizers.len()];
    let mut first_ready: Option<usize> = None;
    let max_m = quantizers.iter().map(|q| q.m).max().unwrap_or(0);
    let mut scratch = vec![0.0; max_m];
    for_each_jet(frames, width, height, fps, spec, opts, |t, ex, jet| {
        let t0 = *first_ready.get_or_insert(t);
        let w = match window {
            Some(n) => (t - t0) / n,
            None => 0,
        };
        for (q, hs) in quantizers.iter().zip(out.iter_mut()) {
            while hs.len() <= w {
                hs.push(JointHistogram::for_binning(&q.binning)?);
            }
        }
        let (mx, my) = accumulation_margin(ex, width, height);
        for y in my..height - my {
            for x in mx..width - mx {
                let v = jet.pixel(x, y);
                for (q, hs) in quantizers.iter().zip(out.iter_mut()) {
                    let cell = q.cell(v, &mut scratch);
                    hs[w].add_cell(cell)?;
                }
            }
        }
        Ok(())
    })?;
    if out.iter().any(|h| h.is_empty()) {
        return Err(Error::InsufficientHistory {
            order: spec.max_temporal_order(),
            needed: JetExtractor::new(spec, width, height, fps, opts)?.warmup() + 1,
            seen: 0,
        });
    }
    Ok(out)
}

/// Opens manifest entry `index` with its crop and frame rate applied.
pub fn open_entry(manifest: &DatasetManifest, index: usize) -> Result<Box<dyn FrameStream>> {
    let e = &manifest.entries[index];
    let stream = read_frames(&e.path)?;
    let stream: Box<dyn FrameStream> = match e.crop {
        Some(c) => Box::new(Cropped::new(stream, c)?),
        None => stream,
    };
    Ok(stream)
}

fn planes(stream: Box<dyn FrameStream>) -> impl Iterator<Item = Result<Plane>> {
    stream.map(|f| f.map(|f| f.to_plane()))
}

/// Frame rate used to convert temporal scales for a stream.
pub fn conversion_fps(
    cfg: &DescriptorConfig,
    manifest: Option<&DatasetManifest>,
    stream_fps: f64,
) -> f64 {
    cfg.fps
        .or_else(|| manifest.and_then(|m| m.fps))
        .unwrap_or(if stream_fps > 0.0 {
            stream_fps
        } else {
            DEFAULT_FPS
        })
}

/// Fits the PCA model on samples pooled over every manifest video.
pub fn fit_pca_on_manifest(manifest: &DatasetManifest, cfg: &DescriptorConfig) -> Result<PcaModel> {
    cfg.validate()?;
    let spec = cfg.field_set_spec()?;
    let per_video: Vec<Vec<f64>> = (0..manifest.entries.len())
        .into_par_iter()
        .map(|i| {
            let stream = open_entry(manifest, i)?;
            let (w, h) = (stream.width(), stream.height());
            let fps = conversion_fps(cfg, Some(manifest), stream.fps());
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            sample_features(
                planes(stream),
                w,
                h,
                fps,
                &spec,
                cfg.temporal,
                cfg.pca_samples_per_video,
                &mut rng,
            )
        })
        .collect::<Result<_>>()?;
    fit_pca_from_samples(&per_video, &spec, cfg)
}

/// Fits PCA to pre-sampled feature vectors (concatenated in the given order).
pub fn fit_pca_from_samples(
    per_video: &[Vec<f64>],
    spec: &FieldSetSpec,
    cfg: &DescriptorConfig,
) -> Result<PcaModel> {
    let samples: Vec<f64> = per_video.concat();
    let dim = spec.dim();
    let mut model = fit_pca(&samples, dim, dim)?;
    model.field_set = spec.name.name().to_string();
    model.channel_hash = spec.channel_hash();
    model.seed = cfg.seed;
    Ok(model)
}

/// Quantizer for `cfg` on top of `model`.
pub fn quantizer(cfg: &DescriptorConfig, model: &PcaModel) -> Result<Quantizer> {
    let spec = cfg.field_set_spec()?;
    if model.channel_hash != spec.channel_hash() || model.input_dim != spec.dim() {
        return Err(Error::BadParams(format!(
            "PCA model was fitted for a different channel layout ({} vs {})",
            model.field_set,
            spec.name.name()
        )));
    }
    if cfg.n_comp > model.max_components() {
        return Err(Error::BadParams(format!(
            "n_comp {} exceeds the {} components in the PCA model",
            cfg.n_comp,
            model.max_components()
        )));
    }
    let binning = make_binning_with(
        model,
        cfg.n_comp,
        cfg.n_bins,
        cfg.d,
        cfg.binary,
        cfg.threshold,
    )?;
    Quantizer::new(model.clone(), binning)
}

/// Histograms (one per window) of manifest entry `index`.
pub fn extract_entry(
    manifest: &DatasetManifest,
    index: usize,
    cfg: &DescriptorConfig,
    quantizers: &[Quantizer],
) -> Result<Vec<Vec<JointHistogram>>> {
    let spec = cfg.field_set_spec()?;
    let stream = open_entry(manifest, index)?;
    let (w, h) = (stream.width(), stream.height());
    let fps = conversion_fps(cfg, Some(manifest), stream.fps());
    histograms_from_frames(
        planes(stream),
        w,
        h,
        fps,
        &spec,
        cfg.temporal,
        quantizers,
        cfg.window,
    )
}

/// Extracts every manifest video in parallel; `out[video][quantizer][window]`.
pub fn extract_manifest(
    manifest: &DatasetManifest,
    cfg: &DescriptorConfig,
    quantizers: &[Quantizer],
) -> Result<Vec<Vec<Vec<JointHistogram>>>> {
    (0..manifest.entries.len())
        .into_par_iter()
        .map(|i| extract_entry(manifest, i, cfg, quantizers))
        .collect()
}

/// Cross-validation samples from `hists[video][window]`: one sample per
/// window, grouped by video.
pub fn dataset_from_histograms(
    manifest: &DatasetManifest,
    hists: &[Vec<JointHistogram>],
) -> Result<CvDataset> {
    if hists.len() != manifest.entries.len() {
        return Err(Error::dims(manifest.entries.len(), hists.len()));
    }
    let mut descriptors = Vec::new();
    let mut meta = Vec::new();
    for (v, (e, windows)) in manifest.entries.iter().zip(hists).enumerate() {
        for h in windows {
            descriptors.push(Descriptor::from_histogram(h)?);
            meta.push(SampleMeta {
                label: e.class_index,
                group: v,
                instance: e.instance_index,
            });
        }
    }
    CvDataset::new(descriptors, meta, manifest.classes.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_every_numerical_setting() {
        let base = DescriptorConfig::default();
        let d0 = base.digest();
        assert_eq!(d0, base.clone().digest());
        let variants = [
            DescriptorConfig {
                n_comp: 11,
                ..base.clone()
            },
            DescriptorConfig {
                fps: Some(15.0),
                ..base.clone()
            },
            DescriptorConfig {
                threshold: ThresholdRule::Mean,
                ..base.clone()
            },
            DescriptorConfig {
                window: Some(8),
                ..base.clone()
            },
            DescriptorConfig {
                sigma_s: vec![2.0],
                ..base.clone()
            },
            DescriptorConfig {
                temporal: TemporalOptions {
                    distribution: TauDistribution::QuadraticInC,
                    ..base.temporal
                },
                ..base.clone()
            },
        ];
        for v in variants {
            assert_ne!(v.digest(), d0, "{}", v.canonical_text());
        }
        assert!(base.canonical_text().contains("channel_order=v1"));
    }

    #[test]
    fn validation() {
        let bad = DescriptorConfig {
            n_bins: 3,
            ..DescriptorConfig::default()
        };
        assert!(bad.validate().is_err());
        let spatial = DescriptorConfig {
            field_set: FieldSet::RfSpatial,
            sigma_tau_ms: vec![],
            ..DescriptorConfig::default()
        };
        spatial.validate().unwrap();
        assert_eq!(spatial.field_set_spec().unwrap().dim(), 10);
    }
}
