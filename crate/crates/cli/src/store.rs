//! On-disk cache of PCA models and descriptor files, keyed by config digests.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::{Context, Result};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use strf_core::descriptor::{JointHistogram, PcaModel};
use strf_core::ingest::DatasetManifest;
use strf_core::pipeline::{self, conversion_fps, DescriptorConfig};
use strf_core::rfields::JetExtractor;

/// `[config][video][window]` histograms, cache statistics and config digests.
pub type Extracted = (Vec<Vec<Vec<JointHistogram>>>, ExtractStats, Vec<[u8; 32]>);

pub struct Store {
    root: PathBuf,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ExtractStats {
    pub computed: usize,
    pub cached: usize,
}

/// Text identifying a manifest's contents for cache keys.
pub fn manifest_identity(m: &DatasetManifest) -> String {
    let mut s = String::new();
    if let Some(fps) = m.fps {
        s.push_str(&format!("fps={fps}\n"));
    }
    for e in &m.entries {
        let crop = e
            .crop
            .map(|c| format!("{},{},{},{}", c.x, c.y, c.w, c.h))
            .unwrap_or_default();
        s.push_str(&format!(
            "{}\t{}\t{}\t{crop}\n",
            e.path.display(),
            e.class,
            e.instance
        ));
    }
    s
}

pub fn short(digest: &[u8; 32]) -> String {
    hex::encode(&digest[..8])
}

fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> strf_core::Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write(&tmp)?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))?;
    Ok(())
}

impl Store {
    pub fn new(root: &Path) -> Self {
        Store {
            root: root.to_path_buf(),
        }
    }

    pub fn pca_path(&self, cfg: &DescriptorConfig, manifest: &DatasetManifest) -> PathBuf {
        let mut h = Sha256::new();
        h.update(cfg.pca_text().as_bytes());
        h.update(manifest_identity(manifest).as_bytes());
        let d: [u8; 32] = h.finalize().into();
        self.root.join("pca").join(format!("{}.strfpca", short(&d)))
    }

    pub fn cached_pca(
        &self,
        cfg: &DescriptorConfig,
        manifest: &DatasetManifest,
    ) -> Result<Option<PcaModel>> {
        let p = self.pca_path(cfg, manifest);
        if p.exists() {
            Ok(Some(PcaModel::read(&p)?))
        } else {
            Ok(None)
        }
    }

    pub fn fit_pca(
        &self,
        cfg: &DescriptorConfig,
        manifest: &DatasetManifest,
    ) -> Result<(PcaModel, PathBuf)> {
        let model = pipeline::fit_pca_on_manifest(manifest, cfg)?;
        let p = self.pca_path(cfg, manifest);
        std::fs::create_dir_all(p.parent().unwrap())?;
        write_atomic(&p, |t| model.write(t))?;
        Ok((model, p))
    }

    /// Cached model, or a freshly fitted one when `fit` is set.
    pub fn pca(
        &self,
        explicit: Option<&Path>,
        cfg: &DescriptorConfig,
        manifest: &DatasetManifest,
        fit: bool,
    ) -> Result<PcaModel> {
        if let Some(p) = explicit {
            return Ok(PcaModel::read(p)?);
        }
        if let Some(m) = self.cached_pca(cfg, manifest)? {
            eprintln!("pca: cached {}", self.pca_path(cfg, manifest).display());
            return Ok(m);
        }
        if !fit {
            return Err(crate::cli_error(
                "MissingPcaModel",
                "no PCA model for this configuration; run fit-pca or pass --fit-pca",
            ));
        }
        let (m, p) = self.fit_pca(cfg, manifest)?;
        eprintln!("pca: fitted {}", p.display());
        Ok(m)
    }

    pub fn descriptor_dir(&self, digest: &[u8; 32]) -> PathBuf {
        self.root.join("descriptors").join(short(digest))
    }

    fn file_name(stem: &str, window: Option<usize>) -> String {
        match window {
            Some(w) => format!("{stem}.w{w:05}.strfhist"),
            None => format!("{stem}.strfhist"),
        }
    }

    /// Windows a video will produce, when its length is known up front.
    fn expected_windows(
        cfg: &DescriptorConfig,
        manifest: &DatasetManifest,
        index: usize,
    ) -> Result<Option<usize>> {
        let stream = pipeline::open_entry(manifest, index)?;
        let Some(n) = stream.frame_count() else {
            return Ok(None);
        };
        let fps = conversion_fps(cfg, Some(manifest), stream.fps());
        let spec = cfg.field_set_spec()?;
        let ex = JetExtractor::new(&spec, stream.width(), stream.height(), fps, cfg.temporal)?;
        let usable = n.saturating_sub(ex.warmup());
        Ok(Some(match cfg.window {
            _ if usable == 0 => 0,
            Some(w) => usable.div_ceil(w),
            None => 1,
        }))
    }

    fn load_cached(
        &self,
        cfg: &DescriptorConfig,
        digest: &[u8; 32],
        stem: &str,
        windows: usize,
    ) -> Option<Vec<JointHistogram>> {
        let dir = self.descriptor_dir(digest);
        let mut out = Vec::with_capacity(windows);
        for w in 0..windows {
            let name = Self::file_name(stem, cfg.window.map(|_| w));
            let (d, h) = JointHistogram::read(&dir.join(name)).ok()?;
            if &d != digest {
                return None;
            }
            out.push(h);
        }
        Some(out)
    }

    /// Descriptors of every video for every config in `cfgs` (all sharing
    /// the same jet parameters); `out[cfg][video][window]`.
    pub fn descriptors(
        &self,
        manifest: &DatasetManifest,
        cfgs: &[DescriptorConfig],
        model: &PcaModel,
    ) -> Result<Extracted> {
        let digests: Vec<[u8; 32]> = cfgs
            .iter()
            .map(|c| c.digest_with_model(model))
            .collect::<strf_core::Result<_>>()?;
        for d in &digests {
            std::fs::create_dir_all(self.descriptor_dir(d))?;
        }
        let quantizers = cfgs
            .iter()
            .map(|c| pipeline::quantizer(c, model))
            .collect::<strf_core::Result<Vec<_>>>()?;
        let computed = AtomicUsize::new(0);
        let cached = AtomicUsize::new(0);
        let per_video: Vec<Vec<Vec<JointHistogram>>> = (0..manifest.entries.len())
            .into_par_iter()
            .map(|i| -> Result<Vec<Vec<JointHistogram>>> {
                let stem = manifest.video_stem(i);
                if let Some(n) = Self::expected_windows(&cfgs[0], manifest, i)? {
                    let hit: Option<Vec<_>> = cfgs
                        .iter()
                        .zip(&digests)
                        .map(|(c, d)| self.load_cached(c, d, &stem, n))
                        .collect();
                    if let Some(h) = hit {
                        cached.fetch_add(1, Ordering::Relaxed);
                        return Ok(h);
                    }
                }
                let hists = pipeline::extract_entry(manifest, i, &cfgs[0], &quantizers)
                    .with_context(|| {
                        format!("extracting {}", manifest.entries[i].path.display())
                    })?;
                for ((c, d), hs) in cfgs.iter().zip(&digests).zip(&hists) {
                    let dir = self.descriptor_dir(d);
                    for (w, h) in hs.iter().enumerate() {
                        let p = dir.join(Self::file_name(&stem, c.window.map(|_| w)));
                        write_atomic(&p, |t| h.write(t, d))?;
                    }
                }
                computed.fetch_add(1, Ordering::Relaxed);
                Ok(hists)
            })
            .collect::<Result<_>>()?;
        // transpose to [cfg][video][window]
        let mut out: Vec<Vec<Vec<JointHistogram>>> = vec![Vec::new(); cfgs.len()];
        for video in per_video {
            for (k, windows) in video.into_iter().enumerate() {
                out[k].push(windows);
            }
        }
        let stats = ExtractStats {
            computed: computed.into_inner(),
            cached: cached.into_inner(),
        };
        Ok((out, stats, digests))
    }
}
