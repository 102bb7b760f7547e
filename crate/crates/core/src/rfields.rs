//! Named receptive-field sets and dense per-pixel jet responses.
//!
//! Channel order (version [`CHANNEL_ORDER_VERSION`]) is normative because PCA
//! models depend on it; see `docs/fieldsets.md`. Within one scale pair the
//! channels follow the set's listing below, and scale pairs are outermost:
//! feature `i` of a pixel is channel `i % C` at scale pair `i / C`.

use std::fmt;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::scalespace::{
    compute_time_constants_with, derivative_response, normalization_factor, spatial_derivative,
    spatial_smooth, warmup_frames, KernelSpec, SpatialScaleSpec, TauDistribution,
    TemporalScaleState,
};

pub const CHANNEL_ORDER_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldSet {
    RfSpatial,
    StrfNjet,
    StrfRotInv,
    StrfNjetPrevious,
}

impl FieldSet {
    pub const ALL: [FieldSet; 4] = [
        FieldSet::RfSpatial,
        FieldSet::StrfNjet,
        FieldSet::StrfRotInv,
        FieldSet::StrfNjetPrevious,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FieldSet::RfSpatial => "RF-Spatial",
            FieldSet::StrfNjet => "STRF-Njet",
            FieldSet::StrfRotInv => "STRF-RotInv",
            FieldSet::StrfNjetPrevious => "STRF-Njet-previous",
        }
    }

    /// Accepts the canonical name case-insensitively.
    pub fn parse(s: &str) -> Result<Self> {
        FieldSet::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownFieldSet(s.to_string()))
    }

    pub fn is_temporal(self) -> bool {
        self != FieldSet::RfSpatial
    }

    pub fn channels(self) -> Vec<Channel> {
        let d = |m1, m2, n| Channel::Deriv(Deriv { m1, m2, n });
        let spatial = |n| [d(1, 0, n), d(0, 1, n), d(2, 0, n), d(1, 1, n), d(0, 2, n)];
        match self {
            FieldSet::RfSpatial => spatial(0).to_vec(),
            FieldSet::StrfNjet => {
                let mut c = spatial(0).to_vec();
                c.extend([d(0, 0, 1), d(0, 0, 2)]);
                c.extend(spatial(1));
                c.extend(spatial(2));
                c
            }
            FieldSet::StrfNjetPrevious => {
                let mut c = spatial(0).to_vec();
                c.extend([d(0, 0, 1), d(0, 0, 2)]);
                c.extend(spatial(1));
                c
            }
            FieldSet::StrfRotInv => {
                let mut c = Vec::with_capacity(9);
                for op in InvariantOp::ALL {
                    for base in TemporalBase::ALL {
                        c.push(Channel::Invariant(InvariantId { base, op }));
                    }
                }
                c
            }
        }
    }
}

impl fmt::Display for FieldSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Partial derivative `L_{x^m1 y^m2 t^n}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Deriv {
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
}

impl fmt::Display for Deriv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("L")?;
        if self.m1 + self.m2 + self.n > 0 {
            f.write_str("_")?;
        }
        for _ in 0..self.m1 {
            f.write_str("x")?;
        }
        for _ in 0..self.m2 {
            f.write_str("y")?;
        }
        for _ in 0..self.n {
            f.write_str("t")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemporalBase {
    L,
    Lt,
    Ltt,
}

impl TemporalBase {
    pub const ALL: [TemporalBase; 3] = [TemporalBase::L, TemporalBase::Lt, TemporalBase::Ltt];

    pub fn order(self) -> usize {
        match self {
            TemporalBase::L => 0,
            TemporalBase::Lt => 1,
            TemporalBase::Ltt => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvariantOp {
    GradMagnitude,
    Laplacian,
    DetHessianSignedSqrt,
}

impl InvariantOp {
    pub const ALL: [InvariantOp; 3] = [
        InvariantOp::GradMagnitude,
        InvariantOp::Laplacian,
        InvariantOp::DetHessianSignedSqrt,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InvariantId {
    pub base: TemporalBase,
    pub op: InvariantOp,
}

impl fmt::Display for InvariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = Deriv {
            m1: 0,
            m2: 0,
            n: self.base.order(),
        };
        match self.op {
            InvariantOp::GradMagnitude => write!(f, "|grad {base}|"),
            InvariantOp::Laplacian => write!(f, "lap {base}"),
            InvariantOp::DetHessianSignedSqrt => write!(f, "sqrt det H {base}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Deriv(Deriv),
    Invariant(InvariantId),
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Deriv(d) => d.fmt(f),
            Channel::Invariant(i) => i.fmt(f),
        }
    }
}

/// One point of the scale grid. `sigma_tau_ms` is `None` for purely spatial sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalePair {
    pub sigma_s: f64,
    pub sigma_tau_ms: Option<f64>,
}

/// Cross product of spatial and temporal scales, spatial scale outermost.
/// With no temporal scales the pairs are purely spatial.
pub fn scale_grid(sigma_s: &[f64], sigma_tau_ms: &[f64]) -> Vec<ScalePair> {
    if sigma_tau_ms.is_empty() {
        return sigma_s
            .iter()
            .map(|&s| ScalePair {
                sigma_s: s,
                sigma_tau_ms: None,
            })
            .collect();
    }
    sigma_s
        .iter()
        .flat_map(|&s| {
            sigma_tau_ms.iter().map(move |&t| ScalePair {
                sigma_s: s,
                sigma_tau_ms: Some(t),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSetSpec {
    pub name: FieldSet,
    pub channels: Vec<Channel>,
    pub scale_grid: Vec<ScalePair>,
}

impl FieldSetSpec {
    /// Feature dimension `N = channels x scale pairs`.
    pub fn dim(&self) -> usize {
        self.channels.len() * self.scale_grid.len()
    }

    /// Derivatives that must be computed per scale pair to produce the channels.
    pub fn required_derivatives(&self) -> Vec<Deriv> {
        let mut out: Vec<Deriv> = Vec::new();
        let mut add = |d: Deriv| {
            if !out.contains(&d) {
                out.push(d);
            }
        };
        for c in &self.channels {
            match c {
                Channel::Deriv(d) => add(*d),
                Channel::Invariant(id) => {
                    for (m1, m2) in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)] {
                        add(Deriv {
                            m1,
                            m2,
                            n: id.base.order(),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn max_temporal_order(&self) -> usize {
        self.required_derivatives()
            .iter()
            .map(|d| d.n)
            .max()
            .unwrap_or(0)
    }

    /// Canonical text of the channel order; hashed into model files.
    pub fn channel_signature(&self) -> String {
        let mut s = format!("{}|{}|", CHANNEL_ORDER_VERSION, self.name.name());
        for (i, c) in self.channels.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&c.to_string());
        }
        s.push('|');
        for (i, p) in self.scale_grid.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            match p.sigma_tau_ms {
                Some(t) => s.push_str(&format!("({},{})", p.sigma_s, t)),
                None => s.push_str(&format!("({},-)", p.sigma_s)),
            }
        }
        s
    }

    pub fn channel_hash(&self) -> u64 {
        let digest = Sha256::digest(self.channel_signature().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    /// Human-readable feature names, e.g. `L_xt@(4,100)`.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for p in &self.scale_grid {
            for c in &self.channels {
                match p.sigma_tau_ms {
                    Some(t) => names.push(format!("{c}@({},{t})", p.sigma_s)),
                    None => names.push(format!("{c}@({})", p.sigma_s)),
                }
            }
        }
        names
    }
}

pub fn assemble_field_set(name: &str, scale_grid: &[ScalePair]) -> Result<FieldSetSpec> {
    assemble(FieldSet::parse(name)?, scale_grid)
}

pub fn assemble(set: FieldSet, scale_grid: &[ScalePair]) -> Result<FieldSetSpec> {
    if scale_grid.is_empty() {
        return Err(Error::BadParams("scale grid is empty".into()));
    }
    let mut grid = Vec::with_capacity(scale_grid.len());
    for p in scale_grid {
        if !(p.sigma_s > 0.0) || !p.sigma_s.is_finite() {
            return Err(Error::NonPositiveScale(p.sigma_s));
        }
        let sigma_tau_ms = if set.is_temporal() {
            match p.sigma_tau_ms {
                Some(t) if t > 0.0 && t.is_finite() => Some(t),
                Some(t) => return Err(Error::NonPositiveScale(t)),
                None => {
                    return Err(Error::BadParams(format!(
                        "{} needs a temporal scale for every grid point",
                        set.name()
                    )))
                }
            }
        } else {
            None
        };
        let pair = ScalePair {
            sigma_s: p.sigma_s,
            sigma_tau_ms,
        };
        if !grid.contains(&pair) {
            grid.push(pair);
        }
    }
    Ok(FieldSetSpec {
        name: set,
        channels: set.channels(),
        scale_grid: grid,
    })
}

/// Dense per-pixel feature vectors; pixel-major, `dim` values per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct JetResponse {
    pub width: usize,
    pub height: usize,
    pub channels: Vec<Channel>,
    pub n_scales: usize,
    pub data: Vec<f64>,
}

impl JetResponse {
    pub fn dim(&self) -> usize {
        self.channels.len() * self.n_scales
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let d = self.dim();
        let i = (y * self.width + x) * d;
        &self.data[i..i + d]
    }

    /// Feature `index` as an image.
    pub fn feature_plane(&self, index: usize) -> Plane {
        let d = self.dim();
        Plane::from_fn(self.width, self.height, |x, y| {
            self.data[(y * self.width + x) * d + index]
        })
    }

    /// Feature of `channel` at scale pair `scale` as an image.
    pub fn channel_plane(&self, scale: usize, channel: &Channel) -> Option<Plane> {
        let c = self.channels.iter().position(|k| k == channel)?;
        Some(self.feature_plane(scale * self.channels.len() + c))
    }

    fn from_planes(channels: Vec<Channel>, per_scale: Vec<Vec<Plane>>) -> JetResponse {
        let (width, height) = per_scale[0][0].dims();
        let n_scales = per_scale.len();
        let dim = channels.len() * n_scales;
        let mut data = vec![0.0; width * height * dim];
        for (s, planes) in per_scale.iter().enumerate() {
            for (c, p) in planes.iter().enumerate() {
                let k = s * channels.len() + c;
                for (i, &v) in p.data().iter().enumerate() {
                    data[i * dim + k] = v;
                }
            }
        }
        JetResponse {
            width,
            height,
            channels,
            n_scales,
            data,
        }
    }
}

/// Signed square root, `sign(v) |v|^(1/2)`.
pub fn signed_sqrt(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v.signum() * v.abs().sqrt()
    }
}

/// Maps the 15 directional channels over `{L, L_t, L_tt}` to the 9 rotational
/// invariants, per scale pair.
pub fn rotinv_features(njet: &JetResponse) -> Result<JetResponse> {
    let mut index = Vec::with_capacity(15);
    for base in TemporalBase::ALL {
        for (m1, m2) in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)] {
            let d = Deriv {
                m1,
                m2,
                n: base.order(),
            };
            let pos = njet
                .channels
                .iter()
                .position(|c| *c == Channel::Deriv(d))
                .ok_or_else(|| Error::MissingChannels(d.to_string()))?;
            index.push(pos);
        }
    }
    let out_channels = FieldSet::StrfRotInv.channels();
    let in_c = njet.channels.len();
    let in_dim = njet.dim();
    let out_dim = out_channels.len() * njet.n_scales;
    let n_pix = njet.width * njet.height;
    let mut data = vec![0.0; n_pix * out_dim];
    data.par_chunks_mut(out_dim.max(1))
        .enumerate()
        .for_each(|(p, out)| {
            let px = &njet.data[p * in_dim..(p + 1) * in_dim];
            for s in 0..njet.n_scales {
                let v = |k: usize| px[s * in_c + index[k]];
                let o = &mut out[s * 9..(s + 1) * 9];
                for b in 0..3 {
                    let k = b * 5;
                    let (lx, ly, lxx, lxy, lyy) = (v(k), v(k + 1), v(k + 2), v(k + 3), v(k + 4));
                    o[b] = (lx * lx + ly * ly).sqrt();
                    o[3 + b] = lxx + lyy;
                    o[6 + b] = signed_sqrt(lxx * lyy - lxy * lxy);
                }
            }
        });
    Ok(JetResponse {
        width: njet.width,
        height: njet.height,
        channels: out_channels,
        n_scales: njet.n_scales,
        data,
    })
}

/// Temporal cascade options shared by every scale pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalOptions {
    pub c: f64,
    pub stages: usize,
    pub distribution: TauDistribution,
}

impl Default for TemporalOptions {
    fn default() -> Self {
        TemporalOptions {
            c: 2.0,
            stages: 7,
            distribution: TauDistribution::LinearInC,
        }
    }
}

struct PairState {
    spatial_index: usize,
    s: f64,
    tau_frames: f64,
    temporal: Option<TemporalScaleState>,
}

/// Streaming jet computation: frames are pushed one at a time and responses
/// are read from the current state; memory does not grow with stream length.
pub struct JetExtractor {
    spec: FieldSetSpec,
    width: usize,
    height: usize,
    spatial: Vec<SpatialScaleSpec>,
    pairs: Vec<PairState>,
    derivs: Vec<Deriv>,
    warmup: usize,
    frames_seen: usize,
    current: Vec<Plane>,
}

impl JetExtractor {
    pub fn new(
        spec: &FieldSetSpec,
        width: usize,
        height: usize,
        fps: f64,
        opts: TemporalOptions,
    ) -> Result<Self> {
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(Error::BadParams(format!("fps must be positive, got {fps}")));
        }
        if spec.scale_grid.is_empty() {
            return Err(Error::BadParams("scale grid is empty".into()));
        }
        let mut sigmas: Vec<f64> = Vec::new();
        let mut spatial = Vec::new();
        let mut pairs = Vec::new();
        let mut max_sigma_tau_frames: f64 = 0.0;
        for p in &spec.scale_grid {
            let spatial_index = match sigmas.iter().position(|&s| s == p.sigma_s) {
                Some(i) => i,
                None => {
                    sigmas.push(p.sigma_s);
                    spatial.push(SpatialScaleSpec::new(p.sigma_s)?);
                    sigmas.len() - 1
                }
            };
            let (temporal, tau_frames) = match (spec.name.is_temporal(), p.sigma_tau_ms) {
                (true, Some(t_ms)) => {
                    let k: KernelSpec = compute_time_constants_with(
                        t_ms * t_ms,
                        opts.c,
                        opts.stages,
                        opts.distribution,
                    )?
                    .in_frames(fps);
                    max_sigma_tau_frames = max_sigma_tau_frames.max(k.standard_deviation());
                    let tau = k.tau;
                    (Some(TemporalScaleState::new(width, height, &k)), tau)
                }
                (true, None) => {
                    return Err(Error::BadParams(format!(
                        "{} needs temporal scales",
                        spec.name
                    )))
                }
                (false, _) => (None, 1.0),
            };
            pairs.push(PairState {
                spatial_index,
                s: p.sigma_s * p.sigma_s,
                tau_frames,
                temporal,
            });
        }
        let derivs = spec.required_derivatives();
        let max_n = derivs.iter().map(|d| d.n).max().unwrap_or(0);
        let warmup = if spec.name.is_temporal() {
            warmup_frames(max_sigma_tau_frames).max(max_n)
        } else {
            0
        };
        Ok(JetExtractor {
            spec: spec.clone(),
            width,
            height,
            spatial,
            pairs,
            derivs,
            warmup,
            frames_seen: 0,
            current: Vec::new(),
        })
    }

    pub fn spec(&self) -> &FieldSetSpec {
        &self.spec
    }

    /// Number of leading frames whose responses are not yet settled.
    pub fn warmup(&self) -> usize {
        self.warmup
    }

    /// Border width excluded from statistics: largest smoothing radius plus
    /// the derivative stencil.
    pub fn margin(&self) -> usize {
        self.spatial.iter().map(|s| s.radius).max().unwrap_or(0) + 1
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// True once the most recently pushed frame is past the warm-up period.
    pub fn ready(&self) -> bool {
        self.frames_seen > self.warmup
    }

    pub fn buffer_bytes(&self) -> usize {
        let temporal: usize = self
            .pairs
            .iter()
            .filter_map(|p| p.temporal.as_ref())
            .map(|t| t.buffer_bytes())
            .sum();
        temporal + self.current.len() * self.width * self.height * 8
    }

    pub fn push(&mut self, frame: &Plane) -> Result<()> {
        frame.check_dims(self.width, self.height)?;
        let smoothed: Vec<Plane> = self
            .spatial
            .par_iter()
            .map(|s| spatial_smooth(frame, s))
            .collect::<Result<_>>()?;
        for pair in &mut self.pairs {
            if let Some(state) = pair.temporal.as_mut() {
                let input = &smoothed[pair.spatial_index];
                if !state.is_initialized() {
                    state.prime_with(input)?;
                }
                state.step(input)?;
            }
        }
        if self.spec.name.is_temporal() {
            self.current.clear();
        } else {
            self.current = smoothed;
        }
        self.frames_seen += 1;
        Ok(())
    }

    /// Scale-normalized responses of the field set at the latest frame.
    pub fn compute(&self) -> Result<JetResponse> {
        if self.frames_seen == 0 {
            return Err(Error::InsufficientHistory {
                order: self.spec.max_temporal_order(),
                needed: self.warmup + 1,
                seen: 0,
            });
        }
        if !self.ready() {
            return Err(Error::InsufficientHistory {
                order: self.spec.max_temporal_order(),
                needed: self.warmup + 1,
                seen: self.frames_seen as u64,
            });
        }
        let per_scale: Vec<Vec<Plane>> = self
            .pairs
            .par_iter()
            .map(|pair| {
                self.derivs
                    .iter()
                    .map(|d| {
                        let raw = match &pair.temporal {
                            Some(state) => derivative_response(state, d.m1, d.m2, d.n)?,
                            None => {
                                spatial_derivative(&self.current[pair.spatial_index], d.m1, d.m2)?
                            }
                        };
                        let f = normalization_factor(
                            pair.s,
                            pair.tau_frames,
                            d.m1,
                            d.m2,
                            d.n,
                            1.0,
                            1.0,
                        )?;
                        Ok(raw.scale(f))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let channels: Vec<Channel> = self.derivs.iter().map(|d| Channel::Deriv(*d)).collect();
        let jet = JetResponse::from_planes(channels, per_scale);
        match self.spec.name {
            FieldSet::StrfRotInv => rotinv_features(&jet),
            _ => Ok(jet),
        }
    }
}

/// Free-function form of [`JetExtractor::compute`].
pub fn compute_njet_frame(extractor: &JetExtractor) -> Result<JetResponse> {
    extractor.compute()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(s: f64, t: f64) -> ScalePair {
        ScalePair {
            sigma_s: s,
            sigma_tau_ms: Some(t),
        }
    }

    #[test]
    fn channel_counts_per_set() {
        let counts: Vec<usize> = FieldSet::ALL.iter().map(|f| f.channels().len()).collect();
        assert_eq!(counts, vec![5, 17, 9, 12]);
        let spatial = assemble_field_set(
            "RF-Spatial",
            &[ScalePair {
                sigma_s: 4.0,
                sigma_tau_ms: None,
            }],
        )
        .unwrap();
        assert_eq!(spatial.dim(), 5);
        let njet = assemble_field_set("STRF-Njet", &[pair(4.0, 100.0), pair(8.0, 200.0)]).unwrap();
        assert_eq!(njet.dim(), 34);
        let rot = assemble_field_set("STRF-RotInv", &[pair(8.0, 100.0)]).unwrap();
        assert_eq!(rot.dim(), 9);
        assert_eq!(rot.required_derivatives().len(), 15);
    }

    #[test]
    fn unknown_and_malformed_sets() {
        assert!(matches!(
            assemble_field_set("HOG", &[pair(1.0, 50.0)]),
            Err(Error::UnknownFieldSet(_))
        ));
        assert!(assemble_field_set("STRF-Njet", &[]).is_err());
        assert!(assemble_field_set(
            "STRF-Njet",
            &[ScalePair {
                sigma_s: 2.0,
                sigma_tau_ms: None
            }]
        )
        .is_err());
    }

    #[test]
    fn table_order_of_njet() {
        let names: Vec<String> = FieldSet::StrfNjet
            .channels()
            .iter()
            .map(|c| c.to_string())
            .collect();
        assert_eq!(
            names,
            [
                "L_x", "L_y", "L_xx", "L_xy", "L_yy", "L_t", "L_tt", "L_xt", "L_yt", "L_xxt",
                "L_xyt", "L_yyt", "L_xtt", "L_ytt", "L_xxtt", "L_xytt", "L_yytt"
            ]
        );
    }

    #[test]
    fn grid_is_a_cross_product() {
        let g = scale_grid(&[2.0, 4.0], &[50.0, 100.0]);
        assert_eq!(g.len(), 4);
        assert_eq!(g[1], pair(2.0, 100.0));
        assert_eq!(assemble(FieldSet::StrfNjet, &g).unwrap().dim(), 68);
    }

    #[test]
    fn channel_hash_depends_on_grid() {
        let a = assemble(FieldSet::StrfNjet, &[pair(2.0, 50.0)]).unwrap();
        let b = assemble(FieldSet::StrfNjet, &[pair(4.0, 50.0)]).unwrap();
        assert_ne!(a.channel_hash(), b.channel_hash());
        assert_eq!(a.channel_hash(), a.clone().channel_hash());
    }

    fn jet_of(values: &[(Deriv, f64)]) -> JetResponse {
        JetResponse {
            width: 1,
            height: 1,
            channels: values.iter().map(|(d, _)| Channel::Deriv(*d)).collect(),
            n_scales: 1,
            data: values.iter().map(|(_, v)| *v).collect(),
        }
    }

    fn directional(lx: f64, ly: f64, lxx: f64, lxy: f64, lyy: f64) -> JetResponse {
        let mut v = Vec::new();
        for n in 0..3 {
            for (m1, m2, val) in [
                (1, 0, lx),
                (0, 1, ly),
                (2, 0, lxx),
                (1, 1, lxy),
                (0, 2, lyy),
            ] {
                v.push((Deriv { m1, m2, n }, val));
            }
        }
        jet_of(&v)
    }

    #[test]
    fn invariant_arithmetic() {
        let r = rotinv_features(&directional(3.0, 4.0, 2.0, 0.0, 2.0)).unwrap();
        assert_eq!(r.data[0], 5.0);
        assert_eq!(r.data[3], 4.0);
        assert_eq!(r.data[6], 2.0);
        let r = rotinv_features(&directional(0.0, 0.0, 1.0, 0.0, -4.0)).unwrap();
        assert_eq!(r.data[6], -2.0);
        assert_eq!(signed_sqrt(0.0), 0.0);
        for v in [0.3, 2.0, 17.5] {
            assert_eq!(signed_sqrt(-v), -signed_sqrt(v));
        }
    }

    #[test]
    fn rotinv_needs_all_directional_channels() {
        let partial = jet_of(&[(Deriv { m1: 1, m2: 0, n: 0 }, 1.0)]);
        assert!(matches!(
            rotinv_features(&partial),
            Err(Error::MissingChannels(_))
        ));
    }

    fn run(spec: &FieldSetSpec, frames: &[Plane], fps: f64) -> (JetExtractor, JetResponse) {
        let (w, h) = frames[0].dims();
        let mut ex = JetExtractor::new(spec, w, h, fps, TemporalOptions::default()).unwrap();
        for f in frames {
            ex.push(f).unwrap();
        }
        let jet = ex.compute().unwrap();
        (ex, jet)
    }

    #[test]
    fn static_video_has_no_temporal_response() {
        let spec = assemble(FieldSet::StrfNjet, &[pair(2.0, 50.0)]).unwrap();
        let frame = Plane::from_fn(24, 24, |x, y| ((x * 7 + y * 3) % 11) as f64 / 11.0);
        let (_, jet) = run(&spec, &vec![frame; 12], 25.0);
        for (c, ch) in jet.channels.iter().enumerate() {
            if let Channel::Deriv(d) = ch {
                if d.n > 0 {
                    assert!(
                        jet.feature_plane(c).data().iter().all(|v| v.abs() < 1e-12),
                        "{ch}"
                    );
                }
            }
        }
    }

    #[test]
    fn affine_ramp_only_excites_first_x_derivative() {
        let spec = assemble(FieldSet::StrfNjet, &[pair(1.0, 50.0)]).unwrap();
        let frame = Plane::from_fn(30, 30, |x, _| x as f64);
        let (ex, jet) = run(&spec, &vec![frame; 10], 25.0);
        let m = ex.margin();
        for (c, ch) in jet.channels.iter().enumerate() {
            let p = jet.feature_plane(c);
            for y in m..30 - m {
                for x in m..30 - m {
                    let v = p.get(x, y);
                    if *ch == Channel::Deriv(Deriv { m1: 1, m2: 0, n: 0 }) {
                        assert!((v - 1.0).abs() < 1e-9);
                    } else {
                        assert!(v.abs() < 1e-9, "{ch} = {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn compute_before_warmup_fails() {
        let spec = assemble(FieldSet::StrfNjet, &[pair(2.0, 100.0)]).unwrap();
        let mut ex = JetExtractor::new(&spec, 8, 8, 25.0, TemporalOptions::default()).unwrap();
        assert!(matches!(
            ex.compute(),
            Err(Error::InsufficientHistory { .. })
        ));
        ex.push(&Plane::new(8, 8)).unwrap();
        assert!(matches!(
            ex.compute(),
            Err(Error::InsufficientHistory { .. })
        ));
        assert_eq!(ex.warmup(), 13);
    }

    #[test]
    fn spatial_set_has_no_warmup() {
        let spec = assemble(
            FieldSet::RfSpatial,
            &[ScalePair {
                sigma_s: 2.0,
                sigma_tau_ms: Some(100.0),
            }],
        )
        .unwrap();
        let (ex, jet) = run(
            &spec,
            &[Plane::from_fn(10, 10, |x, y| (x * y) as f64)],
            25.0,
        );
        assert_eq!(ex.warmup(), 0);
        assert_eq!(jet.dim(), 5);
    }
}
