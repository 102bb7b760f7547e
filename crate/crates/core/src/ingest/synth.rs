//! Deterministic synthetic dynamic textures.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{write_container, Frame, FrameStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// `0.5 + 0.5 sin(2 pi (x' - v t) / lambda + phase)`, `x'` along `orientation`.
    TranslatingSine,
    /// Noise field with contrast reversed every half period.
    Flicker,
    /// Fixed noise field translated `v` px/frame, bilinear with wrap-around.
    AdvectedNoise,
    /// Temporally constant noise field.
    StaticNoise,
    /// Sum of drifting gratings with seeded orientations, phases and
    /// wavelengths in `[lambda, 2 lambda)`; rotates about the frame centre.
    SineMixture,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::TranslatingSine => "translating-sine",
            SynthKind::Flicker => "flicker",
            SynthKind::AdvectedNoise => "advected-noise",
            SynthKind::StaticNoise => "static-noise",
            SynthKind::SineMixture => "sine-mixture",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "translating-sine" => SynthKind::TranslatingSine,
            "flicker" => SynthKind::Flicker,
            "advected-noise" => SynthKind::AdvectedNoise,
            "static-noise" => SynthKind::StaticNoise,
            "sine-mixture" => SynthKind::SineMixture,
            other => {
                return Err(Error::BadParams(format!(
                    "unknown synthetic kind `{other}`"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    /// Grating wavelength (pixels).
    pub wavelength: f64,
    /// Pixels per frame.
    pub velocity: f64,
    /// Flicker period in frames.
    pub period: usize,
    /// Lattice spacing of the value-noise field (pixels); 1 gives white noise.
    pub noise_scale: f64,
    /// Direction of motion / grating normal, degrees.
    pub orientation_deg: f64,
    /// Number of gratings for [`SynthKind::SineMixture`].
    pub components: usize,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, width: usize, height: usize, frames: usize) -> Self {
        SynthSpec {
            kind,
            width,
            height,
            frames,
            fps: super::DEFAULT_FPS,
            wavelength: 8.0,
            velocity: 1.0,
            period: 8,
            noise_scale: 2.0,
            orientation_deg: 0.0,
            components: 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadParams(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("frame size must be nonzero");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be positive");
        }
        if !(self.wavelength > 0.0) {
            return bad("wavelength must be positive");
        }
        if !self.velocity.is_finite() || !self.orientation_deg.is_finite() {
            return bad("velocity and orientation must be finite");
        }
        if self.period == 0 {
            return bad("flicker period must be positive");
        }
        if !(self.noise_scale > 0.0) {
            return bad("noise scale must be positive");
        }
        if self.kind == SynthKind::SineMixture && self.components == 0 {
            return bad("sine mixture needs at least one component");
        }
        Ok(())
    }
}

struct Grating {
    nx: f64,
    ny: f64,
    wavelength: f64,
    velocity: f64,
    phase: f64,
}

/// Lazily generated synthetic stream.
pub struct SynthStream {
    spec: SynthSpec,
    noise: Vec<f64>,
    gratings: Vec<Grating>,
    t: usize,
}

pub fn synth_texture(spec: &SynthSpec, seed: u64) -> Result<SynthStream> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = spec.orientation_deg.to_radians();
    let mut gratings = Vec::new();
    let mut noise = Vec::new();
    match spec.kind {
        SynthKind::TranslatingSine => gratings.push(Grating {
            nx: theta.cos(),
            ny: theta.sin(),
            wavelength: spec.wavelength,
            velocity: spec.velocity,
            phase: rng.random_range(0.0..2.0 * PI),
        }),
        SynthKind::SineMixture => {
            for _ in 0..spec.components {
                let a = theta + rng.random_range(0.0..PI);
                gratings.push(Grating {
                    nx: a.cos(),
                    ny: a.sin(),
                    wavelength: spec.wavelength * rng.random_range(1.0..2.0),
                    velocity: spec.velocity * rng.random_range(0.5..1.5),
                    phase: rng.random_range(0.0..2.0 * PI),
                });
            }
        }
        SynthKind::Flicker | SynthKind::AdvectedNoise | SynthKind::StaticNoise => {
            noise = value_noise(spec.width, spec.height, spec.noise_scale, &mut rng);
        }
    }
    Ok(SynthStream {
        spec: spec.clone(),
        noise,
        gratings,
        t: 0,
    })
}

fn value_noise(width: usize, height: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let lw = (width as f64 / scale).ceil() as usize + 2;
    let lh = (height as f64 / scale).ceil() as usize + 2;
    let lattice: Vec<f64> = (0..lw * lh).map(|_| rng.random_range(0.0..1.0)).collect();
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let fy = y as f64 / scale;
        let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
        for x in 0..width {
            let fx = x as f64 / scale;
            let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
            let l = |i: usize, j: usize| lattice[j * lw + i];
            let top = l(ix, iy) + (l(ix + 1, iy) - l(ix, iy)) * tx;
            let bottom = l(ix, iy + 1) + (l(ix + 1, iy + 1) - l(ix, iy + 1)) * tx;
            out.push(top + (bottom - top) * ty);
        }
    }
    out
}

impl SynthStream {
    fn render(&self, t: usize) -> Frame {
        let s = &self.spec;
        let (w, h) = (s.width, s.height);
        let tf = t as f64;
        match s.kind {
            SynthKind::TranslatingSine => {
                let g = &self.gratings[0];
                Frame::from_fn(w, h, |x, y| {
                    let u = x as f64 * g.nx + y as f64 * g.ny;
                    (0.5 + 0.5 * (2.0 * PI * (u - g.velocity * tf) / g.wavelength + g.phase).sin())
                        as f32
                })
            }
            SynthKind::SineMixture => {
                let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
                let k = self.gratings.len() as f64;
                Frame::from_fn(w, h, |x, y| {
                    let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                    let sum: f64 = self
                        .gratings
                        .iter()
                        .map(|g| {
                            let u = dx * g.nx + dy * g.ny;
                            (2.0 * PI * (u - g.velocity * tf) / g.wavelength + g.phase).sin()
                        })
                        .sum();
                    (0.5 + 0.5 * sum / k) as f32
                })
            }
            SynthKind::StaticNoise => Frame::from_fn(w, h, |x, y| self.noise[y * w + x] as f32),
            SynthKind::Flicker => {
                let sign = if (t % s.period) * 2 < s.period {
                    1.0
                } else {
                    -1.0
                };
                Frame::from_fn(w, h, |x, y| {
                    (0.5 + (self.noise[y * w + x] - 0.5) * sign) as f32
                })
            }
            SynthKind::AdvectedNoise => {
                let theta = s.orientation_deg.to_radians();
                let (sx, sy) = (s.velocity * tf * theta.cos(), s.velocity * tf * theta.sin());
                Frame::from_fn(w, h, |x, y| {
                    let fx = (x as f64 - sx).rem_euclid(w as f64);
                    let fy = (y as f64 - sy).rem_euclid(h as f64);
                    let (ix, iy) = (fx.floor() as usize % w, fy.floor() as usize % h);
                    let (tx, ty) = (fx - fx.floor(), fy - fy.floor());
                    let (jx, jy) = ((ix + 1) % w, (iy + 1) % h);
                    let n = |i: usize, j: usize| self.noise[j * w + i];
                    let top = n(ix, iy) + (n(jx, iy) - n(ix, iy)) * tx;
                    let bottom = n(ix, jy) + (n(jx, jy) - n(ix, jy)) * tx;
                    (top + (bottom - top) * ty) as f32
                })
            }
        }
    }
}

impl Iterator for SynthStream {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.t >= self.spec.frames {
            return None;
        }
        let f = self.render(self.t);
        self.t += 1;
        Some(Ok(f))
    }
}

impl FrameStream for SynthStream {
    fn width(&self) -> usize {
        self.spec.width
    }
    fn height(&self) -> usize {
        self.spec.height
    }
    fn fps(&self) -> f64 {
        self.spec.fps
    }
    fn frame_count(&self) -> Option<usize> {
        Some(self.spec.frames)
    }
}

/// The three-class desk set: translating sine, flicker and static noise,
/// `per_class` videos each with distinct seeds.
pub fn desk3_specs(
    width: usize,
    height: usize,
    frames: usize,
    per_class: usize,
) -> Vec<(SynthSpec, u64)> {
    let kinds = [
        SynthKind::TranslatingSine,
        SynthKind::Flicker,
        SynthKind::StaticNoise,
    ];
    let mut out = Vec::new();
    for (k, &kind) in kinds.iter().enumerate() {
        for i in 0..per_class {
            let spec = SynthSpec::new(kind, width, height, frames);
            out.push((spec, 1000 * (k as u64 + 1) + i as u64));
        }
    }
    out
}

/// Writes the desk set as containers plus `manifest.tsv` under `dir`;
/// returns the manifest path.
pub fn write_desk3(
    dir: &Path,
    width: usize,
    height: usize,
    frames: usize,
    per_class: usize,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::from("#@name=desk3\n#@fps=25\n");
    for (spec, seed) in desk3_specs(width, height, frames, per_class) {
        let file = format!("{}-{seed}.strv", spec.kind.name());
        let mut stream = synth_texture(&spec, seed)?;
        write_container(&dir.join(&file), &mut stream)?;
        manifest.push_str(&format!(
            "{file}\t{}\t{}-{seed}\n",
            spec.kind.name(),
            spec.kind.name()
        ));
    }
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest)?;
    Ok(path)
}
