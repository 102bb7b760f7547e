//! Spatial and temporal video rescaling for covariance checks.
//!
//! Spatially, output pixel `x'` samples the input at `x'/S_s` (origin
//! aligned, so input pixel `x` lands exactly on `S_s x` for integer factors)
//! with bilinear interpolation and edge clamping. Temporally, a factor
//! `S_tau = m` repeats every frame `m` times and `S_tau = 1/m` keeps every
//! `m`-th frame; the declared frame rate is multiplied by `S_tau`.

use std::collections::VecDeque;

use super::{Frame, FrameStream};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RescaleMode {
    /// Any integer or reciprocal-integer temporal factor.
    Free,
    /// Temporal factor must also be `c^j` for an integer `j`.
    Covariance { c: f64 },
}

pub struct Rescaled<S> {
    inner: S,
    spatial: f64,
    out_w: usize,
    out_h: usize,
    repeat: usize,
    skip: usize,
    fps: f64,
    pending: VecDeque<Frame>,
    in_index: usize,
}

pub fn rescale_video<S: FrameStream>(
    stream: S,
    spatial: f64,
    temporal: f64,
    mode: RescaleMode,
) -> Result<Rescaled<S>> {
    if !(spatial > 0.0) || !spatial.is_finite() {
        return Err(Error::BadParams(format!(
            "spatial factor must be positive, got {spatial}"
        )));
    }
    if !(temporal > 0.0) || !temporal.is_finite() {
        return Err(Error::BadParams(format!(
            "temporal factor must be positive, got {temporal}"
        )));
    }
    let (repeat, skip) =
        integer_factor(temporal).ok_or(Error::NonIntegerTemporalFactor(temporal))?;
    if let RescaleMode::Covariance { c } = mode {
        let j = temporal.ln() / c.ln();
        if (j - j.round()).abs() > 1e-9 {
            return Err(Error::NonIntegerTemporalFactor(temporal));
        }
    }
    let out_w = ((stream.width() as f64) * spatial).round().max(1.0) as usize;
    let out_h = ((stream.height() as f64) * spatial).round().max(1.0) as usize;
    let fps = stream.fps() * temporal;
    Ok(Rescaled {
        inner: stream,
        spatial,
        out_w,
        out_h,
        repeat,
        skip,
        fps,
        pending: VecDeque::new(),
        in_index: 0,
    })
}

fn integer_factor(f: f64) -> Option<(usize, usize)> {
    let near = |v: f64| (v - v.round()).abs() < 1e-9 && v.round() >= 1.0;
    if near(f) {
        Some((f.round() as usize, 1))
    } else if near(1.0 / f) {
        Some((1, (1.0 / f).round() as usize))
    } else {
        None
    }
}

impl<S: FrameStream> Rescaled<S> {
    fn resample(&self, f: Frame) -> Frame {
        if self.spatial == 1.0 {
            return f;
        }
        let (w, h) = (f.width, f.height);
        let s = self.spatial;
        Frame::from_fn(self.out_w, self.out_h, |x, y| {
            let fx = (x as f64 / s).min((w - 1) as f64);
            let fy = (y as f64 / s).min((h - 1) as f64);
            let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
            let (jx, jy) = ((ix + 1).min(w - 1), (iy + 1).min(h - 1));
            let (tx, ty) = (fx - ix as f64, fy - iy as f64);
            let g = |i: usize, j: usize| f.get(i, j) as f64;
            let top = g(ix, iy) + (g(jx, iy) - g(ix, iy)) * tx;
            let bottom = g(ix, jy) + (g(jx, jy) - g(ix, jy)) * tx;
            (top + (bottom - top) * ty) as f32
        })
    }
}

impl<S: FrameStream> Iterator for Rescaled<S> {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(f) = self.pending.pop_front() {
            return Some(Ok(f));
        }
        loop {
            let frame = match self.inner.next()? {
                Ok(f) => f,
                Err(e) => return Some(Err(e)),
            };
            let index = self.in_index;
            self.in_index += 1;
            if !index.is_multiple_of(self.skip) {
                continue;
            }
            let out = self.resample(frame);
            for _ in 1..self.repeat {
                self.pending.push_back(out.clone());
            }
            return Some(Ok(out));
        }
    }
}

impl<S: FrameStream> FrameStream for Rescaled<S> {
    fn width(&self) -> usize {
        self.out_w
    }
    fn height(&self) -> usize {
        self.out_h
    }
    fn fps(&self) -> f64 {
        self.fps
    }
    fn frame_count(&self) -> Option<usize> {
        self.inner
            .frame_count()
            .map(|n| n.div_ceil(self.skip) * self.repeat)
    }
}
