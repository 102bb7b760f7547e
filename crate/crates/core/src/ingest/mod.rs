//! Frame input: PGM sequences, the raw `STRFVID1` container, dataset
//! manifests, synthetic textures and the rescaling harness.

mod container;
mod manifest;
mod pgm;
mod rescale;
mod synth;

use std::path::Path;

use crate::error::{Error, Result};
use crate::plane::Plane;

pub use container::{
    read_container, write_container, ContainerReader, ContainerWriter, CONTAINER_MAGIC,
};
pub use manifest::{load_manifest, parse_manifest, Crop, DatasetManifest, ManifestEntry};
pub use pgm::{decode_pgm, encode_pgm8, PgmSequence};
pub use rescale::{rescale_video, RescaleMode, Rescaled};
pub use synth::{desk3_specs, synth_texture, write_desk3, SynthKind, SynthSpec};

/// Default frame rate assumed for sources without one (Hz).
pub const DEFAULT_FPS: f64 = 25.0;

/// Grayscale frame with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims(
                format!("{} samples", width * height),
                format!("{} samples", data.len()),
            ));
        }
        Ok(Frame {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Frame {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn to_plane(&self) -> Plane {
        Plane::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("frame dimensions are consistent")
    }

    pub fn crop(&self, c: &Crop) -> Result<Frame> {
        if c.x + c.w > self.width || c.y + c.h > self.height || c.w == 0 || c.h == 0 {
            return Err(Error::BadParams(format!(
                "crop {c:?} outside {}x{} frame",
                self.width, self.height
            )));
        }
        Ok(Frame::from_fn(c.w, c.h, |x, y| self.get(c.x + x, c.y + y)))
    }

    pub fn scaled(&self, factor: f32) -> Frame {
        Frame {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

/// A single-consumer stream of equally sized frames.
pub trait FrameStream: Iterator<Item = Result<Frame>> + Send {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn fps(&self) -> f64;
    /// Number of frames, when known up front.
    fn frame_count(&self) -> Option<usize>;
}

impl<S: FrameStream + ?Sized> FrameStream for Box<S> {
    fn width(&self) -> usize {
        (**self).width()
    }
    fn height(&self) -> usize {
        (**self).height()
    }
    fn fps(&self) -> f64 {
        (**self).fps()
    }
    fn frame_count(&self) -> Option<usize> {
        (**self).frame_count()
    }
}

/// In-memory frame stream, mostly for tests and small clips.
#[derive(Debug, Clone)]
pub struct VecStream {
    width: usize,
    height: usize,
    fps: f64,
    frames: std::vec::IntoIter<Frame>,
    total: usize,
}

impl VecStream {
    pub fn new(frames: Vec<Frame>, fps: f64) -> Result<Self> {
        let (width, height) = frames
            .first()
            .map(|f| (f.width, f.height))
            .unwrap_or((0, 0));
        for (index, f) in frames.iter().enumerate() {
            if f.width != width || f.height != height {
                return Err(Error::DimensionChangeMidStream {
                    index,
                    expected: format!("{width}x{height}"),
                    actual: format!("{}x{}", f.width, f.height),
                });
            }
        }
        if !(fps > 0.0) {
            return Err(Error::BadParams(format!("fps must be positive, got {fps}")));
        }
        let total = frames.len();
        Ok(VecStream {
            width,
            height,
            fps,
            frames: frames.into_iter(),
            total,
        })
    }
}

impl Iterator for VecStream {
    type Item = Result<Frame>;
    fn next(&mut self) -> Option<Self::Item> {
        self.frames.next().map(Ok)
    }
}

impl FrameStream for VecStream {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn fps(&self) -> f64 {
        self.fps
    }
    fn frame_count(&self) -> Option<usize> {
        Some(self.total)
    }
}

/// Applies a fixed crop to every frame of a stream.
pub struct Cropped<S> {
    inner: S,
    crop: Crop,
}

impl<S: FrameStream> Cropped<S> {
    pub fn new(inner: S, crop: Crop) -> Result<Self> {
        if crop.x + crop.w > inner.width() || crop.y + crop.h > inner.height() {
            return Err(Error::BadParams(format!(
                "crop {crop:?} outside {}x{} stream",
                inner.width(),
                inner.height()
            )));
        }
        Ok(Cropped { inner, crop })
    }
}

impl<S: FrameStream> Iterator for Cropped<S> {
    type Item = Result<Frame>;
    fn next(&mut self) -> Option<Self::Item> {
        self.inner
            .next()
            .map(|r| r.and_then(|f| f.crop(&self.crop)))
    }
}

impl<S: FrameStream> FrameStream for Cropped<S> {
    fn width(&self) -> usize {
        self.crop.w
    }
    fn height(&self) -> usize {
        self.crop.h
    }
    fn fps(&self) -> f64 {
        self.inner.fps()
    }
    fn frame_count(&self) -> Option<usize> {
        self.inner.frame_count()
    }
}

/// Opens a PGM-sequence directory, a single PGM file or a raw container.
pub fn read_frames(source: &Path) -> Result<Box<dyn FrameStream>> {
    if !source.exists() {
        return Err(Error::MissingFile(source.to_path_buf()));
    }
    if source.is_dir() {
        return Ok(Box::new(PgmSequence::open(source, DEFAULT_FPS)?));
    }
    let mut magic = [0u8; 8];
    let n = {
        use std::io::Read;
        let mut f = std::fs::File::open(source)?;
        let mut read = 0;
        while read < magic.len() {
            let k = f.read(&mut magic[read..])?;
            if k == 0 {
                break;
            }
            read += k;
        }
        read
    };
    if n == 8 && &magic == CONTAINER_MAGIC {
        return Ok(Box::new(ContainerReader::open(source)?));
    }
    if n >= 2 && (&magic[..2] == b"P5" || &magic[..2] == b"P2") {
        return Ok(Box::new(PgmSequence::from_files(
            vec![source.to_path_buf()],
            DEFAULT_FPS,
        )?));
    }
    Err(Error::UnsupportedFormat(source.display().to_string()))
}

/// Collects a whole stream into memory.
pub fn collect_frames<S: FrameStream + ?Sized>(stream: &mut S) -> Result<Vec<Frame>> {
    let mut out = Vec::new();
    for f in stream {
        out.push(f?);
    }
    Ok(out)
}
