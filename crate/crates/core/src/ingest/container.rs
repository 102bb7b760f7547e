//! Raw frame container.
//!
//! Layout, all little-endian: 8-byte magic `STRFVID1`, `u32` width, `u32`
//! height, `u32` frame count, `f32` fps, then `count` frames of
//! `width * height` row-major `f32` samples.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use super::{Frame, FrameStream};
use crate::error::{Error, Result};

pub const CONTAINER_MAGIC: &[u8; 8] = b"STRFVID1";
const HEADER_LEN: u64 = 8 + 16;

pub struct ContainerReader {
    reader: BufReader<File>,
    width: usize,
    height: usize,
    count: usize,
    fps: f64,
    next_index: usize,
    buf: Vec<u8>,
}

impl ContainerReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let file_len = file.metadata()?.len();
        let mut reader = BufReader::new(file);
        let mut header = [0u8; HEADER_LEN as usize];
        reader
            .read_exact(&mut header)
            .map_err(|_| Error::CorruptHeader("container header truncated".into()))?;
        if &header[..8] != CONTAINER_MAGIC {
            return Err(Error::UnsupportedFormat("missing STRFVID1 magic".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap()) as usize;
        let (width, height, count) = (u32_at(8), u32_at(12), u32_at(16));
        let fps = f32::from_le_bytes(header[20..24].try_into().unwrap()) as f64;
        if !(fps > 0.0) || !fps.is_finite() {
            return Err(Error::CorruptHeader(format!("invalid fps {fps}")));
        }
        let expected = HEADER_LEN + (width * height * count * 4) as u64;
        if file_len != expected {
            return Err(Error::CorruptHeader(format!(
                "container is {file_len} bytes, header implies {expected}"
            )));
        }
        Ok(ContainerReader {
            reader,
            width,
            height,
            count,
            fps,
            next_index: 0,
            buf: vec![0; width * height * 4],
        })
    }
}

impl Iterator for ContainerReader {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index >= self.count {
            return None;
        }
        self.next_index += 1;
        if let Err(e) = self.reader.read_exact(&mut self.buf) {
            return Some(Err(e.into()));
        }
        let data = self
            .buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Some(Frame::new(self.width, self.height, data))
    }
}

impl FrameStream for ContainerReader {
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
        Some(self.count)
    }
}

/// Incremental container writer; the frame count is patched on `finish`.
pub struct ContainerWriter {
    writer: BufWriter<File>,
    width: usize,
    height: usize,
    count: u32,
}

impl ContainerWriter {
    pub fn create(path: &Path, width: usize, height: usize, fps: f64) -> Result<Self> {
        let mut writer = BufWriter::new(File::create(path)?);
        writer.write_all(CONTAINER_MAGIC)?;
        writer.write_all(&(width as u32).to_le_bytes())?;
        writer.write_all(&(height as u32).to_le_bytes())?;
        writer.write_all(&0u32.to_le_bytes())?;
        writer.write_all(&(fps as f32).to_le_bytes())?;
        Ok(ContainerWriter {
            writer,
            width,
            height,
            count: 0,
        })
    }

    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        if frame.width != self.width || frame.height != self.height {
            return Err(Error::DimensionChangeMidStream {
                index: self.count as usize,
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{}x{}", frame.width, frame.height),
            });
        }
        for v in &frame.data {
            self.writer.write_all(&v.to_le_bytes())?;
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<u32> {
        self.writer.flush()?;
        let mut file = self.writer.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(16))?;
        file.write_all(&self.count.to_le_bytes())?;
        file.flush()?;
        Ok(self.count)
    }
}

/// Drains `stream` into a container file, returning the frame count.
pub fn write_container<S: FrameStream + ?Sized>(path: &Path, stream: &mut S) -> Result<u32> {
    let mut w = ContainerWriter::create(path, stream.width(), stream.height(), stream.fps())?;
    for frame in stream {
        w.push(&frame?)?;
    }
    w.finish()
}

pub fn read_container(path: &Path) -> Result<ContainerReader> {
    ContainerReader::open(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::VecStream;

    #[test]
    fn rejects_truncated_and_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("short.strfvid");
        std::fs::write(&p, b"STRFVID1\x01\0\0\0").unwrap();
        assert!(matches!(
            ContainerReader::open(&p),
            Err(Error::CorruptHeader(_))
        ));
        std::fs::write(&p, [b"NOTMAGIC".as_slice(), &[0u8; 16]].concat()).unwrap();
        assert!(matches!(
            ContainerReader::open(&p),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn header_layout_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.strfvid");
        let frames = vec![Frame::from_fn(3, 2, |x, y| (x + y) as f32); 4];
        let mut s = VecStream::new(frames, 15.0).unwrap();
        assert_eq!(write_container(&p, &mut s).unwrap(), 4);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 8 + 16 + 3 * 2 * 4 * 4);
        assert_eq!(&bytes[..8], b"STRFVID1");
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &4u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &15f32.to_le_bytes());
    }
}
