use std::path::{Path, PathBuf};

use super::{Frame, FrameStream};
use crate::error::{Error, Result};

/// Decodes a binary (`P5`) or ASCII (`P2`) PGM image, scaling by `1/maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| corrupt("missing magic"))?;
    let binary = match magic.as_slice() {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(Error::UnsupportedFormat("not a PGM file".into())),
    };
    let width = parse_uint(bytes, &mut pos, "width")?;
    let height = parse_uint(bytes, &mut pos, "height")?;
    let maxval = parse_uint(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(corrupt("maxval out of range"));
    }
    let n = width * height;
    let scale = 1.0 / maxval as f32;
    let data = if binary {
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        let raster = bytes
            .get(pos..pos + need)
            .ok_or_else(|| corrupt("truncated raster"))?;
        if wide {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 * scale)
                .collect()
        } else {
            raster.iter().map(|&v| v as f32 * scale).collect()
        }
    } else {
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(parse_uint(bytes, &mut pos, "sample")? as f32 * scale);
        }
        data
    };
    Frame::new(width, height, data)
}

/// Encodes a frame as 8-bit binary PGM (values clamped to `[0, 1]`).
pub fn encode_pgm8(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend(
        frame
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptHeader(msg.to_string())
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<Vec<u8>> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| bytes[start..*pos].to_vec())
}

fn parse_uint(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos).ok_or_else(|| corrupt(&format!("missing {what}")))?;
    std::str::from_utf8(&tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| corrupt(&format!("bad {what}")))
}

/// Lexicographically ordered PGM files, decoded one at a time.
#[derive(Debug)]
pub struct PgmSequence {
    files: std::vec::IntoIter<PathBuf>,
    total: usize,
    index: usize,
    width: usize,
    height: usize,
    fps: f64,
    first: Option<Frame>,
}

impl PgmSequence {
    pub fn open(dir: &Path, fps: f64) -> Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .map(|e| e.eq_ignore_ascii_case("pgm"))
                        .unwrap_or(false)
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::UnsupportedFormat(format!(
                "no .pgm files in {}",
                dir.display()
            )));
        }
        Self::from_files(files, fps)
    }

    pub fn from_files(files: Vec<PathBuf>, fps: f64) -> Result<Self> {
        let total = files.len();
        let mut files = files.into_iter();
        let first_path = files
            .next()
            .ok_or_else(|| Error::UnsupportedFormat("empty PGM sequence".into()))?;
        let first = decode_pgm(&std::fs::read(&first_path)?)?;
        Ok(PgmSequence {
            files,
            total,
            index: 0,
            width: first.width,
            height: first.height,
            fps,
            first: Some(first),
        })
    }

    pub fn with_fps(mut self, fps: f64) -> Self {
        self.fps = fps;
        self
    }
}

impl Iterator for PgmSequence {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(f) = self.first.take() {
            self.index = 1;
            return Some(Ok(f));
        }
        let path = self.files.next()?;
        let index = self.index;
        self.index += 1;
        Some(
            std::fs::read(&path)
                .map_err(Error::from)
                .and_then(|b| decode_pgm(&b))
                .and_then(|f| {
                    if f.width != self.width || f.height != self.height {
                        Err(Error::DimensionChangeMidStream {
                            index,
                            expected: format!("{}x{}", self.width, self.height),
                            actual: format!("{}x{}", f.width, f.height),
                        })
                    } else {
                        Ok(f)
                    }
                }),
        )
    }
}

impl FrameStream for PgmSequence {
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::read_frames;

    #[test]
    fn full_scale_maps_to_one() {
        let bytes = b"P5\n2 1\n255\n\xff\x00";
        let f = decode_pgm(bytes).unwrap();
        assert_eq!(f.data, vec![1.0, 0.0]);
    }

    #[test]
    fn ascii_and_comments_and_sixteen_bit() {
        let f = decode_pgm(b"P2\n# comment\n2 2\n4\n0 1 2 4\n").unwrap();
        assert_eq!(f.data, vec![0.0, 0.25, 0.5, 1.0]);
        let f = decode_pgm(b"P5 1 1 65535\n\xff\xff").unwrap();
        assert_eq!(f.data, vec![1.0]);
    }

    #[test]
    fn bad_headers() {
        assert!(matches!(
            decode_pgm(b"P6\n1 1\n255\n\0\0\0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5\n2 2\n255\n\0"),
            Err(Error::CorruptHeader(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5\nx 2\n255\n"),
            Err(Error::CorruptHeader(_))
        ));
    }

    #[test]
    fn directory_is_read_in_lexicographic_order() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("b.pgm", 2u8), ("a.pgm", 1), ("c.pgm", 3)] {
            std::fs::write(
                dir.path().join(name),
                [b"P5 1 1 255\n".as_slice(), &[v]].concat(),
            )
            .unwrap();
        }
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let stream = read_frames(dir.path()).unwrap();
        assert_eq!(stream.frame_count(), Some(3));
        let vals: Vec<f32> = stream
            .map(|f| (f.unwrap().data[0] * 255.0).round())
            .collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn size_change_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("0.pgm"), b"P5 1 1 255\n\x01").unwrap();
        std::fs::write(dir.path().join("1.pgm"), b"P5 2 1 255\n\x01\x02").unwrap();
        let results: Vec<_> = read_frames(dir.path()).unwrap().collect();
        assert!(results[0].is_ok());
        assert!(matches!(
            results[1],
            Err(Error::DimensionChangeMidStream { index: 1, .. })
        ));
    }
}
