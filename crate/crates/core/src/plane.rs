use crate::error::{Error, Result};

/// Row-major single-channel image with 64-bit samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims(
                format!("{} samples", width * height),
                format!("{} samples", data.len()),
            ));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::dims(
                format!("{width}x{height}"),
                format!("{}x{}", self.width, self.height),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Plane {
        self.map(|v| v * factor)
    }

    /// Rotates by 90 degrees: `out(x', y') = in(W-1-y', x')`.
    pub fn rotate90(&self) -> Plane {
        let (w, h) = (self.width, self.height);
        Plane::from_fn(h, w, |x, y| self.get(y, h - 1 - x))
    }
}

/// Folds an out-of-range index back into `0..n` by symmetric extension
/// (`... c b a | a b c ... x y z | z y x ...`).
#[inline]
pub(crate) fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_folds_symmetrically() {
        let idx: Vec<usize> = (-4..8).map(|i| mirror_index(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        assert_eq!(mirror_index(-9, 4), 0);
    }

    #[test]
    fn rotate90_four_times_is_identity() {
        let p = Plane::from_fn(5, 3, |x, y| (x * 10 + y) as f64);
        let r = p.rotate90();
        assert_eq!(r.dims(), (3, 5));
        assert_eq!(r.rotate90().rotate90().rotate90(), p);
    }
}
