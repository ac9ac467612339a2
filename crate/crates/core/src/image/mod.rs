//! Image and mask containers plus the pixel-level operations shared by every
//! stage of the pipeline.
//!
//! Images hold gamma-encoded RGB components in `[0, 1]` exactly as stored on
//! disk; no linearization is applied anywhere.

mod io;
mod ops;
pub mod poisson;
mod selection;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{decode_image, decode_mask, encode_mask_png, encode_png, quantize};
pub use ops::{alpha_composite, color_offset, mask_combine, mask_erase, mask_scale, MaskEntry};
pub use poisson::{poisson_blend, poisson_blend_with, PoissonOptions};
pub use selection::{Region, RegionSelection};

/// Row-major H×W RGB image with components in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

/// Row-major H×W alpha map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaMask {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

fn check_unit(values: &[f32], what: &str) -> Result<()> {
    if let Some(v) = values
        .iter()
        .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
    {
        return Err(Error::InvalidArgument(format!(
            "{what} value {v} outside [0, 1]"
        )));
    }
    Ok(())
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "image dimensions must be at least 1x1, got {height}x{width}"
        )));
    }
    Ok(())
}

#[inline]
fn bilinear_taps(v: f64, len: usize) -> (usize, usize, f32) {
    let max = (len - 1) as f64;
    let v = v.clamp(0.0, max);
    let i0 = v.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, (v - i0 as f64) as f32)
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width * 3 {
            return Err(Error::InvalidArgument(format!(
                "expected {} components for {height}x{width} RGB, got {}",
                height * width * 3,
                data.len()
            )));
        }
        check_unit(&data, "image")?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        Self::from_fn(height, width, |_, _| rgb)
    }

    /// Builds an image from `f(y, x)`; components are clamped to `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Self {
        assert!(height > 0 && width > 0, "image dimensions must be non-zero");
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                let px = f(y, x);
                data.extend(px.iter().map(|c| clamp_unit(*c)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        for c in 0..3 {
            self.data[i + c] = clamp_unit(rgb[c]);
        }
    }

    /// Bilinear sample at subpixel `(x, y)` (pixel centers on integers),
    /// clamping to the edge outside the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f32; 3] {
        let (x0, x1, fx) = bilinear_taps(x, self.width);
        let (y0, y1, fy) = bilinear_taps(y, self.height);
        let a = self.get(y0, x0);
        let b = self.get(y0, x1);
        let c = self.get(y1, x0);
        let d = self.get(y1, x1);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bot = c[k] + (d[k] - c[k]) * fx;
            out[k] = clamp_unit(top + (bot - top) * fy);
        }
        out
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(y, self.width - 1 - x, self.get(y, x));
            }
        }
        out
    }

    /// Copies the rectangle `[x0, x0+w) × [y0, y0+h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(h, w, |y, x| self.get(y0 + y, x0 + x)))
    }

    /// Channel-planar copy (`3 × H × W`), the layout the networks consume.
    pub fn to_planar(&self) -> Vec<f32> {
        let n = self.height * self.width;
        let mut out = vec![0.0; 3 * n];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            out[i] = px[0];
            out[n + i] = px[1];
            out[2 * n + i] = px[2];
        }
        out
    }

    /// Inverse of [`to_planar`](Self::to_planar); values are clamped.
    pub fn from_planar(height: usize, width: usize, planar: &[f32]) -> Result<Self> {
        check_dims(height, width)?;
        let n = height * width;
        if planar.len() != 3 * n {
            return Err(Error::InvalidArgument(format!(
                "planar buffer has {} values, expected {}",
                planar.len(),
                3 * n
            )));
        }
        if planar.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite planar value".into()));
        }
        Ok(Self::from_fn(height, width, |y, x| {
            let i = y * width + x;
            [planar[i], planar[n + i], planar[2 * n + i]]
        }))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        io::load_image(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        io::save_image(self, path.as_ref())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

impl AlphaMask {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(height, width)?;
        if data.len() != height * width {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for {height}x{width} mask, got {}",
                height * width,
                data.len()
            )));
        }
        check_unit(&data, "mask")?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self::from_fn(height, width, |_, _| value)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(height > 0 && width > 0, "mask dimensions must be non-zero");
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(clamp_unit(f(y, x)));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.width + x] = clamp_unit(v);
    }

    pub fn sample_bilinear(&self, x: f64, y: f64) -> f32 {
        let (x0, x1, fx) = bilinear_taps(x, self.width);
        let (y0, y1, fy) = bilinear_taps(y, self.height);
        let top = self.get(y0, x0) + (self.get(y0, x1) - self.get(y0, x0)) * fx;
        let bot = self.get(y1, x0) + (self.get(y1, x1) - self.get(y1, x0)) * fx;
        clamp_unit(top + (bot - top) * fy)
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.height, self.width, |y, x| {
            self.get(y, self.width - 1 - x)
        })
    }

    /// Thresholds at `0.5` (inclusive) into a `{0, 1}` mask.
    pub fn binarize(&self) -> Self {
        Self::from_fn(self.height, self.width, |y, x| {
            if self.get(y, x) >= 0.5 {
                1.0
            } else {
                0.0
            }
        })
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0 || *v == 1.0)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v > 0.0).count()
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        io::load_mask(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        io::save_mask(self, path.as_ref())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

pub(crate) fn ensure_same_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected != actual {
        return Err(Error::dims(expected, actual));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_out_of_range() {
        assert!(ImageTensor::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(ImageTensor::new(1, 1, vec![0.0, f32::NAN, 0.0]).is_err());
        assert!(ImageTensor::new(0, 1, vec![]).is_err());
        assert!(AlphaMask::new(1, 2, vec![0.5]).is_err());
    }

    #[test]
    fn bilinear_at_integer_coordinates_is_exact() {
        let img = ImageTensor::from_fn(4, 5, |y, x| [x as f32 / 4.0, y as f32 / 3.0, 0.25]);
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(img.sample_bilinear(x as f64, y as f64), img.get(y, x));
            }
        }
        let mid = img.sample_bilinear(0.5, 0.0);
        assert!((mid[0] - 0.125).abs() < 1e-6);
        // edge clamp
        assert_eq!(img.sample_bilinear(-3.0, 10.0), img.get(3, 0));
    }

    #[test]
    fn planar_round_trip() {
        let img = ImageTensor::from_fn(3, 2, |y, x| [0.1 * y as f32, 0.2 * x as f32, 0.3]);
        let back = ImageTensor::from_planar(3, 2, &img.to_planar()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn flip_is_involution() {
        let img = ImageTensor::from_fn(3, 4, |y, x| [x as f32 / 3.0, y as f32 / 2.0, 0.0]);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_horizontal().get(0, 0), img.get(0, 3));
    }
}
