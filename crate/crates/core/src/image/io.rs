use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageError, ImageFormat, RgbImage};

use super::{AlphaMask, ImageTensor};
use crate::error::{Error, Result};

/// 8-bit quantization used for every stored raster.
#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn map_image_error(err: ImageError) -> Error {
    match err {
        ImageError::Unsupported(e) => Error::UnsupportedFormat(e.to_string()),
        ImageError::IoError(e) => Error::Io(e),
        other => Error::Corrupt(other.to_string()),
    }
}

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let reader = image::ImageReader::open(path)?
        .with_guessed_format()
        .map_err(Error::Io)?;
    if reader.format().is_none() {
        return Err(Error::UnsupportedFormat(path.display().to_string()));
    }
    reader.decode().map_err(map_image_error)
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    ImageFormat::from_path(path).map_err(|_| Error::UnsupportedFormat(path.display().to_string()))
}

fn from_rgb8(rgb: &RgbImage) -> ImageTensor {
    let (w, h) = rgb.dimensions();
    ImageTensor::from_fn(h as usize, w as usize, |y, x| {
        let p = rgb.get_pixel(x as u32, y as u32).0;
        [
            p[0] as f32 / 255.0,
            p[1] as f32 / 255.0,
            p[2] as f32 / 255.0,
        ]
    })
}

fn to_rgb8(img: &ImageTensor) -> RgbImage {
    RgbImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        let p = img.get(y as usize, x as usize);
        image::Rgb([quantize(p[0]), quantize(p[1]), quantize(p[2])])
    })
}

fn from_gray8(g: &GrayImage) -> AlphaMask {
    let (w, h) = g.dimensions();
    AlphaMask::from_fn(h as usize, w as usize, |y, x| {
        g.get_pixel(x as u32, y as u32).0[0] as f32 / 255.0
    })
}

fn to_gray8(m: &AlphaMask) -> GrayImage {
    GrayImage::from_fn(m.width() as u32, m.height() as u32, |x, y| {
        image::Luma([quantize(m.get(y as usize, x as usize))])
    })
}

pub(super) fn load_image(path: &Path) -> Result<ImageTensor> {
    Ok(from_rgb8(&open(path)?.to_rgb8()))
}

pub(super) fn save_image(img: &ImageTensor, path: &Path) -> Result<()> {
    let format = format_for(path)?;
    to_rgb8(img)
        .save_with_format(path, format)
        .map_err(map_image_error)
}

pub(super) fn load_mask(path: &Path) -> Result<AlphaMask> {
    Ok(from_gray8(&open(path)?.to_luma8()))
}

pub(super) fn save_mask(mask: &AlphaMask, path: &Path) -> Result<()> {
    let format = format_for(path)?;
    to_gray8(mask)
        .save_with_format(path, format)
        .map_err(map_image_error)
}

/// Decodes any supported raster held in memory.
pub fn decode_image(bytes: &[u8]) -> Result<ImageTensor> {
    let img = image::load_from_memory(bytes).map_err(map_image_error)?;
    Ok(from_rgb8(&img.to_rgb8()))
}

/// Decodes a raster as a single-channel mask (color inputs are converted to luma).
pub fn decode_mask(bytes: &[u8]) -> Result<AlphaMask> {
    let img = image::load_from_memory(bytes).map_err(map_image_error)?;
    Ok(from_gray8(&img.to_luma8()))
}

pub fn encode_png(img: &ImageTensor) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    to_rgb8(img)
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(map_image_error)?;
    Ok(buf.into_inner())
}

pub fn encode_mask_png(mask: &AlphaMask) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    to_gray8(mask)
        .write_to(&mut buf, ImageFormat::Png)
        .map_err(map_image_error)?;
    Ok(buf.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_half_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.png");
        let img = ImageTensor::filled(2, 2, [0.5, 0.5, 0.5]);
        img.save(&path).unwrap();
        let back = ImageTensor::load(&path).unwrap();
        assert_eq!(back.dims(), (2, 2));
        assert!(back.max_abs_diff(&img) <= 1.0 / 255.0);
    }

    #[test]
    fn endpoint_one_survives_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.png");
        let img = ImageTensor::filled(1, 3, [1.0, 0.0, 1.0]);
        img.save(&path).unwrap();
        let back = ImageTensor::load(&path).unwrap();
        assert_eq!(back.get(0, 1), [1.0, 0.0, 1.0]);
    }

    #[test]
    fn quantized_image_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.png");
        let img = ImageTensor::from_fn(3, 3, |y, x| {
            let v = ((y * 3 + x) * 28) as f32 / 255.0;
            [v, 1.0 - v, v * 0.5]
        });
        img.save(&path).unwrap();
        let once = ImageTensor::load(&path).unwrap();
        once.save(&path).unwrap();
        assert_eq!(ImageTensor::load(&path).unwrap(), once);
    }

    #[test]
    fn missing_file_is_reported() {
        let err = ImageTensor::load("/definitely/not/here.png").unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }

    #[test]
    fn corrupt_and_unsupported_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, b"\x89PNG\r\n\x1a\nnot really a png").unwrap();
        assert!(matches!(
            ImageTensor::load(&bad).unwrap_err(),
            Error::Corrupt(_) | Error::Io(_)
        ));
        let txt = dir.path().join("notes.txt");
        std::fs::write(&txt, b"hello").unwrap();
        assert!(matches!(
            ImageTensor::load(&txt).unwrap_err(),
            Error::UnsupportedFormat(_)
        ));
        let img = ImageTensor::filled(1, 1, [0.0; 3]);
        assert!(matches!(
            img.save(dir.path().join("x.unknownext")).unwrap_err(),
            Error::UnsupportedFormat(_)
        ));
    }

    #[test]
    fn mask_png_is_single_channel() {
        let m = AlphaMask::from_fn(2, 3, |y, x| (y * 3 + x) as f32 / 5.0);
        let bytes = encode_mask_png(&m).unwrap();
        let decoded = image::load_from_memory(&bytes).unwrap();
        assert_eq!(decoded.color(), image::ColorType::L8);
        let back = decode_mask(&bytes).unwrap();
        assert!(back.max_abs_diff(&m) <= 0.5 / 255.0 + 1e-7);
    }
}
