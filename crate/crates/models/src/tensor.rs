//! Conversions between core raster types and `(N, C, H, W)` tensors.

use candle_core::{DType, Device, Tensor};
use makeupbag_core::{AlphaMask, ImageTensor, RegionEncoding};

use crate::error::{ModelError, Result};

/// `(1, 3, H, W)` with components in `[0, 1]`.
pub fn image_tensor(img: &ImageTensor, dtype: DType) -> Result<Tensor> {
    let (h, w) = img.dims();
    Ok(Tensor::from_vec(img.to_planar(), (1, 3, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// `(1, 1, H, W)`.
pub fn mask_tensor(mask: &AlphaMask, dtype: DType) -> Result<Tensor> {
    let (h, w) = mask.dims();
    Ok(Tensor::from_vec(mask.data().to_vec(), (1, 1, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Extractor input: RGB rescaled to `[-1, 1]` followed by the four region
/// indicator layers, `(1, 7, H, W)`.
pub fn extractor_input(img: &ImageTensor, enc: &RegionEncoding, dtype: DType) -> Result<Tensor> {
    if img.dims() != enc.dims() {
        return Err(makeupbag_core::Error::DimensionMismatch {
            expected: img.dims(),
            actual: enc.dims(),
        }
        .into());
    }
    let (h, w) = img.dims();
    let mut data: Vec<f32> = img.to_planar().iter().map(|v| v * 2.0 - 1.0).collect();
    data.extend(enc.to_planar());
    Ok(Tensor::from_vec(data, (1, 7, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Generator input `(1, 10, H, W)`: target, mask, warped reference, composite.
pub fn generator_input(
    target: &ImageTensor,
    mask: &AlphaMask,
    warped: &ImageTensor,
    composite: &ImageTensor,
    dtype: DType,
) -> Result<Tensor> {
    for d in [mask.dims(), warped.dims(), composite.dims()] {
        if d != target.dims() {
            return Err(makeupbag_core::Error::DimensionMismatch {
                expected: target.dims(),
                actual: d,
            }
            .into());
        }
    }
    let (h, w) = target.dims();
    let mut data = target.to_planar();
    data.extend_from_slice(mask.data());
    data.extend(warped.to_planar());
    data.extend(composite.to_planar());
    Ok(Tensor::from_vec(data, (1, 10, h, w), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Concatenates single-sample tensors along the batch dim.
pub fn stack(items: &[Tensor]) -> Result<Tensor> {
    if items.is_empty() {
        return Err(ModelError::Data("empty batch".into()));
    }
    Ok(Tensor::cat(items, 0)?)
}

/// First batch element of a `(N, 3, H, W)` tensor, clamped to `[0, 1]`.
pub fn tensor_image(t: &Tensor) -> Result<ImageTensor> {
    let (_, c, h, w) = t.dims4()?;
    if c != 3 {
        return Err(ModelError::Config(format!("expected 3 channels, got {c}")));
    }
    let data: Vec<f32> = t.get(0)?.flatten_all()?.to_dtype(DType::F32)?.to_vec1()?;
    let data: Vec<f32> = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(ImageTensor::from_planar(h, w, &data)?)
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?[0])
}
