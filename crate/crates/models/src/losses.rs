//! Reconstruction and least-squares adversarial objectives.

use candle_core::Tensor;
use makeupbag_core::{AlphaMask, ImageTensor};

use crate::error::{ModelError, Result};

fn same_dims(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(ModelError::Config(format!(
            "tensor shapes differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// `mean|M⊙(I_ref − I_est)| + mean|(1 − M)⊙(I_orig − I_est)|` over pixels and
/// channels. Images are `(N, 3, H, W)`, the mask `(N, 1, H, W)`.
pub fn rec_loss(est: &Tensor, reference: &Tensor, orig: &Tensor, mask: &Tensor) -> Result<Tensor> {
    same_dims(est, reference)?;
    same_dims(est, orig)?;
    let (n, _, h, w) = est.dims4()?;
    if mask.dims() != [n, 1, h, w] {
        return Err(ModelError::Config(format!(
            "mask shape {:?} does not fit {:?}",
            mask.dims(),
            est.dims()
        )));
    }
    let keep = mask.affine(-1.0, 1.0)?;
    let on = mask.broadcast_mul(&(reference - est)?)?.abs()?.mean_all()?;
    let off = keep.broadcast_mul(&(orig - est)?)?.abs()?.mean_all()?;
    Ok((on + off)?)
}

/// [`rec_loss`] evaluated directly on rasters.
pub fn rec_loss_value(
    est: &ImageTensor,
    reference: &ImageTensor,
    orig: &ImageTensor,
    mask: &AlphaMask,
) -> Result<f64> {
    for d in [reference.dims(), orig.dims(), mask.dims()] {
        if d != est.dims() {
            return Err(makeupbag_core::Error::DimensionMismatch {
                expected: est.dims(),
                actual: d,
            }
            .into());
        }
    }
    let mut sum = 0.0f64;
    for (i, m) in mask.data().iter().enumerate() {
        let m = *m as f64;
        for c in 0..3 {
            let k = 3 * i + c;
            let e = est.data()[k] as f64;
            sum += m * (reference.data()[k] as f64 - e).abs()
                + (1.0 - m) * (orig.data()[k] as f64 - e).abs();
        }
    }
    Ok(sum / est.data().len() as f64)
}

fn scale_mean(outs: &[Tensor], f: impl Fn(&Tensor) -> Result<Tensor>) -> Result<Tensor> {
    if outs.is_empty() {
        return Err(ModelError::Config(
            "discriminator produced no scales".into(),
        ));
    }
    let mut total = f(&outs[0])?;
    for o in &outs[1..] {
        total = (total + f(o)?)?;
    }
    Ok((total / outs.len() as f64)?)
}

/// `mean (D(real) − 1)² + mean D(fake)²`, averaged over scales.
pub fn lsgan_d_loss(real: &[Tensor], fake: &[Tensor]) -> Result<Tensor> {
    if real.len() != fake.len() {
        return Err(ModelError::Config(
            "real and fake scale counts differ".into(),
        ));
    }
    let r = scale_mean(real, |t| Ok(t.affine(1.0, -1.0)?.sqr()?.mean_all()?))?;
    let f = scale_mean(fake, |t| Ok(t.sqr()?.mean_all()?))?;
    Ok((r + f)?)
}

/// `mean (D(fake) − 1)²`, averaged over scales.
pub fn lsgan_g_loss(fake: &[Tensor]) -> Result<Tensor> {
    scale_mean(fake, |t| Ok(t.affine(1.0, -1.0)?.sqr()?.mean_all()?))
}
