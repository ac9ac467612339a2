use crate::error::{dims, Error, Result};
use crate::image::{poisson_blend, AlphaMask, ImageTensor};

/// Image-to-image "makeup removal" used by [`residual_mask`].
pub trait Translator: Send + Sync {
    fn translate(&self, img: &ImageTensor) -> Result<ImageTensor>;
}

/// Adapts a closure.
pub struct FnTranslator<F>(pub F);

impl<F> Translator for FnTranslator<F>
where
    F: Fn(&ImageTensor) -> Result<ImageTensor> + Send + Sync,
{
    fn translate(&self, img: &ImageTensor) -> Result<ImageTensor> {
        (self.0)(img)
    }
}

/// Recolors every pixel to a fixed skin tone at the pixel's own luminance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkinToneTranslator {
    pub tone: [f32; 3],
}

fn luma(c: [f32; 3]) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

impl Translator for SkinToneTranslator {
    fn translate(&self, img: &ImageTensor) -> Result<ImageTensor> {
        let tone_luma = luma(self.tone).max(1e-6);
        Ok(ImageTensor::from_fn(img.height(), img.width(), |y, x| {
            let k = luma(img.get(y, x)) / tone_luma;
            self.tone.map(|t| t * k)
        }))
    }
}

/// Runs `inner` on overlapping tiles and stitches them with Poisson blending
/// so tile seams carry no gradient jumps.
pub struct PatchwiseTranslator<T> {
    pub inner: T,
    pub patch: usize,
}

fn tile_starts(len: usize, patch: usize) -> Vec<usize> {
    if len <= patch {
        return vec![0];
    }
    let stride = (patch / 2).max(1);
    let mut out: Vec<usize> = (0..=len - patch).step_by(stride).collect();
    if *out.last().unwrap() != len - patch {
        out.push(len - patch);
    }
    out
}

impl<T: Translator> Translator for PatchwiseTranslator<T> {
    fn translate(&self, img: &ImageTensor) -> Result<ImageTensor> {
        if self.patch < 3 {
            return Err(Error::InvalidArgument(
                "patch size must be at least 3".into(),
            ));
        }
        let (h, w) = img.dims();
        let (ph, pw) = (self.patch.min(h), self.patch.min(w));
        let mut tiles = Vec::new();
        let mut canvas = img.clone();
        for y0 in tile_starts(h, self.patch) {
            for x0 in tile_starts(w, self.patch) {
                let tile = img.crop(x0, y0, pw, ph)?;
                let out = self.inner.translate(&tile)?;
                if out.dims() != tile.dims() {
                    return Err(dims(tile.dims(), out.dims()));
                }
                paste(&mut canvas, &out, x0, y0);
                tiles.push((x0, y0, out));
            }
        }
        // second pass: re-insert each tile by its gradients, boundary taken
        // from the neighbours already on the canvas
        for (x0, y0, out) in &tiles {
            let (x0, y0) = (*x0, *y0);
            let mut src = canvas.clone();
            paste(&mut src, out, x0, y0);
            let region = AlphaMask::from_fn(h, w, |y, x| {
                let inside_tile = y > y0 && y + 1 < y0 + ph && x > x0 && x + 1 < x0 + pw;
                let inside_img = y > 0 && x > 0 && y + 1 < h && x + 1 < w;
                (inside_tile && inside_img) as u8 as f32
            });
            if region.count_nonzero() > 0 {
                canvas = poisson_blend(&src, &canvas, &region)?;
            }
        }
        Ok(canvas)
    }
}

fn paste(canvas: &mut ImageTensor, tile: &ImageTensor, x0: usize, y0: usize) {
    for y in 0..tile.height() {
        for x in 0..tile.width() {
            canvas.set(y0 + y, x0 + x, tile.get(y, x));
        }
    }
}

/// Flags pixels whose max-channel residual against the translation exceeds `threshold`.
pub fn residual_mask(
    img: &ImageTensor,
    translator: &dyn Translator,
    threshold: f32,
) -> Result<AlphaMask> {
    let out = translator.translate(img)?;
    if out.dims() != img.dims() {
        return Err(dims(img.dims(), out.dims()));
    }
    let data = img
        .data()
        .chunks_exact(3)
        .zip(out.data().chunks_exact(3))
        .map(|(a, b)| {
            let d = (0..3).map(|c| (a[c] - b[c]).abs()).fold(0.0f32, f32::max);
            (d > threshold) as u8 as f32
        })
        .collect();
    AlphaMask::new(img.height(), img.width(), data)
}
