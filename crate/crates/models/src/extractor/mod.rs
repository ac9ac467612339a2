//! Patch-local makeup classifier. Every convolution is unpadded and no layer
//! mixes information across the batch or the whole image, so each output
//! cell sees exactly one receptive-field window of the input.

mod config;
mod train;

use candle_core::{DType, Tensor};
use makeupbag_core::{AlphaMask, ImageTensor, RegionEncoding};
use serde::{Deserialize, Serialize};

pub use config::{ExtractorConfig, Ledger, LedgerEntry, StageConfig, REGION_CHANNELS};
pub use train::{
    mask_loss, mask_loss_tensor, train_extractor, EpochStats, ExtractorTrainConfig, LabeledSample,
};

use crate::error::{ModelError, Result};
use crate::params::{Conv, ParamStore};
use crate::tensor::extractor_input;

/// Bottleneck block: 1×1 reduce, k×k (stride s, unpadded), 1×1 expand, plus
/// a projection shortcut on the centre-cropped input.
struct Block {
    reduce: Conv,
    spatial: Conv,
    expand: Conv,
    shortcut: Option<Conv>,
    crop: usize,
    stride: usize,
}

impl Block {
    fn new(
        ps: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        mid: usize,
        k: usize,
        s: usize,
    ) -> Result<Self> {
        let reduce = Conv::new(
            ps,
            &format!("{name}.reduce"),
            (c_in, mid, 1),
            1,
            0,
            true,
            1.0,
        )?;
        let spatial = Conv::new(
            ps,
            &format!("{name}.spatial"),
            (mid, mid, k),
            s,
            0,
            true,
            1.0,
        )?;
        // small residual branch at init keeps the untrained trunk well scaled
        let expand = Conv::new(
            ps,
            &format!("{name}.expand"),
            (mid, c_out, 1),
            1,
            0,
            true,
            0.3,
        )?;
        let shortcut = if c_in != c_out || s != 1 {
            Some(Conv::new(
                ps,
                &format!("{name}.shortcut"),
                (c_in, c_out, 1),
                s,
                0,
                false,
                1.0,
            )?)
        } else {
            None
        };
        Ok(Self {
            reduce,
            spatial,
            expand,
            shortcut,
            crop: (k - 1) / 2,
            stride: s,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.reduce.forward(x)?.relu()?;
        let h = self.spatial.forward(&h)?.relu()?;
        let h = self.expand.forward(&h)?;
        let (_, _, hh, ww) = x.dims4()?;
        let cropped = if self.crop > 0 {
            x.narrow(2, self.crop, hh - 2 * self.crop)?
                .narrow(3, self.crop, ww - 2 * self.crop)?
        } else {
            x.clone()
        };
        let sc = match &self.shortcut {
            Some(c) => c.forward(&cropped)?,
            None if self.stride == 1 => cropped,
            None => unreachable!("strided blocks always project"),
        };
        Ok((h + sc)?.relu()?)
    }
}

/// Grid of per-patch logits for one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchLogitMap {
    pub rows: usize,
    pub cols: usize,
    /// Pixel distance between neighbouring cells.
    pub stride: usize,
    pub receptive_field: usize,
    /// Row-major logits.
    pub logits: Vec<f64>,
}

impl PatchLogitMap {
    pub fn new(
        rows: usize,
        cols: usize,
        stride: usize,
        receptive_field: usize,
        logits: Vec<f64>,
    ) -> Result<Self> {
        if logits.len() != rows * cols {
            return Err(ModelError::Config(format!(
                "{} logits for a {rows}x{cols} grid",
                logits.len()
            )));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite {
                what: "patch logit".into(),
                step: 0,
            });
        }
        Ok(Self {
            rows,
            cols,
            stride,
            receptive_field,
            logits,
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.logits[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }
}

/// Image score: the mean patch logit.
pub fn aggregate(plm: &PatchLogitMap) -> Result<f64> {
    if plm.is_empty() {
        return Err(ModelError::Data("empty patch grid".into()));
    }
    Ok(plm.logits.iter().sum::<f64>() / plm.len() as f64)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Bilinear taps of pixel `p` on a grid of `n` cell centres.
fn taps(p: usize, n: usize, stride: usize, rf: usize) -> (usize, usize, f64) {
    let half = (rf - 1) as f64 / 2.0;
    let g = ((p as f64 - half) / stride as f64).clamp(0.0, (n - 1) as f64);
    let i0 = g.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, g - i0 as f64)
}

/// `(len, n)` row-stochastic interpolation matrix.
fn interpolation_matrix(len: usize, n: usize, stride: usize, rf: usize) -> Vec<f64> {
    let mut m = vec![0.0; len * n];
    for p in 0..len {
        let (i0, i1, f) = taps(p, n, stride, rf);
        m[p * n + i0] += 1.0 - f;
        m[p * n + i1] += f;
    }
    m
}

/// Per-pixel confidences: sigmoid of the logits, bilinearly interpolated
/// between cell centres (clamped beyond the outermost centres).
pub fn logits_to_mask(plm: &PatchLogitMap, height: usize, width: usize) -> Result<AlphaMask> {
    if plm.is_empty() {
        return Err(ModelError::Data("empty patch grid".into()));
    }
    let probs: Vec<f64> = plm.logits.iter().map(|v| sigmoid(*v)).collect();
    let taps = |p: usize, n: usize| taps(p, n, plm.stride, plm.receptive_field);
    Ok(AlphaMask::from_fn(height, width, |y, x| {
        let (r0, r1, fy) = taps(y, plm.rows);
        let (c0, c1, fx) = taps(x, plm.cols);
        let p = |r: usize, c: usize| probs[r * plm.cols + c];
        let top = p(r0, c0) * (1.0 - fx) + p(r0, c1) * fx;
        let bottom = p(r1, c0) * (1.0 - fx) + p(r1, c1) * fx;
        (top * (1.0 - fy) + bottom * fy) as f32
    }))
}

/// The extractor network and its training-step counter.
pub struct ExtractorModel {
    pub config: ExtractorConfig,
    pub ledger: Ledger,
    pub params: ParamStore,
    pub steps: u64,
    stem_in: Conv,
    stem: Conv,
    blocks: Vec<Block>,
    head: Conv,
}

impl ExtractorModel {
    pub fn build(cfg: &ExtractorConfig) -> Result<Self> {
        Self::build_with_dtype(cfg, DType::F32)
    }

    pub fn build_with_dtype(cfg: &ExtractorConfig, dtype: DType) -> Result<Self> {
        let ledger = cfg.validate()?;
        let mut ps = ParamStore::new(cfg.seed, dtype);
        let w = cfg.stem_width;
        let stem_in = Conv::new(
            &mut ps,
            "stem.in",
            (cfg.input_channels, w, 1),
            1,
            0,
            true,
            1.0,
        )?;
        let stem = Conv::new(
            &mut ps,
            "stem.conv",
            (w, w, cfg.stem_kernel),
            1,
            0,
            true,
            1.0,
        )?;
        let mut blocks = Vec::new();
        let mut c_in = w;
        for (si, st) in cfg.stages.iter().enumerate() {
            for b in 0..st.blocks {
                let (k, s) = if b == 0 {
                    (st.kernel, st.stride)
                } else {
                    (1, 1)
                };
                let mid = st.width / cfg.expansion;
                blocks.push(Block::new(
                    &mut ps,
                    &format!("stage{si}.block{b}"),
                    c_in,
                    st.width,
                    mid,
                    k,
                    s,
                )?);
                c_in = st.width;
            }
        }
        let head = Conv::new(&mut ps, "head", (c_in, 1, 1), 1, 0, true, 1.0)?;
        Ok(Self {
            config: cfg.clone(),
            ledger,
            params: ps,
            steps: 0,
            stem_in,
            stem,
            blocks,
            head,
        })
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn receptive_field(&self) -> usize {
        self.ledger.receptive_field
    }

    pub fn stride(&self) -> usize {
        self.ledger.stride
    }

    fn features(&self, x: &Tensor) -> Result<Tensor> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.config.input_channels {
            return Err(ModelError::Config(format!(
                "extractor expects {} input channels, got {c}",
                self.config.input_channels
            )));
        }
        let rf = self.receptive_field();
        if h < rf || w < rf {
            return Err(ModelError::Undersized(format!(
                "{h}x{w} input, receptive field is {rf}"
            )));
        }
        let mut t = self.stem_in.forward(x)?.relu()?;
        t = self.stem.forward(&t)?.relu()?;
        for b in &self.blocks {
            t = b.forward(&t)?;
        }
        Ok(t)
    }

    /// Patch logits `(N, 1, rows, cols)`.
    pub fn patch_logits(&self, x: &Tensor) -> Result<Tensor> {
        self.head.forward(&self.features(x)?)
    }

    /// Fully connected classification head on globally averaged features, `(N,)`.
    /// By linearity it equals the mean of [`Self::patch_logits`].
    pub fn scalar_head(&self, x: &Tensor) -> Result<Tensor> {
        let f = self.features(x)?.mean_keepdim((2, 3))?;
        Ok(self.head.forward(&f)?.flatten_all()?)
    }

    /// Mean patch logit per image, `(N,)`.
    pub fn image_logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.patch_logits(x)?.mean((1, 2, 3))?)
    }

    pub fn patch_logit_map(
        &self,
        img: &ImageTensor,
        enc: &RegionEncoding,
    ) -> Result<PatchLogitMap> {
        let x = extractor_input(img, enc, self.dtype())?;
        self.logit_map_of(&x)
    }

    fn logit_map_of(&self, x: &Tensor) -> Result<PatchLogitMap> {
        let t = self.patch_logits(x)?;
        let (_, _, rows, cols) = t.dims4()?;
        let logits = t
            .get(0)?
            .flatten_all()?
            .to_dtype(DType::F64)?
            .to_vec1::<f64>()?;
        PatchLogitMap::new(rows, cols, self.stride(), self.receptive_field(), logits)
    }

    /// Probability that the image wears makeup.
    pub fn classify(&self, img: &ImageTensor, enc: &RegionEncoding) -> Result<f64> {
        Ok(sigmoid(aggregate(&self.patch_logit_map(img, enc)?)?))
    }

    /// Makeup mask at pixel resolution.
    pub fn extract_mask(&self, img: &ImageTensor, enc: &RegionEncoding) -> Result<AlphaMask> {
        let plm = self.patch_logit_map(img, enc)?;
        logits_to_mask(&plm, img.height(), img.width())
    }

    /// Differentiable [`Self::extract_mask`] for a batch, `(N, 1, H, W)`.
    pub fn mask_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let probs = candle_nn::ops::sigmoid(&self.patch_logits(x)?)?;
        let (_, _, rows, cols) = probs.dims4()?;
        let (_, _, h, w) = x.dims4()?;
        let (stride, rf) = (self.stride(), self.receptive_field());
        let dev = x.device();
        let ry = Tensor::from_vec(interpolation_matrix(h, rows, stride, rf), (h, rows), dev)?
            .to_dtype(self.dtype())?;
        let rx = Tensor::from_vec(interpolation_matrix(w, cols, stride, rf), (w, cols), dev)?
            .to_dtype(self.dtype())?;
        let cols_up = probs.broadcast_matmul(&rx.t()?.contiguous()?)?;
        Ok(ry.broadcast_matmul(&cols_up)?)
    }

    /// Sets the head to zero so every logit is 0.
    pub fn zero_head(&self) -> Result<()> {
        self.head
            .weight
            .set(&self.head.weight.as_tensor().zeros_like()?)?;
        if let Some(b) = &self.head.bias {
            b.set(&b.as_tensor().zeros_like()?)?;
        }
        Ok(())
    }
}
