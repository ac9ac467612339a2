use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use makeupbag_core::data::{sample_by_intensity, Intensity, OversampleWeights};
use makeupbag_core::{ImageTensor, RegionEncoding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExtractorModel;
use crate::error::{ModelError, Result};
use crate::tensor::{extractor_input, scalar, stack};

/// Binary cross-entropy of the image score against the label, computed as
/// `max(m, 0) − l·m + ln(1 + e^{−|m|})`.
pub fn mask_loss(m: f64, label: u8) -> Result<f64> {
    if label > 1 {
        return Err(ModelError::Data(format!("label {label} is not binary")));
    }
    let l = label as f64;
    Ok(m.max(0.0) - l * m + (-m.abs()).exp().ln_1p())
}

/// Batch-mean of [`mask_loss`] for score and label tensors of shape `(N,)`.
pub fn mask_loss_tensor(m: &Tensor, labels: &Tensor) -> Result<Tensor> {
    let softplus_tail = (m.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((m.relu()? - (labels * m)?)?
        .add(&softplus_tail)?
        .mean_all()?)
}

/// One training image with its region layers.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub image: ImageTensor,
    pub regions: RegionEncoding,
    pub label: u8,
    pub intensity: Intensity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Steps per epoch; defaults to one pass worth of samples.
    pub steps_per_epoch: Option<usize>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weights: OversampleWeights,
    pub flip_prob: f64,
    pub seed: u64,
}

impl Default for ExtractorTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            steps_per_epoch: None,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.99,
            eps: 1e-8,
            weights: OversampleWeights::default(),
            flip_prob: 0.5,
            seed: 0,
        }
    }
}

impl ExtractorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0)
            || !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
        {
            return Err(ModelError::Config(
                "lr must be > 0 and betas in [0, 1)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(ModelError::Config("flip_prob outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

fn check_dataset(model: &ExtractorModel, data: &[LabeledSample]) -> Result<()> {
    let first = data
        .first()
        .ok_or_else(|| ModelError::Data("empty dataset".into()))?;
    let rf = model.receptive_field();
    let dims = first.image.dims();
    if dims.0 < rf || dims.1 < rf {
        return Err(ModelError::Undersized(format!(
            "{}x{} images, receptive field is {rf}",
            dims.0, dims.1
        )));
    }
    for (i, s) in data.iter().enumerate() {
        if s.image.dims() != dims || s.regions.dims() != dims {
            return Err(ModelError::Data(format!(
                "sample {i} has different dimensions"
            )));
        }
        if s.label > 1 || (s.label == 0) != (s.intensity == Intensity::None) {
            return Err(ModelError::Data(format!(
                "sample {i} has inconsistent label/intensity"
            )));
        }
    }
    if data.iter().all(|s| s.label == 0) || data.iter().all(|s| s.label == 1) {
        return Err(ModelError::Data("training needs both labels".into()));
    }
    Ok(())
}

/// Trains on image-level labels. `on_epoch` runs after every epoch (e.g. to checkpoint).
pub fn train_extractor(
    model: &mut ExtractorModel,
    data: &[LabeledSample],
    cfg: &ExtractorTrainConfig,
    on_epoch: &mut dyn FnMut(&ExtractorModel, &EpochStats) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    check_dataset(model, data)?;
    if cfg.epochs == 0 {
        return Ok(Vec::new());
    }
    let dtype = model.dtype();
    let inputs: Vec<(Tensor, Tensor)> = data
        .iter()
        .map(|s| {
            let x = extractor_input(&s.image, &s.regions, dtype)?;
            let flipped = extractor_input(
                &s.image.flip_horizontal(),
                &s.regions.flip_horizontal(),
                dtype,
            )?;
            Ok((x, flipped))
        })
        .collect::<Result<_>>()?;
    let tags: Vec<Intensity> = data.iter().map(|s| s.intensity).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(
        model.params.vars(),
        ParamsAdamW {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: 0.0,
        },
    )?;
    let steps = cfg
        .steps_per_epoch
        .unwrap_or(data.len().div_ceil(cfg.batch_size))
        .max(1);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for _ in 0..steps {
            let idx = sample_by_intensity(&tags, cfg.batch_size, &mut rng, &cfg.weights)?;
            let xs: Vec<Tensor> = idx
                .iter()
                .map(|i| {
                    if rng.random_bool(cfg.flip_prob) {
                        inputs[*i].1.clone()
                    } else {
                        inputs[*i].0.clone()
                    }
                })
                .collect();
            let labels: Vec<f64> = idx.iter().map(|i| data[*i].label as f64).collect();
            let x = stack(&xs)?;
            let l =
                Tensor::from_vec(labels.clone(), labels.len(), &Device::Cpu)?.to_dtype(dtype)?;
            let logits = model.image_logits(&x)?;
            let loss = mask_loss_tensor(&logits, &l)?;
            let lv = scalar(&loss)?;
            if !lv.is_finite() {
                return Err(ModelError::NonFinite {
                    what: "mask loss".into(),
                    step: model.steps as usize,
                });
            }
            opt.backward_step(&loss)?;
            model.steps += 1;
            loss_sum += lv;
            let lg: Vec<f64> = logits.to_dtype(DType::F64)?.to_vec1()?;
            correct += lg
                .iter()
                .zip(&labels)
                .filter(|(m, l)| ((**m > 0.0) as u8 as f64) == **l)
                .count();
            seen += labels.len();
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / steps as f64,
            accuracy: correct as f64 / seen as f64,
        };
        on_epoch(model, &stats)?;
        history.push(stats);
    }
    Ok(history)
}
