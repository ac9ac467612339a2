use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use makeupbag_core::{ImageTensor, LandmarkSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Discriminator, Generator};
use crate::error::{ModelError, Result};
use crate::extractor::{mask_loss_tensor, ExtractorModel};
use crate::losses::{lsgan_d_loss, lsgan_g_loss, rec_loss};
use crate::pipeline::{stage_one, ExtractOn, MaskSource};
use crate::tensor::{extractor_input, generator_input, image_tensor, mask_tensor, scalar, stack};

/// Longest schedule the trainer accepts.
pub const MAX_EPOCHS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Total step cap across epochs.
    pub max_steps: Option<usize>,
    pub lambda_rec: f64,
    pub lambda_gan: f64,
    pub lr_d: f64,
    pub lr_g: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Also updates the extractor, adding its mask loss to the generator objective.
    pub joint: bool,
    pub lr_extractor: f64,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 4,
            max_steps: None,
            lambda_rec: 40.0,
            lambda_gan: 1.0,
            lr_d: 1e-4,
            lr_g: 2e-4,
            beta1: 0.5,
            beta2: 0.99,
            eps: 1e-8,
            joint: false,
            lr_extractor: 1e-4,
            seed: 0,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs > MAX_EPOCHS {
            return Err(ModelError::Config(format!(
                "at most {MAX_EPOCHS} epochs, got {}",
                self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        if !(self.lambda_rec >= 0.0 && self.lambda_gan >= 0.0) {
            return Err(ModelError::Config(
                "loss weights must be non-negative".into(),
            ));
        }
        if !(self.lr_d > 0.0 && self.lr_g > 0.0 && self.lr_extractor > 0.0) {
            return Err(ModelError::Config("learning rates must be positive".into()));
        }
        let open = |b: f64| b > 0.0 && b < 1.0;
        if !open(self.beta1) || !open(self.beta2) {
            return Err(ModelError::Config("betas must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One training pair with landmarks.
#[derive(Clone, Debug)]
pub struct GanPair {
    pub target: ImageTensor,
    pub target_landmarks: LandmarkSet,
    pub reference: ImageTensor,
    pub reference_landmarks: LandmarkSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub rec_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanEpochStats {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub rec_loss: f64,
}

/// Generator objective split into its terms.
pub struct Objective {
    pub total: Tensor,
    pub rec: Tensor,
    pub gan: Tensor,
}

pub trait GanObserver {
    fn on_step(&mut self, _trainer: &GanTrainer, _stats: &StepStats) -> Result<()> {
        Ok(())
    }
    fn on_epoch(&mut self, _trainer: &GanTrainer, _stats: &GanEpochStats) -> Result<()> {
        Ok(())
    }
}

impl GanObserver for () {}

struct Prepared {
    input: Tensor,
    target: Tensor,
    warped: Tensor,
    mask: Tensor,
    ext_warped: Tensor,
    ext_target: Tensor,
}

struct Batch {
    input: Tensor,
    target: Tensor,
    warped: Tensor,
    mask: Tensor,
}

/// Alternating discriminator/generator updates over precomputed first-stage data.
pub struct GanTrainer {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub extractor: ExtractorModel,
    pub config: GanTrainConfig,
    data: Vec<Prepared>,
    opt_g: AdamW,
    opt_d: AdamW,
    opt_e: AdamW,
    rng: ChaCha8Rng,
    steps: u64,
}

impl GanTrainer {
    pub fn new(
        generator: Generator,
        discriminator: Discriminator,
        extractor: ExtractorModel,
        pairs: &[GanPair],
        config: GanTrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if pairs.is_empty() {
            return Err(ModelError::Data("empty dataset".into()));
        }
        if extractor.steps == 0 {
            return Err(ModelError::UnfitExtractor);
        }
        let dims = pairs[0].target.dims();
        let dtype = generator.dtype();
        let mut data = Vec::with_capacity(pairs.len());
        {
            let source = MaskSource::Extractor(&extractor);
            for (i, p) in pairs.iter().enumerate() {
                if p.target.dims() != dims {
                    return Err(ModelError::Data(format!(
                        "pair {i}: targets must share one size"
                    )));
                }
                let s1 = stage_one(
                    Some(&source),
                    None,
                    &p.target,
                    &p.target_landmarks,
                    &p.reference,
                    &p.reference_landmarks,
                    ExtractOn::Warped,
                )?;
                data.push(Prepared {
                    input: generator_input(&p.target, &s1.mask, &s1.warped, &s1.composite, dtype)?,
                    target: image_tensor(&p.target, dtype)?,
                    warped: image_tensor(&s1.warped, dtype)?,
                    mask: mask_tensor(&s1.mask, dtype)?,
                    ext_warped: extractor_input(&s1.warped, &s1.regions, extractor.dtype())?,
                    ext_target: extractor_input(&p.target, &s1.regions, extractor.dtype())?,
                });
            }
        }
        let adam = |lr: f64| ParamsAdamW {
            lr,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.eps,
            weight_decay: 0.0,
        };
        let opt_g = AdamW::new(generator.params.vars(), adam(config.lr_g))?;
        let opt_d = AdamW::new(discriminator.params.vars(), adam(config.lr_d))?;
        let opt_e = AdamW::new(
            if config.joint {
                extractor.params.vars()
            } else {
                Vec::new()
            },
            adam(config.lr_extractor),
        )?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            generator,
            discriminator,
            extractor,
            config,
            data,
            opt_g,
            opt_d,
            opt_e,
            rng,
            steps: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let pick = |f: fn(&Prepared) -> &Tensor| {
            stack(
                &idx.iter()
                    .map(|i| f(&self.data[*i]).clone())
                    .collect::<Vec<_>>(),
            )
        };
        let warped = pick(|p| &p.warped)?;
        let target = pick(|p| &p.target)?;
        if !self.config.joint {
            return Ok(Batch {
                input: pick(|p| &p.input)?,
                target,
                warped,
                mask: pick(|p| &p.mask)?,
            });
        }
        let mask = self
            .extractor
            .mask_tensor(&pick(|p| &p.ext_warped)?)?
            .to_dtype(self.generator.dtype())?;
        let composite =
            (mask.broadcast_mul(&warped)? + mask.affine(-1.0, 1.0)?.broadcast_mul(&target)?)?;
        let input = Tensor::cat(&[&target, &mask, &warped, &composite], 1)?;
        Ok(Batch {
            input,
            target,
            warped,
            mask,
        })
    }

    /// `λ_rec · L_rec + λ_gan · L_GAN` on the given pairs (plus the mask loss in joint mode).
    pub fn generator_objective(&self, idx: &[usize]) -> Result<Objective> {
        let b = self.batch(idx)?;
        let fake = self.generator.forward(&b.input)?;
        let rec = rec_loss(&fake, &b.warped, &b.target, &b.mask)?;
        let gan = lsgan_g_loss(&self.discriminator.forward(&fake)?)?;
        let mut total = ((&rec * self.config.lambda_rec)? + (&gan * self.config.lambda_gan)?)?;
        if self.config.joint {
            let pos = stack(
                &idx.iter()
                    .map(|i| self.data[*i].ext_warped.clone())
                    .collect::<Vec<_>>(),
            )?;
            let neg = stack(
                &idx.iter()
                    .map(|i| self.data[*i].ext_target.clone())
                    .collect::<Vec<_>>(),
            )?;
            let dev = pos.device();
            let ones = Tensor::ones(idx.len(), self.extractor.dtype(), dev)?;
            let zeros = Tensor::zeros(idx.len(), self.extractor.dtype(), dev)?;
            let lm = (mask_loss_tensor(&self.extractor.image_logits(&pos)?, &ones)?
                + mask_loss_tensor(&self.extractor.image_logits(&neg)?, &zeros)?)?;
            total = (total + lm.to_dtype(rec.dtype())?)?;
        }
        Ok(Objective { total, rec, gan })
    }

    /// Discriminator loss with the generator output detached.
    pub fn discriminator_objective(&self, idx: &[usize]) -> Result<Tensor> {
        let b = self.batch(idx)?;
        let fake = self.generator.forward(&b.input)?.detach();
        lsgan_d_loss(
            &self.discriminator.forward(&b.warped)?,
            &self.discriminator.forward(&fake)?,
        )
    }

    /// Mean reconstruction loss of the current generator on fixed pairs.
    pub fn rec_loss_on(&self, idx: &[usize]) -> Result<f64> {
        let b = self.batch(idx)?;
        let fake = self.generator.forward(&b.input)?;
        scalar(&rec_loss(&fake, &b.warped, &b.target, &b.mask)?)
    }

    /// Generator outputs for the given pairs.
    pub fn outputs(&self, idx: &[usize]) -> Result<Tensor> {
        self.generator.forward(&self.batch(idx)?.input)
    }

    fn finite(&self, v: f64, what: &str) -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ModelError::NonFinite {
                what: what.into(),
                step: self.steps as usize,
            })
        }
    }

    /// One discriminator update followed by one generator update.
    pub fn step(&mut self) -> Result<StepStats> {
        let n = self.data.len();
        let idx: Vec<usize> = (0..self.config.batch_size)
            .map(|_| self.rng.random_range(0..n))
            .collect();

        let d = self.discriminator_objective(&idx)?;
        let d_loss = self.finite(scalar(&d)?, "discriminator loss")?;
        self.opt_d.backward_step(&d)?;

        let obj = self.generator_objective(&idx)?;
        let g_loss = self.finite(scalar(&obj.total)?, "generator loss")?;
        let rec = scalar(&obj.rec)?;
        let grads = obj.total.backward()?;
        self.opt_g.step(&grads)?;
        if self.config.joint {
            self.opt_e.step(&grads)?;
            self.extractor.steps += 1;
        }
        self.steps += 1;
        self.generator.steps += 1;
        Ok(StepStats {
            step: self.steps,
            d_loss,
            g_loss,
            rec_loss: rec,
        })
    }

    /// Runs the configured schedule. Zero epochs leaves every model untouched.
    pub fn train(&mut self, observer: &mut dyn GanObserver) -> Result<Vec<GanEpochStats>> {
        let per_epoch = self.data.len().div_ceil(self.config.batch_size).max(1);
        let mut history = Vec::new();
        for epoch in 0..self.config.epochs {
            let mut sums = [0.0; 3];
            let mut count = 0usize;
            for _ in 0..per_epoch {
                if self
                    .config
                    .max_steps
                    .is_some_and(|m| self.steps as usize >= m)
                {
                    break;
                }
                let s = self.step()?;
                sums[0] += s.d_loss;
                sums[1] += s.g_loss;
                sums[2] += s.rec_loss;
                count += 1;
                observer.on_step(self, &s)?;
            }
            if count == 0 {
                break;
            }
            let c = count as f64;
            let stats = GanEpochStats {
                epoch,
                d_loss: sums[0] / c,
                g_loss: sums[1] / c,
                rec_loss: sums[2] / c,
            };
            observer.on_epoch(self, &stats)?;
            history.push(stats);
        }
        if !self.generator.params.all_finite()? {
            return Err(ModelError::NonFinite {
                what: "generator parameters".into(),
                step: self.steps as usize,
            });
        }
        Ok(history)
    }

    pub fn into_models(self) -> (Generator, Discriminator, ExtractorModel) {
        (self.generator, self.discriminator, self.extractor)
    }
}

/// Builds a trainer, runs it and returns the trained models with their history.
pub fn train_application(
    generator: Generator,
    discriminator: Discriminator,
    extractor: ExtractorModel,
    pairs: &[GanPair],
    config: GanTrainConfig,
    observer: &mut dyn GanObserver,
) -> Result<(Generator, Discriminator, ExtractorModel, Vec<GanEpochStats>)> {
    let mut trainer = GanTrainer::new(generator, discriminator, extractor, pairs, config)?;
    let history = trainer.train(observer)?;
    let (g, d, e) = trainer.into_models();
    Ok((g, d, e, history))
}

/// Lays out up to `max` rows of (target, warped reference, composite, output) as one image.
pub fn sample_grid(trainer: &GanTrainer, max: usize) -> Result<ImageTensor> {
    let idx: Vec<usize> = (0..trainer.len().min(max)).collect();
    let out = trainer.outputs(&idx)?.to_dtype(DType::F32)?;
    let b = trainer.batch(&idx)?;
    let comp = b.input.narrow(1, 7, 3)?.to_dtype(DType::F32)?;
    let cols = [
        b.target.to_dtype(DType::F32)?,
        b.warped.to_dtype(DType::F32)?,
        comp,
        out,
    ];
    let (_, _, h, w) = cols[0].dims4()?;
    let grid_w = cols.len() * w;
    let mut data = vec![0f32; idx.len() * h * grid_w * 3];
    for (ci, t) in cols.iter().enumerate() {
        for r in 0..idx.len() {
            let v: Vec<f32> = t.get(r)?.flatten_all()?.to_vec1()?;
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        let gy = r * h + y;
                        let gx = ci * w + x;
                        data[(gy * grid_w + gx) * 3 + c] = v[(c * h + y) * w + x].clamp(0.0, 1.0);
                    }
                }
            }
        }
    }
    Ok(ImageTensor::new(idx.len() * h, grid_w, data)?)
}
