use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::params::{leaky_relu, Conv, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub scales: usize,
    /// Strided 4×4 conv layers per scale.
    pub depth: usize,
    pub width: usize,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            scales: 3,
            depth: 3,
            width: 16,
            seed: 1,
        }
    }
}

impl DiscriminatorConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.depth == 0 || self.width == 0 {
            return Err(ModelError::Config(
                "scales, depth and width must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Smallest image side every scale can still process.
    pub fn min_side(&self) -> usize {
        (1 << (self.scales - 1)) * (1 << self.depth)
    }
}

struct Critic {
    layers: Vec<Conv>,
    head: Conv,
}

impl Critic {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for l in &self.layers {
            h = leaky_relu(&l.forward(&h)?, 0.2)?;
        }
        self.head.forward(&h)
    }
}

/// Unconditional critic applied to the image at several resolutions.
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub params: ParamStore,
    critics: Vec<Critic>,
}

impl Discriminator {
    pub fn build(cfg: &DiscriminatorConfig) -> Result<Self> {
        Self::build_with_dtype(cfg, DType::F32)
    }

    pub fn build_with_dtype(cfg: &DiscriminatorConfig, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new(cfg.seed, dtype);
        let mut critics = Vec::with_capacity(cfg.scales);
        for s in 0..cfg.scales {
            let mut c = 3;
            let mut layers = Vec::with_capacity(cfg.depth);
            for l in 0..cfg.depth {
                let next = cfg.width << l;
                layers.push(Conv::new(
                    &mut ps,
                    &format!("scale{s}.conv{l}"),
                    (c, next, 4),
                    2,
                    1,
                    true,
                    1.0,
                )?);
                c = next;
            }
            let head = Conv::new(
                &mut ps,
                &format!("scale{s}.head"),
                (c, 1, 3),
                1,
                1,
                true,
                1.0,
            )?;
            critics.push(Critic { layers, head });
        }
        Ok(Self {
            config: cfg.clone(),
            params: ps,
            critics,
        })
    }

    /// One patch-score map per scale, finest first.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let (_, c, h, w) = x.dims4()?;
        let min = self.config.min_side();
        if c != 3 || h < min || w < min {
            return Err(ModelError::Undersized(format!(
                "discriminator needs 3x{min}x{min}, got {c}x{h}x{w}"
            )));
        }
        let mut outs = Vec::with_capacity(self.critics.len());
        let mut cur = x.clone();
        for (i, critic) in self.critics.iter().enumerate() {
            outs.push(critic.forward(&cur)?);
            if i + 1 < self.critics.len() {
                let (_, _, h, w) = cur.dims4()?;
                cur = cur
                    .narrow(2, 0, h - h % 2)?
                    .narrow(3, 0, w - w % 2)?
                    .avg_pool2d(2)?;
            }
        }
        Ok(outs)
    }
}
