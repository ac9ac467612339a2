use candle_core::{DType, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::params::{instance_norm, Conv, ParamStore, UpConv};

/// Channels fed to the generator: target, mask, warped reference, composite.
pub const GENERATOR_INPUT_CHANNELS: usize = 3 + 1 + 3 + 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub input_channels: usize,
    /// Width of the global path's first layer; it doubles at each downsample.
    pub base_width: usize,
    pub enhancer_width: usize,
    pub global_blocks: usize,
    pub enhancer_blocks: usize,
    /// Resolution ratio between enhancer and global path.
    pub upscale: usize,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            input_channels: GENERATOR_INPUT_CHANNELS,
            base_width: 16,
            enhancer_width: 8,
            global_blocks: 6,
            enhancer_blocks: 3,
            upscale: 4,
            seed: 0,
        }
    }
}

/// Downsamples inside the global path.
const GLOBAL_DOWNS: usize = 2;

impl GeneratorConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.global_blocks == 0 || self.enhancer_blocks == 0 {
            return Err(ModelError::Config(
                "residual block counts must be at least 1".into(),
            ));
        }
        if self.upscale < 2 || !self.upscale.is_power_of_two() {
            return Err(ModelError::Config(format!(
                "upscale {} is not a power of two ≥ 2",
                self.upscale
            )));
        }
        if self.base_width == 0 || self.enhancer_width == 0 || self.input_channels == 0 {
            return Err(ModelError::Config("zero width".into()));
        }
        Ok(())
    }

    /// Input sides are padded up to a multiple of this.
    pub fn granularity(&self) -> usize {
        self.upscale << GLOBAL_DOWNS
    }
}

struct ResBlock {
    a: Conv,
    b: Conv,
}

impl ResBlock {
    fn new(ps: &mut ParamStore, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            a: Conv::new(ps, &format!("{name}.a"), (c, c, 3), 1, 1, true, 1.0)?,
            b: Conv::new(ps, &format!("{name}.b"), (c, c, 3), 1, 1, true, 1.0)?,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = instance_norm(&self.a.forward(x)?)?.relu()?;
        let h = instance_norm(&self.b.forward(&h)?)?;
        Ok((x + h)?)
    }
}

fn norm_relu(c: &Conv, x: &Tensor) -> Result<Tensor> {
    Ok(instance_norm(&c.forward(x)?)?.relu()?)
}

fn up_norm_relu(c: &UpConv, x: &Tensor) -> Result<Tensor> {
    Ok(instance_norm(&c.forward(x)?)?.relu()?)
}

/// Spatial sizes seen inside one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorTrace {
    /// Padded input `(H, W)`.
    pub input: (usize, usize),
    /// Global-path output features.
    pub global: (usize, usize),
    /// Enhancer front-end features summed with the global output.
    pub enhancer: (usize, usize),
}

/// Coarse-to-fine generator: a global path on the `1/upscale` image whose
/// output features are added to the local enhancer's front-end features.
pub struct Generator {
    pub config: GeneratorConfig,
    pub params: ParamStore,
    pub steps: u64,
    g_in: Conv,
    g_down: Vec<Conv>,
    g_blocks: Vec<ResBlock>,
    g_up: Vec<UpConv>,
    e_in: Conv,
    e_down: Vec<Conv>,
    e_blocks: Vec<ResBlock>,
    e_up: Vec<UpConv>,
    out: Conv,
}

impl Generator {
    pub fn build(cfg: &GeneratorConfig) -> Result<Self> {
        Self::build_with_dtype(cfg, DType::F32)
    }

    pub fn build_with_dtype(cfg: &GeneratorConfig, dtype: DType) -> Result<Self> {
        cfg.validate()?;
        let mut ps = ParamStore::new(cfg.seed, dtype);
        let b = cfg.base_width;
        let g_in = Conv::new(
            &mut ps,
            "global.in",
            (cfg.input_channels, b, 7),
            1,
            3,
            true,
            1.0,
        )?;
        let mut c = b;
        let mut g_down = Vec::new();
        for i in 0..GLOBAL_DOWNS {
            g_down.push(Conv::new(
                &mut ps,
                &format!("global.down{i}"),
                (c, 2 * c, 3),
                2,
                1,
                true,
                1.0,
            )?);
            c *= 2;
        }
        let g_blocks = (0..cfg.global_blocks)
            .map(|i| ResBlock::new(&mut ps, &format!("global.res{i}"), c))
            .collect::<Result<Vec<_>>>()?;
        let mut g_up = Vec::new();
        for i in 0..GLOBAL_DOWNS {
            g_up.push(UpConv::new(&mut ps, &format!("global.up{i}"), c, c / 2)?);
            c /= 2;
        }

        let levels = cfg.upscale.trailing_zeros() as usize;
        let mut e = cfg.enhancer_width;
        let e_in = Conv::new(
            &mut ps,
            "enhancer.in",
            (cfg.input_channels, e, 7),
            1,
            3,
            true,
            1.0,
        )?;
        let mut e_down = Vec::new();
        let mut widths = vec![e];
        for i in 0..levels {
            let next = if i + 1 == levels { b } else { 2 * e };
            e_down.push(Conv::new(
                &mut ps,
                &format!("enhancer.down{i}"),
                (e, next, 3),
                2,
                1,
                true,
                1.0,
            )?);
            e = next;
            widths.push(e);
        }
        let e_blocks = (0..cfg.enhancer_blocks)
            .map(|i| ResBlock::new(&mut ps, &format!("enhancer.res{i}"), b))
            .collect::<Result<Vec<_>>>()?;
        let mut e_up = Vec::new();
        for i in 0..levels {
            let (from, to) = (widths[levels - i], widths[levels - i - 1]);
            e_up.push(UpConv::new(&mut ps, &format!("enhancer.up{i}"), from, to)?);
        }
        let out = Conv::new(&mut ps, "out", (cfg.enhancer_width, 3, 7), 1, 3, true, 1.0)?;
        Ok(Self {
            config: cfg.clone(),
            params: ps,
            steps: 0,
            g_in,
            g_down,
            g_blocks,
            g_up,
            e_in,
            e_down,
            e_blocks,
            e_up,
            out,
        })
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    /// Maps `(N, C, H, W)` inputs to `(N, 3, H, W)` images in `[0, 1]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_traced(x)?.0)
    }

    pub fn forward_traced(&self, x: &Tensor) -> Result<(Tensor, GeneratorTrace)> {
        let (_, c, h, w) = x.dims4()?;
        if c != self.config.input_channels {
            return Err(ModelError::Config(format!(
                "generator expects {} channels, got {c}",
                self.config.input_channels
            )));
        }
        let g = self.config.granularity();
        let (ph, pw) = (h.div_ceil(g) * g, w.div_ceil(g) * g);
        let padded = x.pad_with_same(2, 0, ph - h)?.pad_with_same(3, 0, pw - w)?;

        let coarse = padded.avg_pool2d(self.config.upscale)?;
        let mut gf = norm_relu(&self.g_in, &coarse)?;
        for d in &self.g_down {
            gf = norm_relu(d, &gf)?;
        }
        for r in &self.g_blocks {
            gf = r.forward(&gf)?;
        }
        for u in &self.g_up {
            gf = up_norm_relu(u, &gf)?;
        }

        let mut ef = norm_relu(&self.e_in, &padded)?;
        for d in &self.e_down {
            ef = norm_relu(d, &ef)?;
        }
        let trace = GeneratorTrace {
            input: (ph, pw),
            global: (gf.dims()[2], gf.dims()[3]),
            enhancer: (ef.dims()[2], ef.dims()[3]),
        };
        let mut f = (ef + gf)?;
        for r in &self.e_blocks {
            f = r.forward(&f)?;
        }
        for u in &self.e_up {
            f = up_norm_relu(u, &f)?;
        }
        let y = ((self.out.forward(&f)?.tanh()? + 1.0)? * 0.5)?;
        Ok((y.narrow(2, 0, h)?.narrow(3, 0, w)?, trace))
    }

    /// Zeroes the output convolution so every pixel reads 0.5.
    pub fn zero_output_layer(&self) -> Result<()> {
        self.out
            .weight
            .set(&self.out.weight.as_tensor().zeros_like()?)?;
        if let Some(b) = &self.out.bias {
            b.set(&b.as_tensor().zeros_like()?)?;
        }
        Ok(())
    }

    pub fn global_block_count(&self) -> usize {
        self.g_blocks.len()
    }

    pub fn enhancer_block_count(&self) -> usize {
        self.e_blocks.len()
    }
}
