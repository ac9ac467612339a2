//! Named trainable parameters and the few layer primitives the networks use.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, Result};

/// Ordered parameter collection. Initialization draws from a seeded ChaCha
/// stream in creation order, so two stores built from the same seed are
/// bit-identical.
pub struct ParamStore {
    vars: Vec<(String, Var)>,
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            vars: Vec::new(),
            dtype,
            device: Device::Cpu,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn push(&mut self, name: String, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        if self.vars.iter().any(|(n, _)| *n == name) {
            return Err(ModelError::Config(format!("duplicate parameter `{name}`")));
        }
        let t = Tensor::from_vec(data, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.vars.push((name, var.clone()));
        Ok(var)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                if bound > 0.0 {
                    self.rng.random_range(-bound..bound)
                } else {
                    0.0
                }
            })
            .collect();
        self.push(name.into(), shape, data)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.push(name.into(), shape, vec![0.0; n])
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// All parameters flattened to f64 in creation order.
    pub fn flat_values(&self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for (_, v) in &self.vars {
            out.extend(
                v.as_tensor()
                    .flatten_all()?
                    .to_dtype(DType::F64)?
                    .to_vec1::<f64>()?,
            );
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> Result<bool> {
        Ok(self.flat_values()?.iter().all(|v| v.is_finite()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map: HashMap<String, Tensor> = self
            .vars
            .iter()
            .map(|(n, v)| (n.clone(), v.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    /// Overwrites every parameter from a safetensors file; names and shapes must match.
    pub fn load(&self, path: &Path) -> Result<()> {
        let map = candle_core::safetensors::load(path, &self.device)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        if map.len() != self.vars.len() {
            return Err(ModelError::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                map.len(),
                self.vars.len()
            )));
        }
        for (name, var) in &self.vars {
            let t = map
                .get(name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing tensor `{name}`")))?;
            if t.dims() != var.dims() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    /// Copies parameter values from another store with the same layout.
    pub fn copy_from(&self, other: &ParamStore) -> Result<()> {
        if other.vars.len() != self.vars.len() {
            return Err(ModelError::Config("parameter layouts differ".into()));
        }
        for ((na, a), (nb, b)) in self.vars.iter().zip(&other.vars) {
            if na != nb || a.dims() != b.dims() {
                return Err(ModelError::Config(format!(
                    "parameter `{na}` does not match `{nb}`"
                )));
            }
            a.set(&b.as_tensor().to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}

/// 2-D convolution with optional bias. `padding` is zero padding.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: Var,
    pub bias: Option<Var>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    /// He-uniform init scaled by `gain`.
    pub fn new(
        ps: &mut ParamStore,
        name: &str,
        (c_in, c_out, k): (usize, usize, usize),
        stride: usize,
        padding: usize,
        bias: bool,
        gain: f64,
    ) -> Result<Self> {
        let bound = gain * (6.0 / (c_in * k * k) as f64).sqrt();
        let weight = ps.uniform(format!("{name}.weight"), &[c_out, c_in, k, k], bound)?;
        let bias = if bias {
            Some(ps.zeros(format!("{name}.bias"), &[c_out])?)
        } else {
            None
        };
        Ok(Self {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.dims()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(self.weight.as_tensor(), self.padding, self.stride, 1, 1)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&b.as_tensor().reshape((1, b.dims()[0], 1, 1))?)?,
            None => y,
        })
    }
}

/// Stride-2 transposed 3×3 convolution that exactly doubles spatial size.
#[derive(Clone, Debug)]
pub struct UpConv {
    pub weight: Var,
    pub bias: Var,
}

impl UpConv {
    pub fn new(ps: &mut ParamStore, name: &str, c_in: usize, c_out: usize) -> Result<Self> {
        let bound = (6.0 / (c_in * 9) as f64).sqrt();
        Ok(Self {
            weight: ps.uniform(format!("{name}.weight"), &[c_in, c_out, 3, 3], bound)?,
            bias: ps.zeros(format!("{name}.bias"), &[c_out])?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv_transpose2d(self.weight.as_tensor(), 1, 1, 2, 1)?;
        Ok(y.broadcast_add(
            &self
                .bias
                .as_tensor()
                .reshape((1, self.bias.dims()[0], 1, 1))?,
        )?)
    }
}

/// Per-sample, per-channel normalization over the spatial dims.
pub fn instance_norm(x: &Tensor) -> Result<Tensor> {
    let mean = x.mean_keepdim((2, 3))?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim((2, 3))?;
    Ok(centered.broadcast_div(&(var + 1e-5)?.sqrt()?)?)
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Result<Tensor> {
    Ok(x.maximum(&(x * slope)?)?)
}
