use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Region layers appended to RGB.
pub const REGION_CHANNELS: usize = 4;

/// One residual stage. Its first block uses `kernel`/`stride`; the rest are 1×1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub width: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl StageConfig {
    pub fn new(width: usize, blocks: usize, kernel: usize, stride: usize) -> Self {
        Self {
            width,
            blocks,
            kernel,
            stride,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub input_channels: usize,
    pub stem_width: usize,
    pub stem_kernel: usize,
    pub stages: Vec<StageConfig>,
    /// Bottleneck reduction: the middle conv of a block has `width / expansion` channels.
    pub expansion: usize,
    /// Required receptive field of one output cell.
    pub receptive_field: usize,
    pub seed: u64,
}

impl Default for ExtractorConfig {
    /// Reduced-width trunk, receptive field 17, cell stride 8.
    fn default() -> Self {
        Self {
            input_channels: 3 + REGION_CHANNELS,
            stem_width: 24,
            stem_kernel: 3,
            stages: vec![
                StageConfig::new(32, 2, 3, 2),
                StageConfig::new(48, 2, 3, 2),
                StageConfig::new(64, 2, 3, 2),
                StageConfig::new(64, 1, 1, 1),
            ],
            expansion: 2,
            receptive_field: 17,
            seed: 0,
        }
    }
}

impl ExtractorConfig {
    /// Resnet-50 widths and depths (3, 4, 6, 3 blocks) on the same ledger.
    pub fn resnet50_scale() -> Self {
        Self {
            stem_width: 64,
            stages: vec![
                StageConfig::new(256, 3, 3, 2),
                StageConfig::new(512, 4, 3, 2),
                StageConfig::new(1024, 6, 3, 2),
                StageConfig::new(2048, 3, 1, 1),
            ],
            expansion: 4,
            ..Self::default()
        }
    }

    /// Cell stride 4: the last 3×3 block keeps resolution.
    pub fn stride4() -> Self {
        let mut cfg = Self::default();
        cfg.stages[2].stride = 1;
        cfg
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Kernel/stride ledger of every spatial layer in forward order.
    pub fn ledger(&self) -> Ledger {
        let mut layers = vec![
            ("stem.in".to_string(), 1, 1),
            ("stem.conv".to_string(), self.stem_kernel, 1),
        ];
        for (si, st) in self.stages.iter().enumerate() {
            for b in 0..st.blocks {
                let (k, s) = if b == 0 {
                    (st.kernel, st.stride)
                } else {
                    (1, 1)
                };
                layers.push((format!("stage{si}.block{b}"), k, s));
            }
        }
        layers.push(("head".to_string(), 1, 1));
        Ledger::from_layers(layers)
    }

    pub fn validate(&self) -> Result<Ledger> {
        if self.input_channels != 3 + REGION_CHANNELS {
            return Err(ModelError::Config(format!(
                "input_channels must be 3 + {REGION_CHANNELS} region layers, got {}",
                self.input_channels
            )));
        }
        if self.stem_width == 0 || self.expansion == 0 || self.stages.is_empty() {
            return Err(ModelError::Config("empty trunk".into()));
        }
        if self.stem_kernel % 2 == 0 {
            return Err(ModelError::Config("stem kernel must be odd".into()));
        }
        for (i, st) in self.stages.iter().enumerate() {
            if st.blocks == 0 || st.width == 0 || st.stride == 0 {
                return Err(ModelError::Config(format!(
                    "stage {i} has zero blocks, width or stride"
                )));
            }
            if st.kernel % 2 == 0 {
                return Err(ModelError::Config(format!("stage {i} kernel must be odd")));
            }
            if st.width / self.expansion == 0 {
                return Err(ModelError::Config(format!(
                    "stage {i} width below expansion"
                )));
            }
        }
        let ledger = self.ledger();
        if ledger.receptive_field != self.receptive_field {
            return Err(ModelError::Config(format!(
                "ledger receptive field {} differs from the required {}",
                ledger.receptive_field, self.receptive_field
            )));
        }
        Ok(ledger)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub layer: String,
    pub kernel: usize,
    pub stride: usize,
    /// Input-pixel distance between adjacent outputs of this layer's input.
    pub jump: usize,
    /// Receptive field after this layer.
    pub rf: usize,
}

/// Receptive-field arithmetic: `rf += (k − 1) · jump`, `jump *= stride`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub entries: Vec<LedgerEntry>,
    pub receptive_field: usize,
    /// Total stride between adjacent output cells.
    pub stride: usize,
}

impl Ledger {
    pub fn from_layers(layers: Vec<(String, usize, usize)>) -> Self {
        let (mut rf, mut jump) = (1usize, 1usize);
        let entries = layers
            .into_iter()
            .map(|(layer, kernel, stride)| {
                rf += (kernel - 1) * jump;
                let e = LedgerEntry {
                    layer,
                    kernel,
                    stride,
                    jump,
                    rf,
                };
                jump *= stride;
                e
            })
            .collect();
        Self {
            entries,
            receptive_field: rf,
            stride: jump,
        }
    }

    /// Output grid size for an input of `len` pixels, or `None` if smaller than the RF.
    pub fn grid_len(&self, len: usize) -> Option<usize> {
        let mut n = len;
        for e in &self.entries {
            if n < e.kernel {
                return None;
            }
            n = (n - e.kernel) / e.stride + 1;
        }
        Some(n)
    }

    /// Inclusive input window `[start, end]` of output cell `o`.
    pub fn window(&self, o: usize) -> (usize, usize) {
        (o * self.stride, o * self.stride + self.receptive_field - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_receptive_field_is_17() {
        let cfg = ExtractorConfig::default();
        let l = cfg.validate().unwrap();
        assert_eq!(l.receptive_field, 17);
        assert_eq!(l.stride, 8);
        assert_eq!(l.grid_len(17), Some(1));
        assert_eq!(l.grid_len(64), Some(6));
        assert_eq!(l.grid_len(16), None);
        assert_eq!(
            ExtractorConfig::resnet50_scale()
                .validate()
                .unwrap()
                .receptive_field,
            17
        );
        let s4 = ExtractorConfig::stride4().validate().unwrap();
        assert_eq!((s4.receptive_field, s4.stride), (17, 4));
        assert_eq!(s4.grid_len(64), Some(12));
    }

    #[test]
    fn extra_three_by_three_stage_is_rejected() {
        // after stage 2 the jump is 4: rf grows by (3 - 1) * 4 = 8
        let mut cfg = ExtractorConfig::default();
        cfg.stages.insert(2, StageConfig::new(48, 1, 3, 1));
        assert_eq!(cfg.ledger().receptive_field, 25);
        assert!(matches!(cfg.validate(), Err(ModelError::Config(_))));
        // appended at the very end the jump is 8: rf 33
        let mut cfg = ExtractorConfig::default();
        cfg.stages.push(StageConfig::new(64, 1, 3, 1));
        assert_eq!(cfg.ledger().receptive_field, 33);
    }

    #[test]
    fn channel_invariant() {
        let cfg = ExtractorConfig {
            input_channels: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
