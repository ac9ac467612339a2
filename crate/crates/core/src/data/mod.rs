//! Datasets: JSON-lines manifests, intensity-weighted sampling with flip
//! augmentation, and the synthetic face generator.

mod manifest;
mod sampling;
pub mod synth;

use serde::{Deserialize, Serialize};

pub use manifest::{load_manifest, DatasetManifest, ManifestEntry};
pub use sampling::{sample_batch, sample_by_intensity, sample_indices, OversampleWeights, Record};
pub use synth::{synth_faces, write_synth_dataset, SynthDistribution, SynthFace, SynthFaceSpec};

/// Makeup strength tag. `None` is reserved for label 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    None,
    Light,
    Mid,
    Heavy,
}

impl Intensity {
    pub const ALL: [Intensity; 4] = [
        Intensity::None,
        Intensity::Light,
        Intensity::Mid,
        Intensity::Heavy,
    ];

    pub fn label(self) -> u8 {
        (self != Intensity::None) as u8
    }
}
