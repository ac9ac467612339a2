use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Intensity};
use crate::error::{Error, Result};
use crate::geometry::LandmarkSet;
use crate::image::{AlphaMask, ImageTensor};

/// Relative sampling weight per intensity tag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OversampleWeights {
    pub none: f64,
    pub light: f64,
    pub mid: f64,
    pub heavy: f64,
}

impl Default for OversampleWeights {
    fn default() -> Self {
        Self {
            none: 1.0,
            light: 1.0,
            mid: 2.0,
            heavy: 3.0,
        }
    }
}

impl OversampleWeights {
    pub const UNIFORM: Self = Self {
        none: 1.0,
        light: 1.0,
        mid: 1.0,
        heavy: 1.0,
    };

    pub fn weight(&self, intensity: Intensity) -> f64 {
        match intensity {
            Intensity::None => self.none,
            Intensity::Light => self.light,
            Intensity::Mid => self.mid,
            Intensity::Heavy => self.heavy,
        }
    }

    /// Parses `none:light:mid:heavy`, e.g. `1:1:2:3`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<f64> = text
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad weights {text:?}: {e}")))?;
        match parts.as_slice() {
            [none, light, mid, heavy] => Ok(Self {
                none: *none,
                light: *light,
                mid: *mid,
                heavy: *heavy,
            }),
            _ => Err(Error::InvalidArgument(format!(
                "weights need four values none:light:mid:heavy, got {text:?}"
            ))),
        }
    }
}

/// Draws `count` manifest indices with probability ∝ weight(intensity).
pub fn sample_indices(
    manifest: &DatasetManifest,
    count: usize,
    rng: &mut impl Rng,
    weights: &OversampleWeights,
) -> Result<Vec<usize>> {
    let tags: Vec<Intensity> = manifest.entries().iter().map(|e| e.intensity).collect();
    sample_by_intensity(&tags, count, rng, weights)
}

/// Draws `count` indices into `tags` with probability ∝ weight(tag).
pub fn sample_by_intensity(
    tags: &[Intensity],
    count: usize,
    rng: &mut impl Rng,
    weights: &OversampleWeights,
) -> Result<Vec<usize>> {
    if tags.is_empty() {
        return Err(Error::InsufficientData(
            "cannot sample from an empty dataset".into(),
        ));
    }
    let w: Vec<f64> = tags.iter().map(|t| weights.weight(*t)).collect();
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "sampling weights must be finite and non-negative".into(),
        ));
    }
    let dist = WeightedIndex::new(&w).map_err(|_| {
        Error::InvalidArgument("sampling weights are all zero for this dataset".into())
    })?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// A loaded, possibly mirrored training example.
#[derive(Clone, Debug)]
pub struct Record {
    pub index: usize,
    pub image: ImageTensor,
    pub label: u8,
    pub intensity: Intensity,
    pub landmarks: Option<LandmarkSet>,
    pub gt_mask: Option<AlphaMask>,
    pub flipped: bool,
}

impl Record {
    pub fn load(manifest: &DatasetManifest, index: usize) -> Result<Self> {
        let e = manifest.entries().get(index).ok_or_else(|| {
            Error::InvalidArgument(format!("manifest index {index} out of range"))
        })?;
        let image = ImageTensor::load(manifest.resolve(&e.image))?;
        let landmarks = e
            .landmarks
            .as_ref()
            .map(|p| LandmarkSet::load(manifest.resolve(p)))
            .transpose()?;
        let gt_mask = e
            .gt_mask
            .as_ref()
            .map(|p| AlphaMask::load(manifest.resolve(p)))
            .transpose()?;
        Ok(Self {
            index,
            image,
            label: e.label,
            intensity: e.intensity,
            landmarks,
            gt_mask,
            flipped: false,
        })
    }

    /// Mirrors image, landmarks and mask together.
    pub fn flipped(&self) -> Result<Self> {
        let width = self.image.width();
        Ok(Self {
            index: self.index,
            image: self.image.flip_horizontal(),
            label: self.label,
            intensity: self.intensity,
            landmarks: self
                .landmarks
                .as_ref()
                .map(|l| l.flip_horizontal(width))
                .transpose()?,
            gt_mask: self.gt_mask.as_ref().map(AlphaMask::flip_horizontal),
            flipped: !self.flipped,
        })
    }
}

/// Weighted draw of `batch` records, each mirrored independently with `flip_prob`.
pub fn sample_batch(
    manifest: &DatasetManifest,
    batch: usize,
    rng: &mut impl Rng,
    weights: &OversampleWeights,
    flip_prob: f64,
) -> Result<Vec<Record>> {
    if !(0.0..=1.0).contains(&flip_prob) {
        return Err(Error::InvalidArgument(format!(
            "flip_prob {flip_prob} outside [0, 1]"
        )));
    }
    let indices = sample_indices(manifest, batch, rng, weights)?;
    indices
        .into_iter()
        .map(|i| {
            let rec = Record::load(manifest, i)?;
            if rng.random_bool(flip_prob) {
                rec.flipped()
            } else {
                Ok(rec)
            }
        })
        .collect()
}
