//! Shared substrate for the makeup extraction/application toolkit.
//!
//! - [`image`]: RGB image and alpha mask types, raster I/O, compositing,
//!   mask algebra and Poisson blending.
//! - [`geometry`]: landmark sets, piecewise-affine warping and facial
//!   region encodings.
//! - [`classical`]: GMM, chroma-deviation and translation-residual mask
//!   baselines.
//! - [`data`]: dataset manifests, weighted sampling with flip augmentation
//!   and the synthetic face generator.
//! - [`eval`]: pooled ROC/AUC scoring and method comparison reports.

pub mod classical;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;

pub use error::{Error, Result};
pub use geometry::{LandmarkSet, Region, RegionEncoding, RegionSelection, WarpTransform};
pub use image::{AlphaMask, ImageTensor};
