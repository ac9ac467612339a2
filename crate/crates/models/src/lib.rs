//! Learned stages of the makeup pipeline on a CPU tensor backend.
//!
//! - [`extractor`]: patch-local classifier whose patch confidences form the mask.
//! - [`gan`]: coarse-to-fine refinement generator and multiscale critic.
//! - [`pipeline`]: warp, extract, composite and apply as separate functions.
//! - [`checkpoint`]: weight files with JSON sidecars.

pub mod checkpoint;
pub mod error;
pub mod extractor;
pub mod gan;
pub mod losses;
pub mod params;
pub mod pipeline;
pub mod tensor;

pub use error::{ModelError, Result};
