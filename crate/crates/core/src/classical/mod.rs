//! Hand-crafted makeup detectors. Every method returns a hard `{0, 1}` mask.

mod chroma;
mod gmm;
mod residual;

pub use chroma::{chroma_deviation_mask, ChromaBands};
pub use gmm::{fit_skin_gmm, gmm_makeup_mask, GmmOptions, SkinColorModel};
pub use residual::{
    residual_mask, FnTranslator, PatchwiseTranslator, SkinToneTranslator, Translator,
};
