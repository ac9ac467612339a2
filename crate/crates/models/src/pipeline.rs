//! The two inference stages as composable functions: extraction produces an
//! 8-bit-exact mask in target geometry, application consumes it.

use makeupbag_core::classical::{
    chroma_deviation_mask, fit_skin_gmm, gmm_makeup_mask, residual_mask, ChromaBands, GmmOptions,
    SkinColorModel, SkinToneTranslator, Translator,
};
use makeupbag_core::geometry::{build_warp, region_encoding};
use makeupbag_core::image::{alpha_composite, quantize};
use makeupbag_core::{AlphaMask, ImageTensor, LandmarkSet, Region, RegionEncoding};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::extractor::ExtractorModel;
use crate::gan::Generator;
use crate::tensor::{generator_input, tensor_image};

/// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
pub fn quantize_mask(mask: &AlphaMask) -> AlphaMask {
    AlphaMask::from_fn(mask.height(), mask.width(), |y, x| {
        quantize(mask.get(y, x)) as f32 / 255.0
    })
}

/// Where extraction runs relative to the warp.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractOn {
    /// On the reference already warped into target geometry.
    #[default]
    Warped,
    /// On the raw reference; the mask is warped afterwards.
    Reference,
}

pub enum MaskSource<'a> {
    Extractor(&'a ExtractorModel),
    /// Uses `model` if given, otherwise fits one on the image's own skin.
    Gmm {
        model: Option<&'a SkinColorModel>,
        options: GmmOptions,
    },
    Chroma(ChromaBands),
    Residual {
        translator: &'a dyn Translator,
        threshold: f32,
    },
    /// Residual against the image recoloured to its own mean skin tone.
    SkinResidual {
        threshold: f32,
    },
}

impl MaskSource<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            MaskSource::Extractor(_) => "bagnet",
            MaskSource::Gmm { .. } => "gmm",
            MaskSource::Chroma(_) => "chroma",
            MaskSource::Residual { .. } | MaskSource::SkinResidual { .. } => "residual",
        }
    }

    /// Mask of `img` whose landmarks are `lms`, zero outside the face area.
    pub fn mask(&self, img: &ImageTensor, lms: &LandmarkSet) -> Result<AlphaMask> {
        let enc = region_encoding(lms, img.height(), img.width())?;
        self.mask_with_regions(img, &enc)
    }

    pub fn mask_with_regions(&self, img: &ImageTensor, enc: &RegionEncoding) -> Result<AlphaMask> {
        let face = enc.face_area();
        let restrict = |m: AlphaMask| {
            AlphaMask::from_fn(m.height(), m.width(), |y, x| m.get(y, x) * face.get(y, x))
        };
        Ok(match self {
            MaskSource::Extractor(model) => restrict(model.extract_mask(img, enc)?),
            MaskSource::Gmm { model, options } => {
                let skin = enc.to_mask(Region::Skin);
                let fitted;
                let m = match model {
                    Some(m) => *m,
                    None => {
                        fitted = fit_skin_gmm(
                            std::slice::from_ref(img),
                            std::slice::from_ref(&skin),
                            options,
                        )?;
                        &fitted
                    }
                };
                restrict(gmm_makeup_mask(img, m, options.percentile)?)
            }
            MaskSource::Chroma(bands) => restrict(chroma_deviation_mask(
                img,
                &enc.to_mask(Region::Skin),
                *bands,
            )?),
            MaskSource::Residual {
                translator,
                threshold,
            } => restrict(residual_mask(img, *translator, *threshold)?),
            MaskSource::SkinResidual { threshold } => {
                let translator = SkinToneTranslator {
                    tone: mean_skin_tone(img, enc)?,
                };
                restrict(residual_mask(img, &translator, *threshold)?)
            }
        })
    }
}

/// Mean colour over the skin layer.
pub fn mean_skin_tone(img: &ImageTensor, enc: &RegionEncoding) -> Result<[f32; 3]> {
    let skin = enc.layer(Region::Skin);
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for (px, on) in img.data().chunks_exact(3).zip(skin) {
        if *on > 0 {
            for c in 0..3 {
                sum[c] += px[c] as f64;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(makeupbag_core::Error::InsufficientData("no skin pixels".into()).into());
    }
    Ok(sum.map(|v| (v / n as f64) as f32))
}

/// Everything the first stage produces for one target/reference pair.
#[derive(Clone, Debug)]
pub struct StageOne {
    pub warped: ImageTensor,
    pub regions: RegionEncoding,
    /// Quantized to 8 bits.
    pub mask: AlphaMask,
    pub composite: ImageTensor,
}

/// The reference warped into target geometry.
pub fn warp_reference(
    target: &ImageTensor,
    target_lms: &LandmarkSet,
    reference: &ImageTensor,
    reference_lms: &LandmarkSet,
) -> Result<ImageTensor> {
    let warp = build_warp(reference_lms, target_lms, reference.dims(), target.dims())?;
    Ok(warp.warp_image(reference)?)
}

/// Extracts the reference's makeup mask in target geometry.
pub fn extract_onto(
    source: &MaskSource<'_>,
    target: &ImageTensor,
    target_lms: &LandmarkSet,
    reference: &ImageTensor,
    reference_lms: &LandmarkSet,
    on: ExtractOn,
) -> Result<AlphaMask> {
    let mask = match on {
        ExtractOn::Warped => {
            let warped = warp_reference(target, target_lms, reference, reference_lms)?;
            source.mask(&warped, target_lms)?
        }
        ExtractOn::Reference => {
            let raw = source.mask(reference, reference_lms)?;
            build_warp(reference_lms, target_lms, reference.dims(), target.dims())?
                .warp_mask(&raw)?
        }
    };
    Ok(quantize_mask(&mask))
}

/// Warp, extract (unless `mask` is supplied) and composite.
pub fn stage_one(
    source: Option<&MaskSource<'_>>,
    mask: Option<&AlphaMask>,
    target: &ImageTensor,
    target_lms: &LandmarkSet,
    reference: &ImageTensor,
    reference_lms: &LandmarkSet,
    on: ExtractOn,
) -> Result<StageOne> {
    let warped = warp_reference(target, target_lms, reference, reference_lms)?;
    let regions = region_encoding(target_lms, target.height(), target.width())?;
    let mask = match (mask, source) {
        (Some(m), _) => quantize_mask(m),
        (None, Some(src)) => match on {
            ExtractOn::Warped => quantize_mask(&src.mask_with_regions(&warped, &regions)?),
            ExtractOn::Reference => {
                extract_onto(src, target, target_lms, reference, reference_lms, on)?
            }
        },
        (None, None) => {
            return Err(crate::error::ModelError::Config(
                "either a mask or a mask source is required".into(),
            ))
        }
    };
    let composite = alpha_composite(target, &warped, &mask)?;
    Ok(StageOne {
        warped,
        regions,
        mask,
        composite,
    })
}

/// Second stage. Without a generator the composite is returned unchanged.
pub fn apply_stage(
    generator: Option<&Generator>,
    target: &ImageTensor,
    s1: &StageOne,
) -> Result<ImageTensor> {
    match generator {
        None => Ok(s1.composite.clone()),
        Some(g) => {
            let x = generator_input(target, &s1.mask, &s1.warped, &s1.composite, g.dtype())?;
            tensor_image(&g.forward(&x)?)
        }
    }
}
