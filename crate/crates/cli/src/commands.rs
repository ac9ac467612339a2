use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use makeupbag_core::classical::{fit_skin_gmm, ChromaBands, GmmOptions, SkinColorModel};
use makeupbag_core::data::{
    load_manifest, synth_faces, write_synth_dataset, DatasetManifest, OversampleWeights, Record,
    SynthDistribution,
};
use makeupbag_core::eval::{compare_methods, EvalSample, Method};
use makeupbag_core::geometry::{region_encoding, HttpDetector, LandmarkBackend};
use makeupbag_core::image::{color_offset, mask_combine, MaskEntry};
use makeupbag_core::{AlphaMask, ImageTensor, LandmarkSet, Region, RegionSelection};
use makeupbag_models::checkpoint::{load_extractor, load_generator};
use makeupbag_models::extractor::ExtractorModel;
use makeupbag_models::pipeline::{
    apply_stage, extract_onto, quantize_mask, stage_one, ExtractOn, MaskSource, StageOne,
};

use crate::cli::{
    ApplyArgs, CombineArgs, Command, EvalArgs, ExtractArgs, ExtractOnArg, MaskArgs, MethodArg,
    PairArgs, RefineArgs, SynthArgs, TransferArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Extract(a) => extract(&a),
        Command::Apply(a) => apply(&a),
        Command::Transfer(a) => transfer(&a),
        Command::Combine(a) => combine(&a),
        Command::TrainExtractor(a) => crate::train::train_extractor_cmd(&a),
        Command::TrainGan(a) => crate::train::train_gan_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Synth(a) => synth(&a),
        Command::Serve(a) => crate::service::serve_cmd(&a),
    }
}

pub fn load_image(path: &Path) -> Result<ImageTensor> {
    ImageTensor::load(path).with_context(|| format!("reading image {}", path.display()))
}

/// Landmarks from a file, or from the detector named by the environment.
pub fn landmarks_for(path: Option<&Path>, img: &ImageTensor) -> Result<LandmarkSet> {
    match path {
        Some(p) => {
            LandmarkSet::load(p).with_context(|| format!("reading landmarks {}", p.display()))
        }
        None => {
            let detector = HttpDetector::from_env()
                .context("no landmark file given and no detector configured")?;
            Ok(detector.detect(img)?)
        }
    }
}

impl From<ExtractOnArg> for ExtractOn {
    fn from(v: ExtractOnArg) -> Self {
        match v {
            ExtractOnArg::Warped => ExtractOn::Warped,
            ExtractOnArg::Reference => ExtractOn::Reference,
        }
    }
}

/// Models and settings behind a [`MaskSource`].
pub struct MaskTools {
    pub method: MethodArg,
    pub extractor: Option<ExtractorModel>,
    pub gmm: Option<SkinColorModel>,
    pub gmm_options: GmmOptions,
    pub bands: ChromaBands,
    pub residual_threshold: f32,
    pub on: ExtractOn,
}

impl MaskTools {
    pub fn load(args: &MaskArgs) -> Result<Self> {
        let method = match (args.method, &args.model) {
            (Some(m), _) => m,
            (None, Some(_)) => MethodArg::Bagnet,
            (None, None) => bail!("pass --method or an extractor checkpoint via --model"),
        };
        let extractor = match (&args.model, method) {
            (Some(p), _) => Some(
                load_extractor(p).with_context(|| format!("loading extractor {}", p.display()))?,
            ),
            (None, MethodArg::Bagnet) => bail!("method bagnet needs --model"),
            (None, _) => None,
        };
        let gmm = args
            .gmm_model
            .as_ref()
            .map(|p| -> Result<SkinColorModel> {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                Ok(SkinColorModel::from_json(&text)?)
            })
            .transpose()?;
        Ok(Self {
            method,
            extractor,
            gmm,
            gmm_options: GmmOptions {
                percentile: args.percentile,
                ..GmmOptions::default()
            },
            bands: ChromaBands {
                hue: args.hue_band,
                saturation: args.saturation_band,
            },
            residual_threshold: args.residual_threshold,
            on: args.extract_on.into(),
        })
    }

    pub fn source_for(&self, method: MethodArg) -> Result<MaskSource<'_>> {
        Ok(match method {
            MethodArg::Bagnet => MaskSource::Extractor(
                self.extractor
                    .as_ref()
                    .ok_or_else(|| anyhow!("bagnet needs an extractor"))?,
            ),
            MethodArg::Gmm => MaskSource::Gmm {
                model: self.gmm.as_ref(),
                options: self.gmm_options.clone(),
            },
            MethodArg::Chroma => MaskSource::Chroma(self.bands),
            MethodArg::Residual => MaskSource::SkinResidual {
                threshold: self.residual_threshold,
            },
        })
    }

    pub fn source(&self) -> Result<MaskSource<'_>> {
        self.source_for(self.method)
    }
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let img = load_image(&a.image)?;
    let lms = landmarks_for(a.landmarks.as_deref(), &img)?;
    let tools = MaskTools::load(&a.mask)?;
    let src = tools.source()?;
    let mask = match &a.onto {
        Some(t) => {
            let target = load_image(t)?;
            let tl = landmarks_for(a.onto_landmarks.as_deref(), &target)?;
            extract_onto(&src, &target, &tl, &img, &lms, tools.on)?
        }
        None => quantize_mask(&src.mask(&img, &lms)?),
    };
    mask.save(&a.out_mask)
        .with_context(|| format!("writing {}", a.out_mask.display()))?;
    Ok(())
}

struct Pair {
    target: ImageTensor,
    target_lms: LandmarkSet,
    reference: ImageTensor,
    reference_lms: LandmarkSet,
}

fn load_pair(p: &PairArgs) -> Result<Pair> {
    let target = load_image(&p.target)?;
    let reference = load_image(&p.reference)?;
    Ok(Pair {
        target_lms: landmarks_for(p.target_landmarks.as_deref(), &target)?,
        reference_lms: landmarks_for(p.reference_landmarks.as_deref(), &reference)?,
        target,
        reference,
    })
}

fn refine(r: &RefineArgs, target: &ImageTensor, s1: &StageOne) -> Result<()> {
    let generator = match (&r.generator, r.bypass) {
        (_, true) => None,
        (Some(p), false) => {
            Some(load_generator(p).with_context(|| format!("loading generator {}", p.display()))?)
        }
        (None, false) => bail!("pass --generator or --bypass"),
    };
    let mut out = apply_stage(generator.as_ref(), target, s1)?;
    if let Some(off) = r.color_offset {
        out = color_offset(&out, &s1.mask, off)?;
    }
    out.save(&r.out)
        .with_context(|| format!("writing {}", r.out.display()))?;
    Ok(())
}

fn load_mask(path: &Path) -> Result<AlphaMask> {
    AlphaMask::load(path).with_context(|| format!("reading mask {}", path.display()))
}

fn apply(a: &ApplyArgs) -> Result<()> {
    let p = load_pair(&a.pair)?;
    let mask = a.mask.as_deref().map(load_mask).transpose()?;
    let tools = if mask.is_none() {
        Some(MaskTools::load(&a.mask_args)?)
    } else {
        None
    };
    let src = tools.as_ref().map(MaskTools::source).transpose()?;
    let on = tools.as_ref().map_or(ExtractOn::Warped, |t| t.on);
    let s1 = stage_one(
        src.as_ref(),
        mask.as_ref(),
        &p.target,
        &p.target_lms,
        &p.reference,
        &p.reference_lms,
        on,
    )?;
    refine(&a.refine, &p.target, &s1)
}

fn transfer(a: &TransferArgs) -> Result<()> {
    let p = load_pair(&a.pair)?;
    let mask = a.mask_override.as_deref().map(load_mask).transpose()?;
    let tools = if mask.is_none() {
        Some(MaskTools::load(&a.mask_args)?)
    } else {
        None
    };
    let src = tools.as_ref().map(MaskTools::source).transpose()?;
    let on = tools.as_ref().map_or(ExtractOn::Warped, |t| t.on);
    let s1 = stage_one(
        src.as_ref(),
        mask.as_ref(),
        &p.target,
        &p.target_lms,
        &p.reference,
        &p.reference_lms,
        on,
    )?;
    if let Some(path) = &a.save_mask {
        s1.mask
            .save(path)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    refine(&a.refine, &p.target, &s1)
}

fn combine(a: &CombineArgs) -> Result<()> {
    if a.masks.len() != a.regions.len() {
        bail!(
            "{} masks but {} --regions lists; pass one per mask",
            a.masks.len(),
            a.regions.len()
        );
    }
    let masks = a
        .masks
        .iter()
        .map(|p| load_mask(p))
        .collect::<Result<Vec<_>>>()?;
    let selections = a
        .regions
        .iter()
        .map(|r| RegionSelection::parse(r))
        .collect::<Result<Vec<_>, _>>()?;
    let lms = LandmarkSet::load(&a.landmarks)?;
    let (h, w) = masks[0].dims();
    let enc = region_encoding(&lms, h, w)?;
    let entries: Vec<MaskEntry<'_>> = masks
        .iter()
        .zip(&selections)
        .map(|(mask, selection)| MaskEntry {
            mask,
            selection,
            regions: &enc,
        })
        .collect();
    mask_combine(&entries)?.save(&a.out)?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let dist = SynthDistribution {
        size: a.size,
        makeup_fraction: a.makeup_fraction,
        ..Default::default()
    };
    let faces = synth_faces(&dist, a.n, a.seed)?;
    let manifest = write_synth_dataset(&faces, &a.out_dir)?;
    println!(
        "wrote {} faces to {}",
        manifest.len(),
        a.out_dir.join("manifest.jsonl").display()
    );
    Ok(())
}

/// Evaluation images (those with ground truth and landmarks), optionally only makeup ones.
pub fn eval_samples(manifest: &DatasetManifest, include_plain: bool) -> Result<Vec<EvalSample>> {
    let mut out = Vec::new();
    for (i, e) in manifest.entries().iter().enumerate() {
        if e.gt_mask.is_none() || e.landmarks.is_none() || (e.label == 0 && !include_plain) {
            continue;
        }
        let r = Record::load(manifest, i)?;
        out.push(EvalSample {
            image: r.image,
            gt_mask: r.gt_mask.expect("checked"),
            landmarks: r.landmarks,
        });
    }
    if out.is_empty() {
        bail!("manifest has no entries with ground-truth masks and landmarks");
    }
    Ok(out)
}

/// Fits the skin GMM on the skin layers of all makeup-free images.
pub fn fit_plain_skin_gmm(
    images: &[(ImageTensor, LandmarkSet)],
    opts: &GmmOptions,
) -> Result<SkinColorModel> {
    let mut imgs = Vec::new();
    let mut masks = Vec::new();
    for (img, lms) in images {
        masks.push(region_encoding(lms, img.height(), img.width())?.to_mask(Region::Skin));
        imgs.push(img.clone());
    }
    Ok(fit_skin_gmm(&imgs, &masks, opts)?)
}

fn plain_images(manifest: &DatasetManifest) -> Result<Vec<(ImageTensor, LandmarkSet)>> {
    let mut out = Vec::new();
    for (i, e) in manifest.entries().iter().enumerate() {
        if e.label == 0 && e.landmarks.is_some() {
            let r = Record::load(manifest, i)?;
            out.push((r.image, r.landmarks.expect("checked")));
        }
    }
    Ok(out)
}

fn parse_methods(list: &str) -> Result<Vec<MethodArg>> {
    use clap::ValueEnum;
    list.split(',')
        .map(|m| MethodArg::from_str(m.trim(), true).map_err(|_| anyhow!("unknown method `{m}`")))
        .collect()
}

fn eval(a: &EvalArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let methods = parse_methods(&a.methods)?;
    let samples = eval_samples(&manifest, a.include_plain)?;
    let mut mask_args = a.mask.clone();
    mask_args.method = Some(methods[0]);
    let mut tools = MaskTools::load(&mask_args)?;
    if tools.gmm.is_none() && methods.contains(&MethodArg::Gmm) {
        let plain = plain_images(&manifest)?;
        if !plain.is_empty() {
            tools.gmm = Some(fit_plain_skin_gmm(&plain, &tools.gmm_options)?);
        }
    }
    let sources = methods
        .iter()
        .map(|m| tools.source_for(*m))
        .collect::<Result<Vec<_>>>()?;
    let named: Vec<Method<'_>> = sources
        .iter()
        .map(|src| {
            Method::new(src.name(), move |s: &EvalSample| {
                let lms = s.landmarks.as_ref().expect("eval samples carry landmarks");
                src.mask(&s.image, lms)
                    .map_err(|e| makeupbag_core::Error::InvalidArgument(e.to_string()))
            })
        })
        .collect();
    let report = compare_methods(&samples, &named)?;
    let plot = report.write(&a.report)?;
    print!("{}", report.table());
    println!("report: {}  plot: {}", a.report.display(), plot.display());
    Ok(())
}

/// Output directory helper: creates it and returns `dir/name`.
pub fn out_path(dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(name))
}

/// Parses `1:1:2:3`.
pub fn parse_weights(text: &str) -> Result<OversampleWeights> {
    Ok(OversampleWeights::parse(text)?)
}
