use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use makeupbag_core::data::{load_manifest, DatasetManifest, Record};
use makeupbag_core::geometry::region_encoding;
use makeupbag_models::checkpoint::{
    load_extractor, save_discriminator, save_extractor, save_generator, write_history_csv,
};
use makeupbag_models::extractor::{
    train_extractor, ExtractorConfig, ExtractorModel, ExtractorTrainConfig, LabeledSample,
};
use makeupbag_models::gan::{
    sample_grid, Discriminator, DiscriminatorConfig, GanEpochStats, GanObserver, GanPair,
    GanTrainConfig, GanTrainer, Generator, GeneratorConfig, StepStats,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::cli::{TrainExtractorArgs, TrainGanArgs};
use crate::commands::{out_path, parse_weights};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorFile {
    pub model: ExtractorConfig,
    pub train: ExtractorTrainConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanFile {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: GanTrainConfig,
}

fn read_toml<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

/// Labelled samples with region encodings; every entry needs landmarks.
pub fn labeled_samples(manifest: &DatasetManifest) -> Result<Vec<LabeledSample>> {
    (0..manifest.len())
        .map(|i| {
            let r = Record::load(manifest, i)?;
            let lms = r
                .landmarks
                .as_ref()
                .with_context(|| format!("manifest entry {i} has no landmarks"))?;
            let regions = region_encoding(lms, r.image.height(), r.image.width())?;
            Ok(LabeledSample {
                image: r.image,
                regions,
                label: r.label,
                intensity: r.intensity,
            })
        })
        .collect()
}

pub fn train_extractor_cmd(a: &TrainExtractorArgs) -> Result<()> {
    let mut file: ExtractorFile = read_toml(a.config.as_deref())?;
    let t = &mut file.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.steps_per_epoch {
        t.steps_per_epoch = Some(v);
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
        file.model.seed = v;
    }
    if let Some(w) = &a.weights {
        t.weights = parse_weights(w)?;
    }
    let manifest = load_manifest(&a.manifest)?;
    let data = labeled_samples(&manifest)?;
    let mut model = match &a.resume {
        Some(p) => load_extractor(p)?,
        None => ExtractorModel::build(&file.model)?,
    };
    let weights = out_path(&a.out_dir, "extractor.safetensors")?;
    let history_path = a.out_dir.join("history.csv");
    let mut history = Vec::new();
    train_extractor(&mut model, &data, &file.train, &mut |m, s| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  accuracy {:.4}",
            s.epoch, s.loss, s.accuracy
        );
        history.push(s.clone());
        save_extractor(m, &weights)?;
        write_history_csv(&history_path, &history)
    })?;
    if history.is_empty() {
        save_extractor(&model, &weights)?;
    }
    println!("extractor: {}", weights.display());
    Ok(())
}

/// Pairs each makeup-free face with a makeup face, chosen by a seeded shuffle.
pub fn gan_pairs(manifest: &DatasetManifest, seed: u64) -> Result<Vec<GanPair>> {
    let mut targets = Vec::new();
    let mut refs = Vec::new();
    for i in 0..manifest.len() {
        let r = Record::load(manifest, i)?;
        let lms = r
            .landmarks
            .with_context(|| format!("manifest entry {i} has no landmarks"))?;
        if r.label == 0 {
            targets.push((r.image, lms));
        } else {
            refs.push((r.image, lms));
        }
    }
    if targets.is_empty() || refs.is_empty() {
        bail!("GAN training needs faces both with and without makeup");
    }
    let mut order: Vec<usize> = (0..refs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(targets
        .into_iter()
        .enumerate()
        .map(|(i, (target, target_landmarks))| {
            let (reference, reference_landmarks) = refs[order[i % order.len()]].clone();
            GanPair {
                target,
                target_landmarks,
                reference,
                reference_landmarks,
            }
        })
        .collect())
}

struct Writer {
    dir: PathBuf,
    sample_every: Option<usize>,
    history: Vec<GanEpochStats>,
}

impl GanObserver for Writer {
    fn on_step(&mut self, trainer: &GanTrainer, s: &StepStats) -> makeupbag_models::Result<()> {
        if let Some(n) = self.sample_every.filter(|n| *n > 0) {
            if s.step as usize % n == 0 {
                let dir = self.dir.join("samples");
                std::fs::create_dir_all(&dir)?;
                sample_grid(trainer, 4)?.save(dir.join(format!("step_{:06}.png", s.step)))?;
            }
        }
        Ok(())
    }

    fn on_epoch(
        &mut self,
        trainer: &GanTrainer,
        s: &GanEpochStats,
    ) -> makeupbag_models::Result<()> {
        eprintln!(
            "epoch {:>3}  d {:.5}  g {:.5}  rec {:.5}",
            s.epoch, s.d_loss, s.g_loss, s.rec_loss
        );
        self.history.push(s.clone());
        save_generator(&trainer.generator, &self.dir.join("generator.safetensors"))?;
        save_discriminator(
            &trainer.discriminator,
            &self.dir.join("discriminator.safetensors"),
            trainer.steps(),
        )?;
        if trainer.config.joint {
            save_extractor(&trainer.extractor, &self.dir.join("extractor.safetensors"))?;
        }
        write_history_csv(&self.dir.join("history.csv"), &self.history)
    }
}

pub fn train_gan_cmd(a: &TrainGanArgs) -> Result<()> {
    let mut file: GanFile = read_toml(a.config.as_deref())?;
    let t = &mut file.train;
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.max_steps {
        t.max_steps = Some(v);
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    t.joint |= a.joint;
    let manifest = load_manifest(&a.manifest)?;
    let pairs = gan_pairs(&manifest, file.train.seed)?;
    let extractor = load_extractor(&a.extractor)?;
    let generator = Generator::build(&file.generator)?;
    let discriminator = Discriminator::build(&file.discriminator)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let mut trainer = GanTrainer::new(generator, discriminator, extractor, &pairs, file.train)?;
    let mut writer = Writer {
        dir: a.out_dir.clone(),
        sample_every: a.sample_every,
        history: Vec::new(),
    };
    trainer.train(&mut writer)?;
    if writer.history.is_empty() {
        save_generator(&trainer.generator, &a.out_dir.join("generator.safetensors"))?;
    }
    println!(
        "generator: {}",
        a.out_dir.join("generator.safetensors").display()
    );
    Ok(())
}
