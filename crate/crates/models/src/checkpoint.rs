//! Versioned checkpoints: a safetensors weight file plus a JSON sidecar
//! holding the config, seed, step count and (for extractors) the RF ledger.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::extractor::{ExtractorConfig, ExtractorModel, Ledger};
use crate::gan::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::params::ParamStore;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar<C> {
    pub format_version: u32,
    pub kind: String,
    pub config: C,
    pub seed: u64,
    pub steps: u64,
    pub parameters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger: Option<Ledger>,
}

/// `model.safetensors` → `model.json`.
pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension("json")
}

fn save<C: Serialize>(weights: &Path, params: &ParamStore, sidecar: &Sidecar<C>) -> Result<()> {
    if let Some(dir) = weights.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    params.save(weights)?;
    std::fs::write(
        sidecar_path(weights),
        serde_json::to_string_pretty(sidecar)?,
    )?;
    Ok(())
}

pub fn read_sidecar<C: DeserializeOwned>(weights: &Path, kind: &str) -> Result<Sidecar<C>> {
    let path = sidecar_path(weights);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    let sc: Sidecar<C> = serde_json::from_str(&text)
        .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    if sc.format_version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            sc.format_version
        )));
    }
    if sc.kind != kind {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint holds a {}, expected a {kind}",
            sc.kind
        )));
    }
    Ok(sc)
}

pub fn save_extractor(model: &ExtractorModel, weights: &Path) -> Result<()> {
    let sc = Sidecar {
        format_version: FORMAT_VERSION,
        kind: "extractor".into(),
        config: model.config.clone(),
        seed: model.config.seed,
        steps: model.steps,
        parameters: model.params.parameter_count(),
        ledger: Some(model.ledger.clone()),
    };
    save(weights, &model.params, &sc)
}

pub fn load_extractor(weights: &Path) -> Result<ExtractorModel> {
    let sc: Sidecar<ExtractorConfig> = read_sidecar(weights, "extractor")?;
    let mut model = ExtractorModel::build(&sc.config)?;
    if sc.ledger.as_ref().is_some_and(|l| *l != model.ledger) {
        return Err(ModelError::Checkpoint(
            "stored ledger disagrees with the config".into(),
        ));
    }
    model.params.load(weights)?;
    model.steps = sc.steps;
    Ok(model)
}

pub fn save_generator(model: &Generator, weights: &Path) -> Result<()> {
    let sc = Sidecar {
        format_version: FORMAT_VERSION,
        kind: "generator".into(),
        config: model.config.clone(),
        seed: model.config.seed,
        steps: model.steps,
        parameters: model.params.parameter_count(),
        ledger: None,
    };
    save(weights, &model.params, &sc)
}

pub fn load_generator(weights: &Path) -> Result<Generator> {
    let sc: Sidecar<GeneratorConfig> = read_sidecar(weights, "generator")?;
    let mut model = Generator::build(&sc.config)?;
    model.params.load(weights)?;
    model.steps = sc.steps;
    Ok(model)
}

pub fn save_discriminator(model: &Discriminator, weights: &Path, steps: u64) -> Result<()> {
    let sc = Sidecar {
        format_version: FORMAT_VERSION,
        kind: "discriminator".into(),
        config: model.config.clone(),
        seed: model.config.seed,
        steps,
        parameters: model.params.parameter_count(),
        ledger: None,
    };
    save(weights, &model.params, &sc)
}

pub fn load_discriminator(weights: &Path) -> Result<Discriminator> {
    let sc: Sidecar<DiscriminatorConfig> = read_sidecar(weights, "discriminator")?;
    let model = Discriminator::build(&sc.config)?;
    model.params.load(weights)?;
    Ok(model)
}

/// Writes per-epoch rows as CSV with a header.
pub fn write_history_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
