use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const BIND_ENV: &str = "MAKEUPBAG_BIND";
pub const SESSIONS_DIR_ENV: &str = "MAKEUPBAG_SESSIONS_DIR";
pub const EXTRACTOR_ENV: &str = "MAKEUPBAG_EXTRACTOR";
pub const GENERATOR_ENV: &str = "MAKEUPBAG_GENERATOR";
pub const TIMEOUT_ENV: &str = "MAKEUPBAG_TIMEOUT_SECS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub sessions_dir: PathBuf,
    pub extractor: Option<PathBuf>,
    pub generator: Option<PathBuf>,
    /// Per-request limit on inference work.
    pub timeout_secs: u64,
    /// Multipart upload limit in bytes.
    pub max_upload: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            sessions_dir: PathBuf::from("sessions"),
            extractor: None,
            generator: None,
            timeout_secs: 60,
            max_upload: 32 << 20,
        }
    }
}

impl ServiceConfig {
    /// Reads `path` (or defaults), then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: ServiceConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = get(BIND_ENV) {
            self.bind = v;
        }
        if let Some(v) = get(SESSIONS_DIR_ENV) {
            self.sessions_dir = v.into();
        }
        if let Some(v) = get(EXTRACTOR_ENV) {
            self.extractor = Some(v.into());
        }
        if let Some(v) = get(GENERATOR_ENV) {
            self.generator = Some(v.into());
        }
        if let Some(v) = get(TIMEOUT_ENV) {
            self.timeout_secs = v.parse().with_context(|| format!("{TIMEOUT_ENV}=`{v}`"))?;
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }
}
