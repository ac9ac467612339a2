//! HTTP service backing the mask editor.

mod error;
mod routes;
pub mod session;

use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post};
use axum::Router;
use makeupbag_core::geometry::{HttpDetector, LandmarkBackend};
use makeupbag_models::checkpoint::{load_extractor, load_generator};
use makeupbag_models::extractor::ExtractorModel;
use makeupbag_models::gan::Generator;

pub use error::ServiceError;
pub use session::{SessionState, SessionStore, Status};

use crate::cli::ServeArgs;
use crate::config::ServiceConfig;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SessionStore>,
    pub extractor: Option<Arc<ExtractorModel>>,
    pub generator: Option<Arc<Generator>>,
    /// Used when a session is created without landmark files.
    pub detector: Option<Arc<dyn LandmarkBackend>>,
    pub timeout: Duration,
    pub max_upload: usize,
}

impl AppState {
    /// Loads the configured models and opens the session store.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self> {
        let extractor = cfg
            .extractor
            .as_ref()
            .map(|p| {
                load_extractor(p).with_context(|| format!("loading extractor {}", p.display()))
            })
            .transpose()?;
        let generator = cfg
            .generator
            .as_ref()
            .map(|p| {
                load_generator(p).with_context(|| format!("loading generator {}", p.display()))
            })
            .transpose()?;
        let detector = HttpDetector::from_env()
            .ok()
            .map(|d| Arc::new(d) as Arc<dyn LandmarkBackend>);
        let store = SessionStore::open(&cfg.sessions_dir)
            .with_context(|| format!("opening session store {}", cfg.sessions_dir.display()))?;
        Ok(Self {
            store: Arc::new(store),
            extractor: extractor.map(Arc::new),
            generator: generator.map(Arc::new),
            detector,
            timeout: cfg.timeout(),
            max_upload: cfg.max_upload,
        })
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.max_upload;
    Router::new()
        .route("/sessions", post(routes::create_session))
        .route("/sessions/{id}", get(routes::get_session))
        .route("/sessions/{id}/extract", post(routes::extract))
        .route(
            "/sessions/{id}/mask",
            get(routes::get_mask).put(routes::put_mask),
        )
        .route("/sessions/{id}/apply", post(routes::apply))
        .route("/sessions/{id}/result", get(routes::get_result))
        .route("/sessions/{id}/regions", get(routes::get_regions))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

pub fn serve_cmd(a: &ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::load(a.config.as_deref())?;
    if let Some(b) = &a.bind {
        cfg.bind = b.clone();
    }
    let state = AppState::from_config(&cfg)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&cfg.bind)
            .await
            .with_context(|| format!("binding {}", cfg.bind))?;
        tracing::info!("listening on {}", listener.local_addr()?);
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(state)).await?;
        Ok(())
    })
}
