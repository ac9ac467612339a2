use std::path::Path;
use std::time::Duration;

use super::LandmarkSet;
use crate::error::{Error, Result};
use crate::image::{encode_png, ImageTensor};

/// Environment variable naming the external detector endpoint.
pub const DETECTOR_URL_ENV: &str = "MAKEUPBAG_DETECTOR_URL";

/// Source of facial landmarks. Implementations must tolerate concurrent calls.
pub trait LandmarkBackend: Send + Sync {
    fn detect(&self, img: &ImageTensor) -> Result<LandmarkSet>;
}

/// Returns stored landmarks verbatim.
#[derive(Clone, Debug)]
pub struct FixtureBackend {
    landmarks: LandmarkSet,
}

impl FixtureBackend {
    pub fn new(landmarks: LandmarkSet) -> Self {
        Self { landmarks }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(LandmarkSet::load(path)?))
    }
}

impl LandmarkBackend for FixtureBackend {
    fn detect(&self, img: &ImageTensor) -> Result<LandmarkSet> {
        if self.landmarks.is_empty() {
            return Err(Error::NoFace);
        }
        self.landmarks.check_bounds(img.height(), img.width())?;
        Ok(self.landmarks.clone())
    }
}

/// Client for an external detector: `POST <endpoint>` with a PNG body,
/// answered by landmark JSON (`{"schema": ..., "points": [[x, y], ...]}`).
/// A `404` or `422` response, or an empty point list, means no face.
pub struct HttpDetector {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpDetector {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            client,
        })
    }

    pub fn from_env() -> Result<Self> {
        let url = std::env::var(DETECTOR_URL_ENV)
            .map_err(|_| Error::BackendUnavailable(format!("{DETECTOR_URL_ENV} is not set")))?;
        Self::new(url, Duration::from_secs(30))
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl LandmarkBackend for HttpDetector {
    fn detect(&self, img: &ImageTensor) -> Result<LandmarkSet> {
        let body = encode_png(img)?;
        let resp = self
            .client
            .post(&self.endpoint)
            .header("content-type", "image/png")
            .body(body)
            .send()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 404 || status == 422 {
            return Err(Error::NoFace);
        }
        if !(200..300).contains(&status) {
            return Err(Error::BackendUnavailable(format!(
                "detector returned HTTP {status}"
            )));
        }
        let text = resp
            .text()
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        let set = LandmarkSet::from_json(&text)?;
        if set.is_empty() {
            return Err(Error::NoFace);
        }
        Ok(set)
    }
}
