//! File-backed session store: one directory per session holding a
//! `state.json`, the uploaded images and landmarks, and append-only mask
//! and result versions.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use makeupbag_core::image::decode_mask;
use makeupbag_core::{AlphaMask, ImageTensor, LandmarkSet};
use serde::{Deserialize, Serialize};

use super::error::ServiceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Created,
    Extracted,
    Edited,
    Applied,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskVersion {
    pub version: u32,
    /// Extraction method, or `"upload"`.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub status: Status,
    pub height: usize,
    pub width: usize,
    pub masks: Vec<MaskVersion>,
    pub results: u32,
}

impl SessionState {
    pub fn current_mask(&self) -> Option<&MaskVersion> {
        self.masks.last()
    }
}

/// A loaded session. Cheap fields only; images are read on demand.
pub struct Session {
    pub dir: PathBuf,
    pub state: SessionState,
}

impl Session {
    pub fn target(&self) -> Result<ImageTensor, ServiceError> {
        Ok(ImageTensor::load(self.dir.join("target.png"))?)
    }

    pub fn reference(&self) -> Result<ImageTensor, ServiceError> {
        Ok(ImageTensor::load(self.dir.join("reference.png"))?)
    }

    pub fn target_landmarks(&self) -> Result<LandmarkSet, ServiceError> {
        Ok(LandmarkSet::load(self.dir.join("target_landmarks.json"))?)
    }

    pub fn reference_landmarks(&self) -> Result<LandmarkSet, ServiceError> {
        Ok(LandmarkSet::load(
            self.dir.join("reference_landmarks.json"),
        )?)
    }

    fn mask_path(&self, version: u32) -> PathBuf {
        self.dir.join("masks").join(format!("v{version:04}.png"))
    }

    fn result_path(&self, version: u32) -> PathBuf {
        self.dir.join("results").join(format!("v{version:04}.png"))
    }

    pub fn mask_bytes(&self) -> Result<Vec<u8>, ServiceError> {
        let v = self
            .state
            .current_mask()
            .ok_or_else(|| ServiceError::Conflict("session has no mask yet".into()))?;
        Ok(std::fs::read(self.mask_path(v.version))?)
    }

    pub fn mask(&self) -> Result<AlphaMask, ServiceError> {
        Ok(decode_mask(&self.mask_bytes()?)?)
    }

    /// Appends a mask version; the bytes are stored as given.
    pub fn push_mask(
        &mut self,
        bytes: &[u8],
        source: &str,
        status: Status,
    ) -> Result<u32, ServiceError> {
        let version = self.state.masks.len() as u32 + 1;
        write_new(&self.mask_path(version), bytes)?;
        self.state.masks.push(MaskVersion {
            version,
            source: source.into(),
        });
        self.state.status = status;
        self.save()?;
        Ok(version)
    }

    pub fn push_result(&mut self, png: &[u8]) -> Result<u32, ServiceError> {
        let version = self.state.results + 1;
        write_new(&self.result_path(version), png)?;
        self.state.results = version;
        self.state.status = Status::Applied;
        self.save()?;
        Ok(version)
    }

    pub fn result_bytes(&self) -> Result<Vec<u8>, ServiceError> {
        if self.state.results == 0 {
            return Err(ServiceError::Conflict("session has no result yet".into()));
        }
        Ok(std::fs::read(self.result_path(self.state.results))?)
    }

    fn save(&self) -> Result<(), ServiceError> {
        let tmp = self.dir.join("state.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&self.state)?)?;
        std::fs::rename(tmp, self.dir.join("state.json"))?;
        Ok(())
    }
}

fn write_new(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes)
}

/// Everything needed to create a session.
pub struct NewSession<'a> {
    pub target: &'a ImageTensor,
    pub reference: &'a ImageTensor,
    pub target_landmarks: &'a LandmarkSet,
    pub reference_landmarks: &'a LandmarkSet,
}

pub struct SessionStore {
    root: PathBuf,
    next: Mutex<u64>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl SessionStore {
    /// Opens (creating if needed) `root`; ids continue after the largest present.
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        let mut max = 0;
        for entry in std::fs::read_dir(&root)? {
            if let Some(n) = entry?
                .file_name()
                .to_str()
                .and_then(|s| s.parse::<u64>().ok())
            {
                max = max.max(n);
            }
        }
        Ok(Self {
            root,
            next: Mutex::new(max + 1),
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Lock serializing operations on one session.
    pub fn lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .expect("lock table poisoned")
            .entry(id.to_string())
            .or_default()
            .clone()
    }

    fn dir(&self, id: &str) -> Result<PathBuf, ServiceError> {
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ServiceError::NotFound(id.into()));
        }
        Ok(self.root.join(id))
    }

    pub fn create(&self, s: NewSession<'_>) -> Result<SessionState, ServiceError> {
        let id = {
            let mut next = self.next.lock().expect("id counter poisoned");
            let id = format!("{:06}", *next);
            *next += 1;
            id
        };
        let dir = self.root.join(&id);
        std::fs::create_dir_all(&dir)?;
        s.target.save(dir.join("target.png"))?;
        s.reference.save(dir.join("reference.png"))?;
        s.target_landmarks.save(dir.join("target_landmarks.json"))?;
        s.reference_landmarks
            .save(dir.join("reference_landmarks.json"))?;
        let session = Session {
            dir,
            state: SessionState {
                id,
                status: Status::Created,
                height: s.target.height(),
                width: s.target.width(),
                masks: Vec::new(),
                results: 0,
            },
        };
        session.save()?;
        Ok(session.state)
    }

    pub fn get(&self, id: &str) -> Result<Session, ServiceError> {
        let dir = self.dir(id)?;
        let text = match std::fs::read(dir.join("state.json")) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(ServiceError::NotFound(id.into()))
            }
            Err(e) => return Err(e.into()),
        };
        Ok(Session {
            dir,
            state: serde_json::from_slice(&text)?,
        })
    }
}
