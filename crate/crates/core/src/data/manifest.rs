use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Intensity;
use crate::error::{Error, Result};

/// One manifest row. Paths are relative to the manifest's directory unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: PathBuf,
    pub label: u8,
    pub intensity: Intensity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mask: Option<PathBuf>,
}

impl ManifestEntry {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.label > 1 {
            return Err(format!("label {} is not 0 or 1", self.label));
        }
        if (self.label == 0) != (self.intensity == Intensity::None) {
            return Err(format!(
                "label {} is inconsistent with intensity {:?}",
                self.label, self.intensity
            ));
        }
        Ok(())
    }
}

/// Validated, immutable list of entries plus the directory paths resolve against.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: PathBuf, entries: Vec<ManifestEntry>) -> Self {
        Self { root, entries }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        if rel.is_absolute() {
            rel.to_path_buf()
        } else {
            self.root.join(rel)
        }
    }

    /// Entries at `indices`, sharing this manifest's root.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            root: self.root.clone(),
            entries: indices.iter().map(|i| self.entries[*i].clone()).collect(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads a JSON-lines manifest; blank lines are skipped, every referenced
/// file must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: lineno,
            reason: e.to_string(),
        })?;
        entry.validate().map_err(|reason| Error::Manifest {
            line: lineno,
            reason,
        })?;
        let manifest = DatasetManifest::new(root.clone(), vec![]);
        let paths = std::iter::once(&entry.image)
            .chain(entry.landmarks.iter())
            .chain(entry.gt_mask.iter());
        for p in paths {
            let full = manifest.resolve(p);
            if !full.exists() {
                return Err(Error::Manifest {
                    line: lineno,
                    reason: format!("missing file {}", full.display()),
                });
            }
        }
        entries.push(entry);
    }
    Ok(DatasetManifest::new(root, entries))
}
