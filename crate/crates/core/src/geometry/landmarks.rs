use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semantic index convention for a landmark set.
#[derive(Debug)]
pub struct Schema {
    pub id: &'static str,
    pub len: usize,
    pub outer_lips: Range<usize>,
    pub inner_lips: Range<usize>,
    pub eyes: [Range<usize>; 2],
    /// Index of the mirrored counterpart of every point under a horizontal flip.
    pub mirror: &'static [usize],
}

const IBUG68_MIRROR: [usize; 68] = [
    // jaw
    16, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1, 0, // brows
    26, 25, 24, 23, 22, 21, 20, 19, 18, 17, // nose bridge, nostrils
    27, 28, 29, 30, 35, 34, 33, 32, 31, // eyes
    45, 44, 43, 42, 47, 46, 39, 38, 37, 36, 41, 40, // outer lips
    54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55, // inner lips
    64, 63, 62, 61, 60, 67, 66, 65,
];

/// The common 68-point face convention (jaw 0–16, brows 17–26, nose 27–35,
/// eyes 36–47, lips 48–67), indexed left to right in image coordinates.
pub const IBUG68: Schema = Schema {
    id: "ibug68",
    len: 68,
    outer_lips: 48..60,
    inner_lips: 60..68,
    eyes: [36..42, 42..48],
    mirror: &IBUG68_MIRROR,
};

impl Schema {
    pub fn lookup(id: &str) -> Result<&'static Schema> {
        match id {
            "ibug68" => Ok(&IBUG68),
            other => Err(Error::SchemaMissing {
                schema: other.to_string(),
                what: "a known index convention".into(),
            }),
        }
    }
}

/// Ordered subpixel control points `(x, y)` plus their schema id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub schema: String,
    pub points: Vec<[f64; 2]>,
}

impl LandmarkSet {
    pub fn new(schema: impl Into<String>, points: Vec<[f64; 2]>) -> Self {
        Self {
            schema: schema.into(),
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Resolves the schema and checks the point count against it.
    pub fn schema_def(&self) -> Result<&'static Schema> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("landmark set is empty".into()));
        }
        let schema = Schema::lookup(&self.schema)?;
        if schema.len != self.points.len() {
            return Err(Error::SchemaMissing {
                schema: self.schema.clone(),
                what: format!("{} points (got {})", schema.len, self.points.len()),
            });
        }
        Ok(schema)
    }

    /// Fails unless every point lies within `[0, w-1] × [0, h-1]`.
    pub fn check_bounds(&self, height: usize, width: usize) -> Result<()> {
        let (mx, my) = ((width - 1) as f64, (height - 1) as f64);
        for (i, [x, y]) in self.points.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() || *x < 0.0 || *y < 0.0 || *x > mx || *y > my {
                return Err(Error::InvalidArgument(format!(
                    "landmark {i} at ({x}, {y}) outside {width}x{height} image"
                )));
            }
        }
        Ok(())
    }

    pub fn hull_points(&self, range: Range<usize>) -> Vec<[f64; 2]> {
        self.points[range].to_vec()
    }

    /// Mirrors `x ↦ width − 1 − x` and re-indexes through the schema's mirror
    /// permutation so semantic labels survive the flip.
    pub fn flip_horizontal(&self, width: usize) -> Result<Self> {
        let schema = self.schema_def()?;
        let w = (width - 1) as f64;
        let mut points = vec![[0.0; 2]; self.points.len()];
        for (i, [x, y]) in self.points.iter().enumerate() {
            points[schema.mirror[i]] = [w - x, *y];
        }
        Ok(Self {
            schema: self.schema.clone(),
            points,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        if let Some(i) = set
            .points
            .iter()
            .position(|p| !p[0].is_finite() || !p[1].is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "landmark {i} is not finite"
            )));
        }
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("landmarks serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            schema: self.schema.clone(),
            points: self.points.iter().map(|[x, y]| [x + dx, y + dy]).collect(),
        }
    }
}
