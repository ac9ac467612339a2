use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RegionEncoding;

/// Facial segment used for indicator layers and region-restricted edits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Lips,
    Eyes,
    Skin,
    Other,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Lips, Region::Eyes, Region::Skin, Region::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Lips => "lips",
            Region::Eyes => "eyes",
            Region::Skin => "skin",
            Region::Other => "other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lips" => Ok(Region::Lips),
            "eyes" => Ok(Region::Eyes),
            "skin" => Ok(Region::Skin),
            "other" => Ok(Region::Other),
            _ => Err(Error::UnknownRegion(s.to_string())),
        }
    }
}

/// A set of facial regions plus optional freehand pixels `(y, x)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSelection {
    pub regions: BTreeSet<Region>,
    #[serde(default)]
    pub freehand: BTreeSet<(usize, usize)>,
}

impl RegionSelection {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Self::of(&Region::ALL)
    }

    pub fn of(regions: &[Region]) -> Self {
        Self {
            regions: regions.iter().copied().collect(),
            freehand: BTreeSet::new(),
        }
    }

    /// Parses a comma-separated list such as `lips,eyes`; `all` selects every
    /// region. Repeated ids are rejected.
    pub fn parse(list: &str) -> Result<Self> {
        let mut regions = BTreeSet::new();
        for token in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if token.eq_ignore_ascii_case("all") {
                regions.extend(Region::ALL);
                continue;
            }
            let region: Region = token.parse()?;
            if !regions.insert(region) {
                return Err(Error::InvalidArgument(format!(
                    "region `{region}` listed twice"
                )));
            }
        }
        Ok(Self {
            regions,
            freehand: BTreeSet::new(),
        })
    }

    pub fn with_freehand(mut self, pixels: impl IntoIterator<Item = (usize, usize)>) -> Self {
        self.freehand.extend(pixels);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty() && self.freehand.is_empty()
    }

    /// Rasterizes the selection against `regions` into a per-pixel flag vector.
    pub fn rasterize(&self, regions: &RegionEncoding) -> Result<Vec<bool>> {
        let (h, w) = regions.dims();
        if let Some(&(y, x)) = self.freehand.iter().find(|(y, x)| *y >= h || *x >= w) {
            return Err(Error::InvalidArgument(format!(
                "freehand pixel ({y}, {x}) outside {h}x{w}"
            )));
        }
        let mut flags = vec![false; h * w];
        for region in &self.regions {
            for (flag, v) in flags.iter_mut().zip(regions.layer(*region)) {
                *flag |= *v != 0;
            }
        }
        for &(y, x) in &self.freehand {
            flags[y * w + x] = true;
        }
        Ok(flags)
    }
}
