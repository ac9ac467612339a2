//! Face geometry: landmark sets, the reference-to-target warp and facial
//! region indicator layers.

mod backend;
mod landmarks;
pub(crate) mod polygon;
mod regions;
mod warp;

pub use crate::image::{Region, RegionSelection};
pub use backend::{FixtureBackend, HttpDetector, LandmarkBackend, DETECTOR_URL_ENV};
pub use landmarks::{LandmarkSet, Schema, IBUG68};
pub use polygon::{convex_hull, point_in_polygon, segment_distance};
pub use regions::{region_encoding, skin_mask, RegionEncoding};
pub use warp::{build_warp, WarpTransform};
