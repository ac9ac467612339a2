use super::polygon::{convex_hull, rasterize_polygon};
use super::LandmarkSet;
use crate::error::{Error, Result};
use crate::image::{AlphaMask, ImageTensor, Region};

/// Lips and face hulls are grown by half a pixel diagonal so every pixel
/// containing a contour landmark is inside its layer.
const CONTOUR_MARGIN: f64 = 0.75;

/// Eye layer band, as a fraction of the distance between eye centers.
pub const EYE_BAND_FRACTION: f64 = 0.15;

/// Four binary indicator layers (lips, eyes, skin, other), each row-major H×W.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionEncoding {
    height: usize,
    width: usize,
    layers: [Vec<u8>; 4],
}

impl RegionEncoding {
    pub fn from_layers(height: usize, width: usize, layers: [Vec<u8>; 4]) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("empty region encoding".into()));
        }
        for layer in &layers {
            if layer.len() != height * width {
                return Err(Error::InvalidArgument("region layer size mismatch".into()));
            }
            if layer.iter().any(|v| *v > 1) {
                return Err(Error::InvalidArgument(
                    "region layers must be binary".into(),
                ));
            }
        }
        Ok(Self {
            height,
            width,
            layers,
        })
    }

    /// Mutually exclusive encoding from one label per pixel.
    pub fn from_labels(height: usize, width: usize, labels: &[Region]) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::InvalidArgument("label count mismatch".into()));
        }
        let mut layers: [Vec<u8>; 4] = std::array::from_fn(|_| vec![0u8; height * width]);
        for (i, r) in labels.iter().enumerate() {
            layers[r.index()][i] = 1;
        }
        Self::from_layers(height, width, layers)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn layer(&self, region: Region) -> &[u8] {
        &self.layers[region.index()]
    }

    #[inline]
    pub fn contains(&self, region: Region, y: usize, x: usize) -> bool {
        self.layers[region.index()][y * self.width + x] != 0
    }

    pub fn to_mask(&self, region: Region) -> AlphaMask {
        AlphaMask::from_fn(self.height, self.width, |y, x| {
            self.contains(region, y, x) as u8 as f32
        })
    }

    /// Union of lips, eyes and skin.
    pub fn face_area(&self) -> AlphaMask {
        AlphaMask::from_fn(self.height, self.width, |y, x| {
            (!self.contains(Region::Other, y, x)) as u8 as f32
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        let layers = self.layers.clone().map(|layer| {
            let mut out = layer.clone();
            for row in out.chunks_exact_mut(w) {
                row.reverse();
            }
            out
        });
        Self {
            height: self.height,
            width: self.width,
            layers,
        }
    }

    /// Layers as `4 × H × W` floats, the extractor's indicator channels.
    pub fn to_planar(&self) -> Vec<f32> {
        self.layers
            .iter()
            .flat_map(|l| l.iter().map(|v| *v as f32))
            .collect()
    }
}

fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p[0], b + p[1]));
    [sx / n, sy / n]
}

/// Rasterizes lips, (banded) eyes and the face hull from landmarks. Lips take
/// precedence over eyes, eyes over skin; everything outside the face is
/// `other`.
pub fn region_encoding(lms: &LandmarkSet, height: usize, width: usize) -> Result<RegionEncoding> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("empty image".into()));
    }
    let schema = lms.schema_def()?;
    let lips_poly = lms.hull_points(schema.outer_lips.clone());
    let eyes: Vec<Vec<[f64; 2]>> = schema
        .eyes
        .iter()
        .map(|r| lms.hull_points(r.clone()))
        .collect();
    let inter_eye = {
        let a = centroid(&eyes[0]);
        let b = centroid(&eyes[1]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    };
    let band = (EYE_BAND_FRACTION * inter_eye).max(CONTOUR_MARGIN);

    let lips = rasterize_polygon(&lips_poly, CONTOUR_MARGIN, height, width);
    let mut eye_flags = vec![false; height * width];
    for eye in &eyes {
        let hull = convex_hull(eye);
        for (f, v) in eye_flags
            .iter_mut()
            .zip(rasterize_polygon(&hull, band, height, width))
        {
            *f |= v;
        }
    }
    let face = rasterize_polygon(&convex_hull(&lms.points), CONTOUR_MARGIN, height, width);

    let labels: Vec<Region> = (0..height * width)
        .map(|i| {
            if lips[i] {
                Region::Lips
            } else if eye_flags[i] {
                Region::Eyes
            } else if face[i] {
                Region::Skin
            } else {
                Region::Other
            }
        })
        .collect();
    RegionEncoding::from_labels(height, width, &labels)
}

/// Binary skin mask: the skin layer of [`region_encoding`].
pub fn skin_mask(img: &ImageTensor, lms: &LandmarkSet) -> Result<AlphaMask> {
    let enc = region_encoding(lms, img.height(), img.width())?;
    Ok(enc.to_mask(Region::Skin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{FaceGeometry, SynthFaceSpec};
    use crate::geometry::point_in_polygon;

    fn face(size: usize, seed: u64) -> (LandmarkSet, FaceGeometry) {
        let spec = SynthFaceSpec::plain(size, seed);
        let geo = spec.geometry();
        (geo.landmarks(), geo)
    }

    #[test]
    fn layers_partition_the_image() {
        let (lms, _) = face(64, 3);
        let enc = region_encoding(&lms, 64, 64).unwrap();
        for i in 0..64 * 64 {
            let sum: u8 = Region::ALL.iter().map(|r| enc.layer(*r)[i]).sum();
            assert_eq!(sum, 1);
        }
    }

    #[test]
    fn lip_landmark_pixels_are_lips() {
        for seed in 0..5 {
            let (lms, _) = face(64, seed);
            let enc = region_encoding(&lms, 64, 64).unwrap();
            let outer = &lms.points[48..60];
            for p in outer {
                let (x, y) = (p[0].round() as usize, p[1].round() as usize);
                assert!(
                    enc.contains(Region::Lips, y, x),
                    "seed {seed} landmark {p:?}"
                );
            }
            // interior sanity: the polygon oracle agrees inside
            let c = centroid(outer);
            assert!(point_in_polygon(c, outer));
            assert!(enc.contains(Region::Lips, c[1].round() as usize, c[0].round() as usize));
        }
    }

    fn iou(a: &AlphaMask, b: &AlphaMask) -> f64 {
        let (mut inter, mut uni) = (0usize, 0usize);
        for (x, y) in a.data().iter().zip(b.data()) {
            let (x, y) = (*x >= 0.5, *y >= 0.5);
            inter += (x && y) as usize;
            uni += (x || y) as usize;
        }
        inter as f64 / uni as f64
    }

    #[test]
    fn synthetic_lips_and_skin_match_ground_truth() {
        for seed in 0..4 {
            let (lms, geo) = face(256, seed);
            let enc = region_encoding(&lms, 256, 256).unwrap();
            let lips_iou = iou(&enc.to_mask(Region::Lips), &geo.region_mask(Region::Lips));
            assert!(lips_iou >= 0.9, "seed {seed}: lips IoU {lips_iou}");
            let img = ImageTensor::filled(256, 256, [0.5; 3]);
            let skin = skin_mask(&img, &lms).unwrap();
            let skin_iou = iou(&skin, &geo.region_mask(Region::Skin));
            assert!(skin_iou >= 0.9, "seed {seed}: skin IoU {skin_iou}");
        }
    }

    #[test]
    fn missing_schema_or_points() {
        let empty = LandmarkSet::new("ibug68", vec![]);
        assert!(region_encoding(&empty, 8, 8).is_err());
        let img = ImageTensor::filled(8, 8, [0.5; 3]);
        assert!(skin_mask(&img, &empty).is_err());
        let custom = LandmarkSet::new("custom", vec![[1.0, 1.0]; 68]);
        assert!(matches!(
            region_encoding(&custom, 8, 8),
            Err(Error::SchemaMissing { .. })
        ));
    }

    #[test]
    fn flip_matches_flipped_landmarks() {
        let (lms, _) = face(64, 1);
        let enc = region_encoding(&lms, 64, 64).unwrap();
        let flipped = region_encoding(&lms.flip_horizontal(64).unwrap(), 64, 64).unwrap();
        let diff = enc
            .flip_horizontal()
            .to_planar()
            .iter()
            .zip(flipped.to_planar())
            .filter(|(a, b)| **a != *b)
            .count();
        // boundary pixels can tip either way under the half-pixel margin
        assert!(diff < 64, "{diff} pixels differ");
    }
}
