//! Piecewise-affine warp over a Delaunay triangulation of the source
//! landmarks plus eight image-border anchors.

use delaunator::{triangulate, Point};

use super::LandmarkSet;
use crate::error::{Error, Result};
use crate::image::{AlphaMask, ImageTensor};

const MIN_TRIANGLE_AREA: f64 = 1e-6;

/// Triangulated correspondence that resamples source-geometry rasters into
/// the destination geometry.
#[derive(Clone, Debug)]
pub struct WarpTransform {
    src: Vec<[f64; 2]>,
    dst: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    landmark_count: usize,
    src_dims: (usize, usize),
    dst_dims: (usize, usize),
}

fn anchors(height: usize, width: usize) -> [[f64; 2]; 8] {
    let (w, h) = ((width - 1) as f64, (height - 1) as f64);
    [
        [0.0, 0.0],
        [w / 2.0, 0.0],
        [w, 0.0],
        [w, h / 2.0],
        [w, h],
        [w / 2.0, h],
        [0.0, h],
        [0.0, h / 2.0],
    ]
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Builds the warp sending `src` landmarks (in an image of `src_dims`,
/// `(height, width)`) onto `dst` landmarks (in an image of `dst_dims`).
pub fn build_warp(
    src: &LandmarkSet,
    dst: &LandmarkSet,
    src_dims: (usize, usize),
    dst_dims: (usize, usize),
) -> Result<WarpTransform> {
    if src.schema != dst.schema {
        return Err(Error::SchemaMismatch(
            src.schema.clone(),
            dst.schema.clone(),
        ));
    }
    if src.len() != dst.len() {
        return Err(Error::InvalidArgument(format!(
            "landmark counts differ: {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if src.is_empty() {
        return Err(Error::InvalidArgument("landmark set is empty".into()));
    }
    src.check_bounds(src_dims.0, src_dims.1)?;
    dst.check_bounds(dst_dims.0, dst_dims.1)?;

    let mut src_v = src.points.clone();
    src_v.extend(anchors(src_dims.0, src_dims.1));
    let mut dst_v = dst.points.clone();
    dst_v.extend(anchors(dst_dims.0, dst_dims.1));

    let pts: Vec<Point> = src_v.iter().map(|p| Point { x: p[0], y: p[1] }).collect();
    let tri = triangulate(&pts);
    let mut triangles = Vec::with_capacity(tri.triangles.len() / 3);
    for t in tri.triangles.chunks_exact(3) {
        let t = [t[0], t[1], t[2]];
        let a_src = signed_area(src_v[t[0]], src_v[t[1]], src_v[t[2]]);
        let a_dst = signed_area(dst_v[t[0]], dst_v[t[1]], dst_v[t[2]]);
        if a_src.abs() < MIN_TRIANGLE_AREA || a_dst.abs() < MIN_TRIANGLE_AREA {
            return Err(Error::DegenerateTriangle(t));
        }
        triangles.push(t);
    }
    if triangles.is_empty() {
        return Err(Error::DegenerateTriangle([0, 0, 0]));
    }
    Ok(WarpTransform {
        src: src_v,
        dst: dst_v,
        triangles,
        landmark_count: src.len(),
        src_dims,
        dst_dims,
    })
}

impl WarpTransform {
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Whether all three vertices of triangle `t` are landmarks (not anchors).
    pub fn is_landmark_triangle(&self, t: usize) -> bool {
        self.triangles[t].iter().all(|&v| v < self.landmark_count)
    }

    pub fn src_vertices(&self) -> &[[f64; 2]] {
        &self.src
    }

    pub fn dst_vertices(&self) -> &[[f64; 2]] {
        &self.dst
    }

    pub fn dst_dims(&self) -> (usize, usize) {
        self.dst_dims
    }

    pub fn src_dims(&self) -> (usize, usize) {
        self.src_dims
    }

    /// Affine map of triangle `t` applied to a source-space point.
    pub fn map_src_to_dst(&self, t: usize, p: [f64; 2]) -> [f64; 2] {
        let [a, b, c] = self.triangles[t];
        let (l0, l1, l2) = barycentric(p, self.src[a], self.src[b], self.src[c]);
        combine(l0, l1, l2, self.dst[a], self.dst[b], self.dst[c])
    }

    /// Destination pixel → (triangle, source point) for every covered pixel,
    /// in row-major order. `None` marks pixels outside every triangle.
    pub fn inverse_map(&self) -> Vec<Option<(usize, [f64; 2])>> {
        let (h, w) = self.dst_dims;
        let mut out = vec![None; h * w];
        const EPS: f64 = 1e-9;
        for (ti, &[a, b, c]) in self.triangles.iter().enumerate() {
            let (pa, pb, pc) = (self.dst[a], self.dst[b], self.dst[c]);
            let x0 = pa[0].min(pb[0]).min(pc[0]).floor().max(0.0) as usize;
            let y0 = pa[1].min(pb[1]).min(pc[1]).floor().max(0.0) as usize;
            let x1 = (pa[0].max(pb[0]).max(pc[0]).ceil() as usize).min(w - 1);
            let y1 = (pa[1].max(pb[1]).max(pc[1]).ceil() as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let slot = &mut out[y * w + x];
                    if slot.is_some() {
                        continue;
                    }
                    let (l0, l1, l2) = barycentric([x as f64, y as f64], pa, pb, pc);
                    if l0 >= -EPS && l1 >= -EPS && l2 >= -EPS {
                        let s = combine(l0, l1, l2, self.src[a], self.src[b], self.src[c]);
                        *slot = Some((ti, s));
                    }
                }
            }
        }
        out
    }

    fn source_coords(&self) -> Vec<[f64; 2]> {
        let (h, w) = self.dst_dims;
        let (sh, sw) = self.src_dims;
        let sx = if w > 1 {
            (sw - 1) as f64 / (w - 1) as f64
        } else {
            0.0
        };
        let sy = if h > 1 {
            (sh - 1) as f64 / (h - 1) as f64
        } else {
            0.0
        };
        self.inverse_map()
            .into_iter()
            .enumerate()
            .map(|(i, hit)| match hit {
                Some((_, p)) => p,
                // edge extension: fall back to the proportional position
                None => [(i % w) as f64 * sx, (i / w) as f64 * sy],
            })
            .collect()
    }

    pub fn warp_image(&self, img: &ImageTensor) -> Result<ImageTensor> {
        if img.dims() != self.src_dims {
            return Err(Error::dims(self.src_dims, img.dims()));
        }
        let coords = self.source_coords();
        let (h, w) = self.dst_dims;
        Ok(ImageTensor::from_fn(h, w, |y, x| {
            let [sx, sy] = coords[y * w + x];
            img.sample_bilinear(sx, sy)
        }))
    }

    pub fn warp_mask(&self, mask: &AlphaMask) -> Result<AlphaMask> {
        if mask.dims() != self.src_dims {
            return Err(Error::dims(self.src_dims, mask.dims()));
        }
        let coords = self.source_coords();
        let (h, w) = self.dst_dims;
        Ok(AlphaMask::from_fn(h, w, |y, x| {
            let [sx, sy] = coords[y * w + x];
            mask.sample_bilinear(sx, sy)
        }))
    }
}

fn barycentric(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> (f64, f64, f64) {
    let det = (b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]);
    let l0 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / det;
    let l1 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / det;
    (l0, l1, 1.0 - l0 - l1)
}

fn combine(l0: f64, l1: f64, l2: f64, a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    [
        l0 * a[0] + l1 * b[0] + l2 * c[0],
        l0 * a[1] + l1 * b[1] + l2 * c[1],
    ]
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ring(n: usize, cx: f64, cy: f64, r: f64) -> LandmarkSet {
        let points = (0..n)
            .map(|i| {
                let t = i as f64 / n as f64 * std::f64::consts::TAU;
                let rr = r * (0.6 + 0.4 * ((i * 7) % 5) as f64 / 4.0);
                [cx + rr * t.cos(), cy + rr * t.sin()]
            })
            .collect();
        LandmarkSet::new("custom", points)
    }

    fn textured(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, |y, x| {
            let (xf, yf) = (x as f32, y as f32);
            [
                0.5 + 0.4 * (xf * 0.3).sin(),
                0.5 + 0.4 * (yf * 0.2).cos(),
                ((xf + yf) / (h + w) as f32).min(1.0),
            ]
        })
    }

    fn smooth(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, |y, x| {
            let (xf, yf) = (x as f32, y as f32);
            [
                0.5 + 0.3 * (xf / 12.0).sin(),
                0.4 + 0.3 * (yf / 15.0).cos(),
                0.2 + 0.01 * xf,
            ]
        })
    }

    #[test]
    fn identity_warp_is_value_identity() {
        let lms = ring(20, 32.0, 30.0, 18.0);
        let img = textured(64, 64);
        let warp = build_warp(&lms, &lms, (64, 64), (64, 64)).unwrap();
        let out = warp.warp_image(&img).unwrap();
        assert!(out.max_abs_diff(&img) <= 1.0 / 255.0);
    }

    #[test]
    fn translation_shifts_landmark_triangles() {
        let src = ring(24, 30.0, 32.0, 16.0);
        let dst = src.translated(3.0, 0.0);
        let img = textured(64, 64);
        let warp = build_warp(&src, &dst, (64, 64), (64, 64)).unwrap();
        let out = warp.warp_image(&img).unwrap();
        let map = warp.inverse_map();
        let mut checked = 0;
        for y in 0..64 {
            for x in 3..64 {
                if let Some((t, _)) = map[y * 64 + x] {
                    if warp.is_landmark_triangle(t) {
                        let a = out.get(y, x);
                        let b = img.get(y, x - 3);
                        for c in 0..3 {
                            assert!((a[c] - b[c]).abs() <= 1e-5, "({y},{x})");
                        }
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 200, "only {checked} interior pixels");
    }

    #[test]
    fn control_points_correspond() {
        let src = ring(16, 30.0, 30.0, 14.0);
        let dst = LandmarkSet::new(
            "custom",
            src.points
                .iter()
                .map(|[x, y]| [x * 0.9 + 4.0, y * 1.1 - 2.0])
                .collect(),
        );
        let img = smooth(64, 64);
        let warp = build_warp(&src, &dst, (64, 64), (64, 64)).unwrap();
        let out = warp.warp_image(&img).unwrap();
        for (s, d) in src.points.iter().zip(&dst.points) {
            let a = out.sample_bilinear(d[0], d[1]);
            let b = img.sample_bilinear(s[0], s[1]);
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() <= 2.0 / 255.0, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn errors() {
        let a = ring(10, 30.0, 30.0, 10.0);
        let mut b = a.clone();
        b.schema = "other".into();
        assert!(matches!(
            build_warp(&a, &b, (64, 64), (64, 64)),
            Err(Error::SchemaMismatch(..))
        ));
        let short = LandmarkSet::new("custom", a.points[..5].to_vec());
        assert!(build_warp(&a, &short, (64, 64), (64, 64)).is_err());
        // collapse every destination point onto one location
        let collapsed = LandmarkSet::new("custom", vec![[30.0, 30.0]; 10]);
        assert!(matches!(
            build_warp(&a, &collapsed, (64, 64), (64, 64)),
            Err(Error::DegenerateTriangle(_))
        ));
        let warp = build_warp(&a, &a, (64, 64), (64, 64)).unwrap();
        assert!(warp.warp_image(&textured(32, 32)).is_err());
    }

    proptest! {
        #[test]
        fn affine_maps_are_vertex_exact(dx in -4.0f64..4.0, dy in -4.0f64..4.0, s in 0.8f64..1.2) {
            let src = ring(14, 32.0, 32.0, 15.0);
            let dst = LandmarkSet::new("custom",
                src.points.iter().map(|[x, y]| [32.0 + (x - 32.0) * s + dx, 32.0 + (y - 32.0) * s + dy]).collect());
            let warp = build_warp(&src, &dst, (64, 64), (64, 64)).unwrap();
            for (t, tri) in warp.triangles().iter().enumerate() {
                for &v in tri {
                    let mapped = warp.map_src_to_dst(t, warp.src_vertices()[v]);
                    let want = warp.dst_vertices()[v];
                    prop_assert!((mapped[0] - want[0]).abs() < 1e-9);
                    prop_assert!((mapped[1] - want[1]).abs() < 1e-9);
                }
            }
        }
    }
}
