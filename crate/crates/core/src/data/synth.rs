//! Procedural cartoon faces with exact makeup ground truth.
//!
//! A face is an ellipse of skin under a hairline, with two eyes, a nose and
//! lips; landmarks follow the 68-point convention. Makeup is a stack of
//! flat-color overlays (ellipses, polygons, strokes) with uniform opacity,
//! so the ground-truth alpha is `1 − Π(1 − αᵢ)` over covering overlays.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Intensity, ManifestEntry};
use crate::error::{Error, Result};
use crate::geometry::{segment_distance, LandmarkSet};
use crate::image::{AlphaMask, ImageTensor, Region};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    /// Rotation in radians.
    #[serde(default)]
    pub angle: f64,
}

impl Ellipse {
    pub fn new(cx: f64, cy: f64, rx: f64, ry: f64) -> Self {
        Self {
            cx,
            cy,
            rx,
            ry,
            angle: 0.0,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        u * u + v * v <= 1.0
    }

    /// Point at parameter `phi` (counter-clockwise on screen, y down).
    fn at(&self, phi: f64) -> [f64; 2] {
        let (s, c) = self.angle.sin_cos();
        let (u, v) = (self.rx * phi.cos(), -self.ry * phi.sin());
        [self.cx + u * c - v * s, self.cy + u * s + v * c]
    }

    fn polygon(&self, n: usize) -> Vec<[f64; 2]> {
        (0..n).map(|i| self.at(i as f64 / n as f64 * TAU)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Ellipse(Ellipse),
    Polygon { points: Vec<[f64; 2]> },
    Stroke { points: Vec<[f64; 2]>, width: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Ellipse(e) => e.contains(x, y),
            Shape::Polygon { points } => crate::geometry::point_in_polygon([x, y], points),
            Shape::Stroke { points, width } => points
                .windows(2)
                .any(|seg| segment_distance([x, y], seg[0], seg[1]) <= width / 2.0),
        }
    }

    fn within(&self, size: usize) -> bool {
        let s = size as f64;
        let inside = |p: &[f64; 2]| p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= s && p[1] <= s;
        match self {
            Shape::Ellipse(e) => e.rx > 0.0 && e.ry > 0.0 && inside(&[e.cx, e.cy]),
            Shape::Polygon { points } => points.len() >= 3 && points.iter().all(inside),
            Shape::Stroke { points, width } => {
                points.len() >= 2 && *width > 0.0 && points.iter().all(inside)
            }
        }
    }
}

/// One flat makeup layer; `exclude` carves holes (e.g. eyeshadow around the eye).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub shape: Shape,
    #[serde(default)]
    pub exclude: Vec<Shape>,
    pub color: [f32; 3],
    pub opacity: f32,
}

impl Overlay {
    fn covers(&self, x: f64, y: f64) -> bool {
        self.shape.contains(x, y) && !self.exclude.iter().any(|s| s.contains(x, y))
    }
}

/// Face layout in pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceGeometry {
    pub size: usize,
    pub face: Ellipse,
    /// Skin is only below this row; hair above.
    pub hairline: f64,
    pub eyes: [Ellipse; 2],
    pub lips: Ellipse,
    pub nose_tip: [f64; 2],
}

impl FaceGeometry {
    pub fn sample(size: usize, rng: &mut impl Rng) -> Self {
        let s = size as f64;
        let cx = s * (0.5 + rng.random_range(-0.04..0.04));
        let cy = s * (0.53 + rng.random_range(-0.03..0.03));
        let a = s * rng.random_range(0.30..0.35);
        let b = (a * rng.random_range(1.2..1.32)).min(s - 2.0 - cy);
        let face = Ellipse::new(cx, cy, a, b);
        let hairline = cy - 0.45 * b;
        let ey = cy - rng.random_range(0.17..0.23) * b;
        let spread = rng.random_range(0.40..0.45) * a;
        let (erx, ery) = (0.2 * a, 0.085 * b * rng.random_range(0.9..1.15));
        let eyes = [
            Ellipse::new(cx - spread, ey, erx, ery),
            Ellipse::new(cx + spread, ey, erx, ery),
        ];
        let lips = Ellipse::new(
            cx,
            cy + rng.random_range(0.47..0.53) * b,
            0.42 * a * rng.random_range(0.9..1.1),
            0.13 * b * rng.random_range(0.9..1.15),
        );
        Self {
            size,
            face,
            hairline,
            eyes,
            lips,
            nose_tip: [cx, cy + 0.18 * b],
        }
    }

    fn inter_eye(&self) -> f64 {
        (self.eyes[1].cx - self.eyes[0].cx).hypot(self.eyes[1].cy - self.eyes[0].cy)
    }

    /// Ground-truth 68-point landmarks.
    pub fn landmarks(&self) -> LandmarkSet {
        let f = &self.face;
        let mut pts = Vec::with_capacity(68);
        // jaw: lower half of the face ellipse, image-left to image-right
        for i in 0..17 {
            pts.push(f.at(PI + i as f64 / 16.0 * PI));
        }
        // brows sit on the hairline
        let half = ((1.0 - ((f.cy - self.hairline) / f.ry).powi(2)).max(0.0)).sqrt() * f.rx;
        let inner = 0.12 * f.rx;
        for i in 0..5 {
            let t = i as f64 / 4.0;
            pts.push([f.cx - half + t * (half - inner), self.hairline]);
        }
        for i in 0..5 {
            let t = i as f64 / 4.0;
            pts.push([f.cx + inner + t * (half - inner), self.hairline]);
        }
        // nose bridge and nostrils
        let top = self.eyes[0].cy;
        for i in 0..4 {
            let t = i as f64 / 3.0;
            pts.push([f.cx, top + t * (self.nose_tip[1] - top)]);
        }
        for i in 0..5 {
            let dx = (i as f64 - 2.0) * 0.08 * f.rx;
            let dy = if i == 2 { 0.03 * f.ry } else { 0.02 * f.ry };
            pts.push([f.cx + dx, self.nose_tip[1] + dy]);
        }
        for eye in &self.eyes {
            for deg in [180.0, 120.0, 60.0, 0.0, 300.0, 240.0] {
                pts.push(eye.at(f64::to_radians(deg)));
            }
        }
        for deg in [
            180.0, 150.0, 120.0, 90.0, 60.0, 30.0, 0.0, 330.0, 300.0, 270.0, 240.0, 210.0,
        ] {
            pts.push(self.lips.at(f64::to_radians(deg)));
        }
        let inner_lips = Ellipse::new(
            self.lips.cx,
            self.lips.cy,
            0.7 * self.lips.rx,
            0.25 * self.lips.ry,
        );
        for deg in [180.0, 120.0, 90.0, 60.0, 0.0, 300.0, 270.0, 240.0] {
            pts.push(inner_lips.at(f64::to_radians(deg)));
        }
        let max = (self.size - 1) as f64;
        for p in &mut pts {
            p[0] = p[0].clamp(0.0, max);
            p[1] = p[1].clamp(0.0, max);
        }
        LandmarkSet::new("ibug68", pts)
    }

    /// Ground-truth facial segments as the generator defines them: lips are
    /// the lip ellipse, eyes the eye ellipses grown by the same band the
    /// region encoder uses, skin the remaining face below the hairline.
    pub fn region_labels(&self) -> Vec<Region> {
        let n = self.size;
        let band = 0.15 * self.inter_eye();
        let eye_polys: Vec<Vec<[f64; 2]>> = self.eyes.iter().map(|e| e.polygon(64)).collect();
        let mut out = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                let (xf, yf) = (x as f64, y as f64);
                let label = if self.lips.contains(xf, yf) {
                    Region::Lips
                } else if self.eyes.iter().zip(&eye_polys).any(|(e, poly)| {
                    e.contains(xf, yf)
                        || crate::geometry::polygon::boundary_distance([xf, yf], poly) <= band
                }) {
                    Region::Eyes
                } else if self.face.contains(xf, yf) && yf >= self.hairline {
                    Region::Skin
                } else {
                    Region::Other
                };
                out.push(label);
            }
        }
        out
    }

    pub fn region_mask(&self, region: Region) -> AlphaMask {
        let labels = self.region_labels();
        AlphaMask::from_fn(self.size, self.size, |y, x| {
            (labels[y * self.size + x] == region) as u8 as f32
        })
    }
}

/// Everything needed to render one face deterministically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFaceSpec {
    pub size: usize,
    pub seed: u64,
    pub geometry: FaceGeometry,
    pub skin: [f32; 3],
    pub lip: [f32; 3],
    pub iris: [f32; 3],
    pub hair: [f32; 3],
    pub background: [f32; 3],
    pub intensity: Intensity,
    pub overlays: Vec<Overlay>,
    /// Amplitude of uniform per-pixel sensor noise.
    pub noise: f32,
}

const SKIN_TONES: [[f32; 3]; 6] = [
    [0.96, 0.84, 0.74],
    [0.92, 0.76, 0.64],
    [0.85, 0.66, 0.52],
    [0.76, 0.57, 0.44],
    [0.62, 0.45, 0.34],
    [0.47, 0.33, 0.25],
];

const MAKEUP_COLORS: [[f32; 3]; 12] = [
    [0.80, 0.05, 0.12],
    [0.55, 0.02, 0.10],
    [0.50, 0.10, 0.60],
    [0.12, 0.30, 0.80],
    [0.02, 0.58, 0.58],
    [0.20, 0.60, 0.22],
    [0.88, 0.72, 0.18],
    [0.05, 0.05, 0.08],
    [0.95, 0.30, 0.62],
    [0.95, 0.45, 0.10],
    [0.30, 0.85, 0.95],
    [0.97, 0.97, 0.97],
];

fn jitter(rng: &mut impl Rng, c: [f32; 3], amount: f32) -> [f32; 3] {
    c.map(|v| (v + rng.random_range(-amount..=amount)).clamp(0.0, 1.0))
}

fn mix(a: [f32; 3], b: [f32; 3], t: f32) -> [f32; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

impl SynthFaceSpec {
    /// A makeup-free face with geometry and palette drawn from `seed`.
    pub fn plain(size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::plain_from(size, seed, &mut rng)
    }

    fn plain_from(size: usize, seed: u64, rng: &mut ChaCha8Rng) -> Self {
        let geometry = FaceGeometry::sample(size, rng);
        let tone = SKIN_TONES[rng.random_range(0..SKIN_TONES.len())];
        let skin = jitter(rng, tone, 0.03);
        let lip = mix(skin, [0.78, 0.38, 0.40], rng.random_range(0.25..0.45));
        let iris = jitter(rng, [0.30, 0.22, 0.15], 0.12);
        let hair = jitter(rng, [0.12, 0.09, 0.07], 0.08);
        let background = jitter(rng, [0.45, 0.48, 0.52], 0.2);
        Self {
            size,
            seed,
            geometry,
            skin,
            lip,
            iris,
            hair,
            background,
            intensity: Intensity::None,
            overlays: Vec::new(),
            noise: 0.015,
        }
    }

    pub fn geometry(&self) -> FaceGeometry {
        self.geometry.clone()
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 17 {
            return Err(Error::InvalidArgument(format!(
                "face size {} below 17",
                self.size
            )));
        }
        if self.geometry.size != self.size {
            return Err(Error::InvalidArgument(
                "geometry size differs from spec size".into(),
            ));
        }
        for (i, o) in self.overlays.iter().enumerate() {
            if !(o.opacity > 0.0 && o.opacity <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "overlay {i} opacity {} outside (0, 1]",
                    o.opacity
                )));
            }
            if !o.shape.within(self.size) {
                return Err(Error::InvalidArgument(format!(
                    "overlay {i} outside the image"
                )));
            }
        }
        if self.overlays.is_empty() != (self.intensity == Intensity::None) {
            return Err(Error::InvalidArgument(
                "intensity `none` must coincide with an empty overlay list".into(),
            ));
        }
        if !(0.0..=0.2).contains(&self.noise) {
            return Err(Error::InvalidArgument(
                "noise amplitude outside [0, 0.2]".into(),
            ));
        }
        Ok(())
    }

    pub fn render(&self) -> Result<SynthFace> {
        self.validate()?;
        let g = &self.geometry;
        let n = self.size;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_f00d);
        let nostrils = [
            Ellipse::new(
                g.nose_tip[0] - 0.09 * g.face.rx,
                g.nose_tip[1] + 0.02 * g.face.ry,
                0.05 * g.face.rx,
                0.025 * g.face.ry,
            ),
            Ellipse::new(
                g.nose_tip[0] + 0.09 * g.face.rx,
                g.nose_tip[1] + 0.02 * g.face.ry,
                0.05 * g.face.rx,
                0.025 * g.face.ry,
            ),
        ];
        let hair = Ellipse::new(
            g.face.cx,
            g.face.cy - 0.08 * g.face.ry,
            1.12 * g.face.rx,
            1.1 * g.face.ry,
        );
        let mouth = Ellipse::new(g.lips.cx, g.lips.cy, 0.7 * g.lips.rx, 0.12 * g.lips.ry);

        let mut data = Vec::with_capacity(n * n * 3);
        let mut gt = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                let (xf, yf) = (x as f64, y as f64);
                let shade = 0.9 + 0.1 * (1.0 - yf as f32 / n as f32);
                let mut c = self.background.map(|v| v * shade);
                if hair.contains(xf, yf) {
                    c = self.hair;
                }
                if g.face.contains(xf, yf) {
                    if yf >= g.hairline {
                        let (u, v) = ((xf - g.face.cx) / g.face.rx, (yf - g.face.cy) / g.face.ry);
                        let falloff = 1.0 - 0.12 * (u * u + v * v) as f32;
                        c = self.skin.map(|s| s * falloff);
                    } else {
                        c = self.hair;
                    }
                }
                if nostrils.iter().any(|e| e.contains(xf, yf)) {
                    c = self.skin.map(|s| s * 0.62);
                }
                for eye in &g.eyes {
                    if eye.contains(xf, yf) {
                        let iris = Ellipse::new(eye.cx, eye.cy, 0.95 * eye.ry, 0.95 * eye.ry);
                        let pupil = Ellipse::new(eye.cx, eye.cy, 0.45 * eye.ry, 0.45 * eye.ry);
                        c = if pupil.contains(xf, yf) {
                            [0.04, 0.03, 0.03]
                        } else if iris.contains(xf, yf) {
                            self.iris
                        } else {
                            [0.93, 0.92, 0.90]
                        };
                    }
                }
                if g.lips.contains(xf, yf) {
                    c = if mouth.contains(xf, yf) {
                        self.lip.map(|v| v * 0.55)
                    } else {
                        self.lip
                    };
                }
                let mut keep = 1.0f32;
                for o in &self.overlays {
                    if o.covers(xf, yf) {
                        c = mix(c, o.color, o.opacity);
                        keep *= 1.0 - o.opacity;
                    }
                }
                gt.push(1.0 - keep);
                for v in c {
                    let noisy = if self.noise > 0.0 {
                        v + rng.random_range(-self.noise..=self.noise)
                    } else {
                        v
                    };
                    data.push(noisy.clamp(0.0, 1.0));
                }
            }
        }
        Ok(SynthFace {
            image: ImageTensor::new(n, n, data)?,
            gt_mask: AlphaMask::new(n, n, gt)?,
            landmarks: g.landmarks(),
            label: self.intensity.label(),
            intensity: self.intensity,
            spec: self.clone(),
        })
    }
}

/// A rendered face and its ground truth.
#[derive(Clone, Debug)]
pub struct SynthFace {
    pub image: ImageTensor,
    pub gt_mask: AlphaMask,
    pub landmarks: LandmarkSet,
    pub label: u8,
    pub intensity: Intensity,
    pub spec: SynthFaceSpec,
}

/// Distribution over faces and makeup styles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthDistribution {
    pub size: usize,
    /// Probability that a face wears makeup.
    pub makeup_fraction: f64,
    /// Relative frequencies of light, mid and heavy styles among makeup faces.
    pub intensity_mix: [f64; 3],
    pub noise: f32,
}

impl Default for SynthDistribution {
    fn default() -> Self {
        Self {
            size: 64,
            makeup_fraction: 0.5,
            intensity_mix: [0.5, 0.3, 0.2],
            noise: 0.015,
        }
    }
}

impl SynthDistribution {
    pub fn validate(&self) -> Result<()> {
        if self.size < 17 {
            return Err(Error::InvalidArgument(
                "face size must be at least 17".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.makeup_fraction) {
            return Err(Error::InvalidArgument(
                "makeup_fraction outside [0, 1]".into(),
            ));
        }
        if self.intensity_mix.iter().any(|w| *w < 0.0)
            || self.intensity_mix.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::InvalidArgument(
                "intensity_mix must be non-negative, not all zero".into(),
            ));
        }
        Ok(())
    }

    pub fn sample_spec(&self, seed: u64, rng: &mut ChaCha8Rng) -> SynthFaceSpec {
        let mut spec = SynthFaceSpec::plain_from(self.size, seed, rng);
        spec.noise = self.noise;
        if rng.random_bool(self.makeup_fraction) {
            let total: f64 = self.intensity_mix.iter().sum();
            let mut pick = rng.random_range(0.0..total);
            let mut intensity = Intensity::Heavy;
            for (w, level) in
                self.intensity_mix
                    .iter()
                    .zip([Intensity::Light, Intensity::Mid, Intensity::Heavy])
            {
                if pick < *w {
                    intensity = level;
                    break;
                }
                pick -= w;
            }
            spec.intensity = intensity;
            spec.overlays = sample_overlays(&spec.geometry, intensity, rng);
        }
        spec
    }
}

fn pick_color(rng: &mut impl Rng) -> [f32; 3] {
    let base = MAKEUP_COLORS[rng.random_range(0..MAKEUP_COLORS.len())];
    jitter(rng, base, 0.05)
}

fn point_in_face(g: &FaceGeometry, rng: &mut impl Rng) -> [f64; 2] {
    loop {
        let u = rng.random_range(-0.85..0.85);
        let v = rng.random_range(-0.85..0.85);
        if u * u + v * v <= 0.72 {
            let p = [g.face.cx + u * g.face.rx, g.face.cy + v * g.face.ry];
            if p[1] >= g.hairline {
                return p;
            }
        }
    }
}

fn sample_overlays(g: &FaceGeometry, intensity: Intensity, rng: &mut ChaCha8Rng) -> Vec<Overlay> {
    let scale = g.size as f64 / 64.0;
    let (lo, hi) = match intensity {
        Intensity::Light => (0.55, 0.7),
        Intensity::Mid => (0.65, 0.85),
        _ => (0.75, 0.95),
    };
    let opacity = |rng: &mut ChaCha8Rng| rng.random_range(lo..hi) as f32;
    let lipstick = |rng: &mut ChaCha8Rng, op: f32| Overlay {
        shape: Shape::Ellipse(g.lips),
        exclude: vec![],
        color: pick_color(rng),
        opacity: op,
    };
    let eyeshadow = |rng: &mut ChaCha8Rng, op: f32, color: [f32; 3]| -> Vec<Overlay> {
        let lift = rng.random_range(0.5..0.9);
        let grow = rng.random_range(1.25..1.5);
        g.eyes
            .iter()
            .map(|e| Overlay {
                shape: Shape::Ellipse(Ellipse::new(
                    e.cx,
                    e.cy - lift * e.ry,
                    grow * e.rx,
                    (2.2 * e.ry).max(2.0 * scale),
                )),
                exclude: vec![Shape::Ellipse(*e)],
                color,
                opacity: op,
            })
            .collect()
    };
    let blush = |rng: &mut ChaCha8Rng, op: f32| -> Vec<Overlay> {
        let color = jitter(rng, [0.92, 0.35, 0.45], 0.06);
        [-1.0, 1.0]
            .iter()
            .map(|side| Overlay {
                shape: Shape::Ellipse(Ellipse::new(
                    g.face.cx + side * 0.52 * g.face.rx,
                    g.face.cy + 0.16 * g.face.ry,
                    0.2 * g.face.rx,
                    0.12 * g.face.ry,
                )),
                exclude: vec![],
                color,
                opacity: op,
            })
            .collect()
    };
    let eyeliner = |op: f32| -> Vec<Overlay> {
        g.eyes
            .iter()
            .map(|e| Overlay {
                shape: Shape::Stroke {
                    points: (0..=6)
                        .map(|i| e.at(PI - i as f64 / 6.0 * PI))
                        .map(|[x, y]| [x, y - 0.3 * scale])
                        .collect(),
                    width: 1.3 * scale,
                },
                exclude: vec![],
                color: [0.03, 0.03, 0.05],
                opacity: op.max(0.8),
            })
            .collect()
    };

    let mut out = Vec::new();
    match intensity {
        Intensity::None => {}
        Intensity::Light => {
            if rng.random_bool(0.6) {
                let op = opacity(rng);
                out.push(lipstick(rng, op));
            } else {
                let op = opacity(rng);
                out.extend(blush(rng, op));
            }
        }
        Intensity::Mid => {
            let op = opacity(rng);
            out.push(lipstick(rng, op));
            let op = opacity(rng);
            let color = pick_color(rng);
            out.extend(eyeshadow(rng, op, color));
            if rng.random_bool(0.5) {
                let op = opacity(rng);
                out.extend(blush(rng, op));
            }
            if rng.random_bool(0.4) {
                out.extend(eyeliner(opacity(rng)));
            }
        }
        Intensity::Heavy => {
            let op = opacity(rng);
            out.push(lipstick(rng, op));
            let op = opacity(rng);
            let color = pick_color(rng);
            out.extend(eyeshadow(rng, op, color));
            out.extend(eyeliner(opacity(rng)));
            // cross-region drawings: strokes and polygons anywhere on the face
            for _ in 0..rng.random_range(1..=3) {
                let op = opacity(rng);
                let color = pick_color(rng);
                if rng.random_bool(0.6) {
                    let start = point_in_face(g, rng);
                    let mut points = vec![start];
                    for _ in 0..rng.random_range(2..=4) {
                        points.push(point_in_face(g, rng));
                    }
                    out.push(Overlay {
                        shape: Shape::Stroke {
                            points,
                            width: rng.random_range(1.5..3.0) * scale,
                        },
                        exclude: vec![],
                        color,
                        opacity: op,
                    });
                } else {
                    let [cx, cy] = point_in_face(g, rng);
                    let r = rng.random_range(3.0..6.0) * scale;
                    let spikes = rng.random_range(4..=6);
                    let rot = rng.random_range(0.0..TAU);
                    let points = (0..2 * spikes)
                        .map(|i| {
                            let t = rot + i as f64 / (2 * spikes) as f64 * TAU;
                            let rr = if i % 2 == 0 { r } else { 0.45 * r };
                            [cx + rr * t.cos(), cy + rr * t.sin()]
                        })
                        .collect();
                    out.push(Overlay {
                        shape: Shape::Polygon { points },
                        exclude: vec![],
                        color,
                        opacity: op,
                    });
                }
            }
        }
    }
    let max = g.size as f64;
    for o in &mut out {
        clamp_shape(&mut o.shape, max);
        for e in &mut o.exclude {
            clamp_shape(e, max);
        }
    }
    out
}

fn clamp_shape(shape: &mut Shape, max: f64) {
    let clamp = |p: &mut [f64; 2]| {
        p[0] = p[0].clamp(0.0, max);
        p[1] = p[1].clamp(0.0, max);
    };
    match shape {
        Shape::Ellipse(e) => {
            e.cx = e.cx.clamp(0.0, max);
            e.cy = e.cy.clamp(0.0, max);
        }
        Shape::Polygon { points } | Shape::Stroke { points, .. } => {
            points.iter_mut().for_each(clamp)
        }
    }
}

/// Renders `n` faces; face `i` is reproducible from `(seed, i)` alone.
pub fn synth_faces(dist: &SynthDistribution, n: usize, seed: u64) -> Result<Vec<SynthFace>> {
    dist.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("synth_faces needs n >= 1".into()));
    }
    (0..n)
        .map(|i| {
            let face_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(face_seed);
            dist.sample_spec(face_seed, &mut rng).render()
        })
        .collect()
}

/// Writes images, masks, landmarks and `manifest.jsonl` under `out_dir`.
pub fn write_synth_dataset(faces: &[SynthFace], out_dir: &Path) -> Result<DatasetManifest> {
    for sub in ["images", "masks", "landmarks"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    let mut entries = Vec::with_capacity(faces.len());
    for (i, face) in faces.iter().enumerate() {
        let stem = format!("face_{i:05}");
        let image = Path::new("images").join(format!("{stem}.png"));
        let mask = Path::new("masks").join(format!("{stem}.png"));
        let lms = Path::new("landmarks").join(format!("{stem}.json"));
        face.image.save(out_dir.join(&image))?;
        face.gt_mask.save(out_dir.join(&mask))?;
        face.landmarks.save(out_dir.join(&lms))?;
        entries.push(ManifestEntry {
            image,
            label: face.label,
            intensity: face.intensity,
            landmarks: Some(lms),
            gt_mask: Some(mask),
        });
    }
    let manifest = DatasetManifest::new(out_dir.to_path_buf(), entries);
    manifest.write(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
