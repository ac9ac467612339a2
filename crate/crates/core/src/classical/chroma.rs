use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::image::{AlphaMask, ImageTensor};

/// Tolerances around the reference skin chroma.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChromaBands {
    /// Degrees, in `[0, 180]`.
    pub hue: f64,
    /// Absolute saturation difference, in `[0, 1]`.
    pub saturation: f64,
}

impl Default for ChromaBands {
    fn default() -> Self {
        Self {
            hue: 15.0,
            saturation: 0.15,
        }
    }
}

/// Hue in degrees `[0, 360)` and saturation in `[0, 1]`; gray maps to hue 0.
pub(crate) fn hue_sat(px: &[f32]) -> (f64, f64) {
    let (r, g, b) = (px[0] as f64, px[1] as f64, px[2] as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let sat = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, sat);
    }
    let h = if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h.rem_euclid(360.0), sat)
}

/// Circular distance in degrees, in `[0, 180]`.
pub(crate) fn hue_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of hues on the circle: unwrap around the circular mean, take the
/// ordinary median, wrap back.
fn circular_median(hues: &[f64]) -> f64 {
    let (s, c) = hues.iter().fold((0.0, 0.0), |(s, c), h| {
        let r = h.to_radians();
        (s + r.sin(), c + r.cos())
    });
    let center = s.atan2(c).to_degrees();
    let mut offsets: Vec<f64> = hues
        .iter()
        .map(|h| {
            let d = (h - center).rem_euclid(360.0);
            if d > 180.0 {
                d - 360.0
            } else {
                d
            }
        })
        .collect();
    (center + median(&mut offsets)).rem_euclid(360.0)
}

/// Flags pixels whose hue or saturation leaves the band around the skin median.
pub fn chroma_deviation_mask(
    img: &ImageTensor,
    skin: &AlphaMask,
    bands: ChromaBands,
) -> Result<AlphaMask> {
    if img.dims() != skin.dims() {
        return Err(dims(img.dims(), skin.dims()));
    }
    if !(0.0..=180.0).contains(&bands.hue) || !(0.0..=1.0).contains(&bands.saturation) {
        return Err(Error::InvalidArgument(format!(
            "chroma bands out of range: {bands:?}"
        )));
    }
    let hs: Vec<(f64, f64)> = img.data().chunks_exact(3).map(hue_sat).collect();
    let (mut hues, mut sats) = (Vec::new(), Vec::new());
    for ((h, s), a) in hs.iter().zip(skin.data()) {
        if *a >= 0.5 {
            hues.push(*h);
            sats.push(*s);
        }
    }
    if hues.is_empty() {
        return Err(Error::InsufficientData("skin mask is empty".into()));
    }
    let ref_hue = circular_median(&hues);
    let ref_sat = median(&mut sats);
    let data = hs
        .iter()
        .map(|(h, s)| {
            let off =
                hue_distance(*h, ref_hue) > bands.hue || (s - ref_sat).abs() > bands.saturation;
            off as u8 as f32
        })
        .collect();
    AlphaMask::new(img.height(), img.width(), data)
}
