use super::roc::RocResult;
use crate::error::{Error, Result};
use crate::image::ImageTensor;

const PALETTE: [[f32; 3]; 6] = [
    [0.84, 0.15, 0.16],
    [0.12, 0.47, 0.71],
    [0.17, 0.63, 0.17],
    [1.00, 0.50, 0.05],
    [0.58, 0.40, 0.74],
    [0.55, 0.34, 0.29],
];

fn line(
    img: &mut ImageTensor,
    (x0, y0): (i64, i64),
    (x1, y1): (i64, i64),
    color: [f32; 3],
    thick: i64,
) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let (w, h) = (img.width() as i64, img.height() as i64);
    loop {
        for oy in -thick / 2..=thick / 2 {
            for ox in -thick / 2..=thick / 2 {
                let (px, py) = (x + ox, y + oy);
                if px >= 0 && py >= 0 && px < w && py < h {
                    img.set(py as usize, px as usize, color);
                }
            }
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Square ROC plot: chance diagonal in gray, one colored curve per method
/// (palette order follows `curves`), with a legend swatch column on the right.
pub fn plot_curves(curves: &[(&str, &RocResult)], size: usize) -> Result<ImageTensor> {
    if size < 64 {
        return Err(Error::InvalidArgument(
            "plot size must be at least 64".into(),
        ));
    }
    let mut img = ImageTensor::filled(size, size, [1.0; 3]);
    let margin = (size / 10) as i64;
    let span = size as i64 - 2 * margin;
    let to_px = |fpr: f64, tpr: f64| {
        (
            margin + (fpr * span as f64).round() as i64,
            size as i64 - margin - (tpr * span as f64).round() as i64,
        )
    };
    let axis = [0.1; 3];
    line(&mut img, to_px(0.0, 0.0), to_px(1.0, 0.0), axis, 1);
    line(&mut img, to_px(0.0, 0.0), to_px(0.0, 1.0), axis, 1);
    line(&mut img, to_px(0.0, 0.0), to_px(1.0, 1.0), [0.7; 3], 1);
    for (i, (_, r)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        for k in 1..r.fpr.len() {
            line(
                &mut img,
                to_px(r.fpr[k - 1], r.tpr[k - 1]),
                to_px(r.fpr[k], r.tpr[k]),
                color,
                2,
            );
        }
        // legend swatch
        let y = margin + 4 + 8 * i as i64;
        line(
            &mut img,
            (size as i64 - margin / 2 - 4, y),
            (size as i64 - margin / 2 + 4, y),
            color,
            3,
        );
    }
    Ok(img)
}
