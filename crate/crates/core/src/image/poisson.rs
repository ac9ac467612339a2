//! Gradient-domain (Poisson) blending.
//!
//! Inside the region the output solves the discrete Poisson equation whose
//! right-hand side is the 4-neighbour Laplacian of `src`, with Dirichlet
//! boundary values taken from `dst`. The symmetric positive-definite system
//! is solved with conjugate gradients.

use super::{ensure_same_dims, AlphaMask, ImageTensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct PoissonOptions {
    /// Absolute tolerance on the residual 2-norm.
    pub tolerance: f64,
    /// Iteration cap; defaults to ten times the pixel count.
    pub max_iterations: Option<usize>,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_iterations: None,
        }
    }
}

pub fn poisson_blend(
    src: &ImageTensor,
    dst: &ImageTensor,
    region: &AlphaMask,
) -> Result<ImageTensor> {
    poisson_blend_with(src, dst, region, &PoissonOptions::default())
}

pub fn poisson_blend_with(
    src: &ImageTensor,
    dst: &ImageTensor,
    region: &AlphaMask,
    opts: &PoissonOptions,
) -> Result<ImageTensor> {
    ensure_same_dims(dst.dims(), src.dims())?;
    ensure_same_dims(dst.dims(), region.dims())?;
    let (h, w) = dst.dims();
    let inside: Vec<bool> = region.data().iter().map(|v| *v >= 0.5).collect();

    let mut out = dst.data().to_vec();
    for c in 0..3 {
        let s: Vec<f64> = src
            .data()
            .iter()
            .skip(c)
            .step_by(3)
            .map(|v| *v as f64)
            .collect();
        let d: Vec<f64> = dst
            .data()
            .iter()
            .skip(c)
            .step_by(3)
            .map(|v| *v as f64)
            .collect();
        let solved = guided_interpolation(&s, &d, &inside, w, h, opts)?;
        for (i, v) in solved.into_iter().enumerate() {
            if inside[i] {
                out[i * 3 + c] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    ImageTensor::new(h, w, out)
}

/// Solves one channel of guided interpolation and returns the full field
/// (`dst` outside the region), unclamped.
pub fn guided_interpolation(
    src: &[f64],
    dst: &[f64],
    inside: &[bool],
    width: usize,
    height: usize,
    opts: &PoissonOptions,
) -> Result<Vec<f64>> {
    let n = width * height;
    if src.len() != n || dst.len() != n || inside.len() != n {
        return Err(Error::InvalidArgument(
            "guided_interpolation buffer sizes differ".into(),
        ));
    }
    for y in 0..height {
        for x in 0..width {
            let border = x == 0 || y == 0 || x + 1 == width || y + 1 == height;
            if border && inside[y * width + x] {
                return Err(Error::RegionTouchesBorder);
            }
        }
    }

    // Index unknowns.
    let mut slot = vec![usize::MAX; n];
    let mut pixels = Vec::new();
    for (i, &inn) in inside.iter().enumerate() {
        if inn {
            slot[i] = pixels.len();
            pixels.push(i);
        }
    }
    let mut out = dst.to_vec();
    if pixels.is_empty() {
        return Ok(out);
    }

    let neighbours = |i: usize| [i - 1, i + 1, i - width, i + width];

    let mut b = vec![0.0; pixels.len()];
    for (k, &i) in pixels.iter().enumerate() {
        let mut rhs = 0.0;
        for j in neighbours(i) {
            rhs += src[i] - src[j];
            if !inside[j] {
                rhs += dst[j];
            }
        }
        b[k] = rhs;
    }

    let apply = |v: &[f64], out: &mut [f64]| {
        for (k, &i) in pixels.iter().enumerate() {
            let mut acc = 4.0 * v[k];
            for j in neighbours(i) {
                if inside[j] {
                    acc -= v[slot[j]];
                }
            }
            out[k] = acc;
        }
    };

    // Warm start from dst; CG on A x = b.
    let mut x: Vec<f64> = pixels.iter().map(|&i| dst[i]).collect();
    let mut ax = vec![0.0; x.len()];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let cap = opts.max_iterations.unwrap_or(10 * n).max(1);
    let mut ap = vec![0.0; x.len()];
    let mut iterations = 0;
    while rr.sqrt() > opts.tolerance {
        if iterations >= cap {
            return Err(Error::NonConvergence {
                iterations,
                residual: rr.sqrt(),
            });
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rr / pap;
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_next: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_next / rr;
        for k in 0..p.len() {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_next;
        iterations += 1;
    }
    for (k, &i) in pixels.iter().enumerate() {
        out[i] = x[k];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};

    use super::*;

    /// Dense assembly and LU solve of the same Poisson system.
    fn dense_oracle(src: &[f64], dst: &[f64], inside: &[bool], w: usize) -> Vec<f64> {
        let idx: Vec<usize> = (0..inside.len()).filter(|i| inside[*i]).collect();
        let m = idx.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (r, &i) in idx.iter().enumerate() {
            a[(r, r)] = 4.0;
            for j in [i - 1, i + 1, i - w, i + w] {
                b[r] += src[i] - src[j];
                match idx.iter().position(|&k| k == j) {
                    Some(c) => a[(r, c)] = -1.0,
                    None => b[r] += dst[j],
                }
            }
        }
        let sol = a.lu().solve(&b).unwrap();
        let mut out = dst.to_vec();
        for (r, &i) in idx.iter().enumerate() {
            out[i] = sol[r];
        }
        out
    }

    fn five_by_five() -> (Vec<f64>, Vec<f64>, Vec<bool>) {
        let src: Vec<f64> = (0..25)
            .map(|i| 0.3 + 0.02 * ((i * 7) % 11) as f64)
            .collect();
        let dst: Vec<f64> = (0..25)
            .map(|i| 0.5 + 0.015 * ((i * 3) % 13) as f64)
            .collect();
        let inside: Vec<bool> = (0..25)
            .map(|i| {
                let (y, x) = (i / 5, i % 5);
                (1..4).contains(&y) && (1..4).contains(&x)
            })
            .collect();
        (src, dst, inside)
    }

    #[test]
    fn matches_dense_solve() {
        let (src, dst, inside) = five_by_five();
        let cg =
            guided_interpolation(&src, &dst, &inside, 5, 5, &PoissonOptions::default()).unwrap();
        let oracle = dense_oracle(&src, &dst, &inside, 5);
        for (a, b) in cg.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn identical_src_dst_is_unchanged() {
        let img = ImageTensor::from_fn(6, 6, |y, x| [0.1 * x as f32, 0.1 * y as f32, 0.4]);
        let region = AlphaMask::from_fn(6, 6, |y, x| {
            ((1..5).contains(&y) && (1..5).contains(&x)) as u8 as f32
        });
        let out = poisson_blend(&img, &img, &region).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn constant_into_constant_is_harmonic() {
        let src = ImageTensor::filled(7, 7, [0.9, 0.1, 0.5]);
        let dst = ImageTensor::filled(7, 7, [0.2, 0.6, 0.3]);
        let region = AlphaMask::from_fn(7, 7, |y, x| {
            ((2..5).contains(&y) && (1..6).contains(&x)) as u8 as f32
        });
        let out = poisson_blend(&src, &dst, &region).unwrap();
        assert!(out.max_abs_diff(&dst) < 1e-6);
    }

    #[test]
    fn outside_region_is_dst_exactly() {
        let src = ImageTensor::from_fn(8, 8, |y, x| [((x * y) % 5) as f32 / 5.0, 0.2, 0.8]);
        let dst = ImageTensor::from_fn(8, 8, |y, x| [0.3, (x + y) as f32 / 16.0, 0.1]);
        let region = AlphaMask::from_fn(8, 8, |y, x| {
            ((2..6).contains(&y) && (3..7).contains(&x)) as u8 as f32
        });
        let out = poisson_blend(&src, &dst, &region).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                if region.get(y, x) < 0.5 {
                    assert_eq!(out.get(y, x), dst.get(y, x));
                }
            }
        }
    }

    #[test]
    fn border_region_rejected() {
        let img = ImageTensor::filled(4, 4, [0.5; 3]);
        let mut region = AlphaMask::zeros(4, 4);
        region.set(0, 2, 1.0);
        assert!(matches!(
            poisson_blend(&img, &img, &region),
            Err(Error::RegionTouchesBorder)
        ));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let (src, dst, inside) = five_by_five();
        let opts = PoissonOptions {
            tolerance: 1e-14,
            max_iterations: Some(1),
        };
        assert!(matches!(
            guided_interpolation(&src, &dst, &inside, 5, 5, &opts),
            Err(Error::NonConvergence { .. })
        ));
    }
}
