use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::image::{AlphaMask, ImageTensor};

/// Added to every covariance after each M-step.
pub const COVARIANCE_FLOOR: f64 = 1e-6;

/// Number of stored log-likelihood quantiles (0.1% resolution).
const QUANTILES: usize = 1001;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub components: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once the mean log-likelihood improves by less than this.
    pub tolerance: f64,
    /// Pixels beyond this count are subsampled (seeded) before fitting.
    pub max_pixels: usize,
    /// Percentile used for [`SkinColorModel::threshold`].
    pub percentile: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            components: 3,
            seed: 0,
            max_iterations: 200,
            tolerance: 1e-9,
            max_pixels: 200_000,
            percentile: 5.0,
        }
    }
}

/// Gaussian mixture over RGB with a table of training log-likelihood quantiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkinColorModel {
    pub k: usize,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 3]>,
    /// Row-major 3×3 covariance per component.
    pub covariances: Vec<[[f64; 3]; 3]>,
    /// Log-likelihood at the default percentile.
    pub threshold: f64,
    pub percentile: f64,
    /// Training log-likelihood quantiles at 0%, 0.1%, …, 100%.
    pub ll_quantiles: Vec<f64>,
    /// Mean training log-likelihood after each EM iteration.
    pub history: Vec<f64>,
}

struct Component {
    log_weight: f64,
    mean: Vector3<f64>,
    inv: Matrix3<f64>,
    log_norm: f64,
}

fn prepare(
    weights: &[f64],
    means: &[Vector3<f64>],
    covs: &[Matrix3<f64>],
) -> Result<Vec<Component>> {
    weights
        .iter()
        .zip(means)
        .zip(covs)
        .map(|((w, m), c)| {
            let chol = c.cholesky().ok_or_else(|| {
                Error::InvalidArgument("covariance is not positive definite".into())
            })?;
            let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            Ok(Component {
                log_weight: w.ln(),
                mean: *m,
                inv: chol.inverse(),
                log_norm: -0.5 * (3.0 * (2.0 * PI).ln() + log_det),
            })
        })
        .collect()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Per-component joint log densities `log wₖ + log N(x | μₖ, Σₖ)`.
fn joint(comps: &[Component], x: &Vector3<f64>, out: &mut [f64]) {
    for (o, c) in out.iter_mut().zip(comps) {
        let d = x - c.mean;
        *o = c.log_weight + c.log_norm - 0.5 * (d.transpose() * c.inv * d)[(0, 0)];
    }
}

fn collect_pixels(images: &[ImageTensor], masks: &[AlphaMask]) -> Result<Vec<Vector3<f64>>> {
    if images.len() != masks.len() {
        return Err(Error::InvalidArgument(format!(
            "{} images but {} skin masks",
            images.len(),
            masks.len()
        )));
    }
    let mut out = Vec::new();
    for (img, m) in images.iter().zip(masks) {
        if img.dims() != m.dims() {
            return Err(dims(img.dims(), m.dims()));
        }
        for (px, a) in img.data().chunks_exact(3).zip(m.data()) {
            if *a >= 0.5 {
                out.push(Vector3::new(px[0] as f64, px[1] as f64, px[2] as f64));
            }
        }
    }
    Ok(out)
}

/// k-means++ seeding.
fn init_means(x: &[Vector3<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vector3<f64>> {
    let mut means = vec![x[rng.random_range(0..x.len())]];
    let mut d2: Vec<f64> = x.iter().map(|p| (p - means[0]).norm_squared()).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            x[rng.random_range(0..x.len())]
        } else {
            let mut t = rng.random_range(0.0..total);
            let mut pick = x.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if t < *d {
                    pick = i;
                    break;
                }
                t -= d;
            }
            x[pick]
        };
        for (d, p) in d2.iter_mut().zip(x) {
            *d = d.min((p - next).norm_squared());
        }
        means.push(next);
    }
    means
}

/// Fits a `K`-component mixture by EM to the skin pixels (mask ≥ 0.5).
pub fn fit_skin_gmm(
    images: &[ImageTensor],
    skin_masks: &[AlphaMask],
    opts: &GmmOptions,
) -> Result<SkinColorModel> {
    let k = opts.components;
    if k == 0 {
        return Err(Error::InvalidArgument(
            "GMM needs at least one component".into(),
        ));
    }
    let mut x = collect_pixels(images, skin_masks)?;
    if x.len() < 10 * k {
        return Err(Error::InsufficientData(format!(
            "{} skin pixels, need at least {}",
            x.len(),
            10 * k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    if x.len() > opts.max_pixels.max(10 * k) {
        let mut idx = sample(&mut rng, x.len(), opts.max_pixels.max(10 * k)).into_vec();
        idx.sort_unstable();
        x = idx.into_iter().map(|i| x[i]).collect();
    }
    let n = x.len();
    let floor = Matrix3::identity() * COVARIANCE_FLOOR;

    let mut means = init_means(&x, k, &mut rng);
    let global_mean = x.iter().sum::<Vector3<f64>>() / n as f64;
    let global_cov = x
        .iter()
        .map(|p| (p - global_mean) * (p - global_mean).transpose())
        .sum::<Matrix3<f64>>()
        / n as f64
        + floor;
    let mut covs = vec![global_cov; k];
    let mut weights = vec![1.0 / k as f64; k];

    let mut resp = vec![0.0; n * k];
    let mut scratch = vec![0.0; k];
    let mut history = Vec::new();
    for _ in 0..opts.max_iterations {
        // E-step
        let comps = prepare(&weights, &means, &covs)?;
        let mut total_ll = 0.0;
        for (i, p) in x.iter().enumerate() {
            joint(&comps, p, &mut scratch);
            let lse = log_sum_exp(&scratch);
            total_ll += lse;
            for j in 0..k {
                resp[i * k + j] = (scratch[j] - lse).exp();
            }
        }
        let mean_ll = total_ll / n as f64;
        let converged = history
            .last()
            .is_some_and(|prev: &f64| (mean_ll - prev).abs() < opts.tolerance);
        history.push(mean_ll);
        if converged {
            break;
        }
        // M-step
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk <= 1e-12 {
                // dead component keeps its parameters with negligible weight
                weights[j] = 1e-12;
                continue;
            }
            let mu = x
                .iter()
                .enumerate()
                .map(|(i, p)| p * resp[i * k + j])
                .sum::<Vector3<f64>>()
                / nk;
            let cov = x
                .iter()
                .enumerate()
                .map(|(i, p)| (p - mu) * (p - mu).transpose() * resp[i * k + j])
                .sum::<Matrix3<f64>>()
                / nk;
            weights[j] = nk / n as f64;
            means[j] = mu;
            covs[j] = (cov + cov.transpose()) * 0.5 + floor;
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);
    }

    let comps = prepare(&weights, &means, &covs)?;
    let mut lls: Vec<f64> = x
        .iter()
        .map(|p| {
            joint(&comps, p, &mut scratch);
            log_sum_exp(&scratch)
        })
        .collect();
    lls.sort_by(f64::total_cmp);
    let ll_quantiles: Vec<f64> = (0..QUANTILES)
        .map(|q| {
            let pos = q as f64 / (QUANTILES - 1) as f64 * (n - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            lls[lo] + (lls[hi] - lls[lo]) * (pos - lo as f64)
        })
        .collect();

    let mut model = SkinColorModel {
        k,
        seed: opts.seed,
        weights,
        means: means.iter().map(|m| [m.x, m.y, m.z]).collect(),
        covariances: covs
            .iter()
            .map(|c| std::array::from_fn(|r| std::array::from_fn(|col| c[(r, col)])))
            .collect(),
        threshold: 0.0,
        percentile: opts.percentile,
        ll_quantiles,
        history,
    };
    model.threshold = model.threshold_at(opts.percentile)?;
    Ok(model)
}

impl SkinColorModel {
    fn components(&self) -> Result<Vec<Component>> {
        if self.k == 0
            || self.weights.len() != self.k
            || self.means.len() != self.k
            || self.covariances.len() != self.k
            || self.ll_quantiles.len() < 2
        {
            return Err(Error::InvalidArgument(
                "skin color model is not fitted".into(),
            ));
        }
        let means: Vec<Vector3<f64>> = self.means.iter().map(|m| Vector3::from(*m)).collect();
        let covs: Vec<Matrix3<f64>> = self
            .covariances
            .iter()
            .map(|c| Matrix3::from_fn(|r, col| c[r][col]))
            .collect();
        prepare(&self.weights, &means, &covs)
    }

    /// Log-likelihood threshold at `percentile` of the training skin pixels.
    /// At 100 the threshold is `+∞`, so every pixel falls below it.
    pub fn threshold_at(&self, percentile: f64) -> Result<f64> {
        if !(0.0..=100.0).contains(&percentile) {
            return Err(Error::InvalidArgument(format!(
                "percentile {percentile} outside [0, 100]"
            )));
        }
        if percentile >= 100.0 {
            return Ok(f64::INFINITY);
        }
        let q = &self.ll_quantiles;
        let pos = percentile / 100.0 * (q.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(q.len() - 1);
        Ok(q[lo] + (q[hi] - q[lo]) * (pos - lo as f64))
    }

    /// Per-pixel mixture log-likelihood, row-major.
    pub fn log_likelihood(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        let comps = self.components()?;
        let mut scratch = vec![0.0; self.k];
        Ok(img
            .data()
            .chunks_exact(3)
            .map(|px| {
                joint(
                    &comps,
                    &Vector3::new(px[0] as f64, px[1] as f64, px[2] as f64),
                    &mut scratch,
                );
                log_sum_exp(&scratch)
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.components()?;
        Ok(m)
    }
}

/// Flags pixels whose log-likelihood is below the `percentile` threshold.
pub fn gmm_makeup_mask(
    img: &ImageTensor,
    model: &SkinColorModel,
    percentile: f64,
) -> Result<AlphaMask> {
    let ll = model.log_likelihood(img)?;
    let threshold = model.threshold_at(percentile)?;
    let data = ll.iter().map(|v| (*v < threshold) as u8 as f32).collect();
    AlphaMask::new(img.height(), img.width(), data)
}
