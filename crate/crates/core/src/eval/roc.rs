use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::image::AlphaMask;

/// Pixel-level ROC curve. Point `i` is the operating point of the rule
/// `score ≥ thresholds[i]`; thresholds ascend and end at `+∞`, so the curve
/// runs from `(1, 1)` down to `(0, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    #[serde(with = "infinite_as_null")]
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl RocResult {
    /// Curve with at most `max_points` points, endpoints kept.
    pub fn decimated(&self, max_points: usize) -> Self {
        let n = self.thresholds.len();
        if n <= max_points || max_points < 2 {
            return self.clone();
        }
        let idx: Vec<usize> = (0..max_points)
            .map(|i| ((i as f64 / (max_points - 1) as f64) * (n - 1) as f64).round() as usize)
            .collect();
        let mut idx = idx;
        idx.dedup();
        Self {
            thresholds: idx.iter().map(|i| self.thresholds[*i]).collect(),
            tpr: idx.iter().map(|i| self.tpr[*i]).collect(),
            fpr: idx.iter().map(|i| self.fpr[*i]).collect(),
            ..self.clone()
        }
    }
}

/// JSON has no infinity; the terminal `+∞` threshold is written as `null`.
mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// ROC of raw `(score, positive)` pairs.
pub fn roc_from_scores(samples: &mut [(f32, bool)]) -> Result<RocResult> {
    if samples.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite prediction score".into()));
    }
    let positives = samples.iter().filter(|(_, p)| *p).count();
    let negatives = samples.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InsufficientData(format!(
            "AUC undefined with {positives} positive and {negatives} negative pixels"
        )));
    }
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    // walk thresholds from high to low, one step per distinct score
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let mut i = 0;
    while i < samples.len() {
        let s = samples[i].0;
        while i < samples.len() && samples[i].0 == s {
            if samples[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s as f64);
        tpr.push(tp as f64 / positives as f64);
        fpr.push(fp as f64 / negatives as f64);
    }
    let auc = tpr
        .windows(2)
        .zip(fpr.windows(2))
        .map(|(t, f)| (f[1] - f[0]) * (t[0] + t[1]) * 0.5)
        .sum::<f64>()
        .clamp(0.0, 1.0);
    thresholds.reverse();
    tpr.reverse();
    fpr.reverse();
    Ok(RocResult {
        thresholds,
        tpr,
        fpr,
        auc,
        positives,
        negatives,
    })
}

fn pairs(pred: &[AlphaMask], gt: &[AlphaMask]) -> Result<Vec<(f32, bool)>> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} ground-truth masks",
            pred.len(),
            gt.len()
        )));
    }
    let mut out = Vec::new();
    for (p, g) in pred.iter().zip(gt) {
        if p.dims() != g.dims() {
            return Err(dims(g.dims(), p.dims()));
        }
        out.extend(p.data().iter().zip(g.data()).map(|(s, l)| (*s, *l >= 0.5)));
    }
    Ok(out)
}

/// Pooled per-pixel ROC over every image; ground truth is binarized at 0.5.
pub fn roc(pred: &[AlphaMask], gt: &[AlphaMask]) -> Result<RocResult> {
    roc_from_scores(&mut pairs(pred, gt)?)
}

/// Mean of per-image AUCs over images whose ground truth has both classes.
pub fn macro_auc(pred: &[AlphaMask], gt: &[AlphaMask]) -> Result<f64> {
    pairs(pred, gt)?;
    let aucs: Vec<f64> = pred
        .iter()
        .zip(gt)
        .filter_map(|(p, g)| roc(std::slice::from_ref(p), std::slice::from_ref(g)).ok())
        .map(|r| r.auc)
        .collect();
    if aucs.is_empty() {
        return Err(Error::InsufficientData("no image has both classes".into()));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}
