use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot::plot_curves;
use super::roc::{macro_auc, roc, RocResult};
use crate::error::{Error, Result};
use crate::geometry::LandmarkSet;
use crate::image::{AlphaMask, ImageTensor};

/// Curves in written reports keep at most this many points.
const REPORT_CURVE_POINTS: usize = 512;

/// One evaluation image with its ground truth.
#[derive(Clone, Debug)]
pub struct EvalSample {
    pub image: ImageTensor,
    pub gt_mask: AlphaMask,
    pub landmarks: Option<LandmarkSet>,
}

pub type MaskFn<'a> = Box<dyn Fn(&EvalSample) -> Result<AlphaMask> + Sync + 'a>;

/// A named mask producer.
pub struct Method<'a> {
    pub name: String,
    pub run: MaskFn<'a>,
}

impl<'a> Method<'a> {
    pub fn new(
        name: impl Into<String>,
        run: impl Fn(&EvalSample) -> Result<AlphaMask> + Sync + 'a,
    ) -> Self {
        Self {
            name: name.into(),
            run: Box::new(run),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub name: String,
    pub roc: Option<RocResult>,
    pub macro_auc: Option<f64>,
    /// Set when the method failed on some image and was skipped.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub images: usize,
    pub methods: Vec<MethodResult>,
    /// Names of successful methods by descending pooled AUC.
    pub ranking: Vec<String>,
}

/// Scores every method on every sample. A method that fails on any image is
/// kept in the report with its error and left out of the ranking.
pub fn compare_methods(samples: &[EvalSample], methods: &[Method<'_>]) -> Result<ComparisonReport> {
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods to compare".into()));
    }
    let mut seen = BTreeSet::new();
    for m in methods {
        if !seen.insert(m.name.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "duplicate method name `{}`",
                m.name
            )));
        }
    }
    let gt: Vec<AlphaMask> = samples.iter().map(|s| s.gt_mask.clone()).collect();
    let mut results = Vec::with_capacity(methods.len());
    for m in methods {
        let preds: Result<Vec<AlphaMask>> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| (m.run)(s).map_err(|e| Error::InvalidArgument(format!("image {i}: {e}"))))
            .collect();
        let scored = preds.and_then(|p| Ok((roc(&p, &gt)?, macro_auc(&p, &gt).ok())));
        results.push(match scored {
            Ok((r, mac)) => MethodResult {
                name: m.name.clone(),
                roc: Some(r),
                macro_auc: mac,
                error: None,
            },
            Err(e) => MethodResult {
                name: m.name.clone(),
                roc: None,
                macro_auc: None,
                error: Some(e.to_string()),
            },
        });
    }
    let mut ranked: Vec<&MethodResult> = results.iter().filter(|r| r.roc.is_some()).collect();
    ranked.sort_by(|a, b| {
        b.roc
            .as_ref()
            .unwrap()
            .auc
            .total_cmp(&a.roc.as_ref().unwrap().auc)
    });
    let ranking = ranked.iter().map(|r| r.name.clone()).collect();
    Ok(ComparisonReport {
        images: samples.len(),
        methods: results,
        ranking,
    })
}

impl ComparisonReport {
    pub fn auc(&self, name: &str) -> Option<f64> {
        self.methods
            .iter()
            .find(|m| m.name == name)?
            .roc
            .as_ref()
            .map(|r| r.auc)
    }

    /// Plain-text AUC table in ranking order, failures last.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<4} {:<16} {:>10} {:>10}\n",
            "rank", "method", "pooled", "per-image"
        );
        for (i, name) in self.ranking.iter().enumerate() {
            let m = self.methods.iter().find(|m| &m.name == name).unwrap();
            let mac = m.macro_auc.map_or("-".to_string(), |v| format!("{v:.4}"));
            out += &format!(
                "{:<4} {:<16} {:>10.4} {:>10}\n",
                i + 1,
                name,
                m.roc.as_ref().unwrap().auc,
                mac
            );
        }
        for m in self.methods.iter().filter(|m| m.error.is_some()) {
            out += &format!(
                "{:<4} {:<16} failed: {}\n",
                "-",
                m.name,
                m.error.as_ref().unwrap()
            );
        }
        out
    }

    /// Writes the JSON report (curves decimated) and a PNG plot beside it.
    /// Returns the plot path.
    pub fn write(&self, json_path: &Path) -> Result<PathBuf> {
        if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut slim = self.clone();
        for m in &mut slim.methods {
            m.roc = m.roc.as_ref().map(|r| r.decimated(REPORT_CURVE_POINTS));
        }
        std::fs::write(json_path, serde_json::to_string_pretty(&slim)?)?;
        let plot_path = json_path.with_extension("png");
        let curves: Vec<(&str, &RocResult)> = slim
            .methods
            .iter()
            .filter_map(|m| m.roc.as_ref().map(|r| (m.name.as_str(), r)))
            .collect();
        plot_curves(&curves, 320)?.save(&plot_path)?;
        Ok(plot_path)
    }
}
