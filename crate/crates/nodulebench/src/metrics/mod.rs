//! Detection-track scoring: image scores, ROC/AUC, FROC with the challenge
//! matching rules, sensitivities at fixed false-positive rates, the
//! leaderboard rank metric, and DeLong's test for correlated AUCs.

mod delong;
mod froc;
mod roc;

pub use delong::{delong_test, DelongResult};
pub use froc::{compute_froc, sensitivity_at, sensitivity_at_with, FrocCurve, FrocPoint, Interpolation};
pub use roc::{compute_roc, RocCurve, RocPoint};

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BoundingBox, Detection};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("scores contain no positive or no negative label")]
    DegenerateLabels,
    #[error("score and label lists must have equal length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("prediction image id {0:?} has no reference annotation")]
    UnknownImageId(String),
    #[error("duplicate image id {0:?}")]
    DuplicateImageId(String),
    #[error("reference annotations contain no nodules")]
    NoNodulesInReference,
    #[error("reference contains no images")]
    NoImages,
    #[error("operating curve has no points")]
    EmptyCurve,
    #[error("DeLong variance is zero while the AUCs differ")]
    ZeroVariance,
}

/// All detections an algorithm produced for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePredictions {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

/// Reference nodule boxes for one image; empty means a non-nodule image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageAnnotations {
    pub image_id: String,
    pub nodules: Vec<BoundingBox>,
}

/// The leaderboard row for one submission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub sens_at_0125: f64,
    pub sens_at_025: f64,
    pub sens_at_05: f64,
    pub rank_metric: f64,
    pub n_images: usize,
    pub n_nodule_images: usize,
    pub n_nodules: usize,
}

/// Report plus the operating curves it was computed from.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub roc: RocCurve,
    pub froc: FrocCurve,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.2,
            interpolation: Interpolation::Linear,
        }
    }
}

/// Per-detection match outcome against the reference boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
}

/// Canonical detection ordering used wherever ties must break
/// deterministically: probability descending, then left edge, then top edge.
pub(crate) fn det_order(a: &Detection, b: &Detection) -> Ordering {
    b.probability
        .partial_cmp(&a.probability)
        .unwrap_or(Ordering::Equal)
        .then(a.bbox.x.partial_cmp(&b.bbox.x).unwrap_or(Ordering::Equal))
        .then(a.bbox.y.partial_cmp(&b.bbox.y).unwrap_or(Ordering::Equal))
}

/// Image-level score: the maximum box probability, or exactly 0 for an
/// image with no detections.
pub fn image_score(p: &ImagePredictions) -> f64 {
    p.detections
        .iter()
        .map(|d| d.probability)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })
        .unwrap_or(0.0)
}

/// For each reference box, keeps only the highest-probability prediction
/// among those overlapping it at `iou > iou_threshold`; the rest of that
/// group is removed entirely (never counted as false positives later).
/// Predictions overlapping no reference box pass through unchanged.
/// Input order is preserved in the output.
pub fn dedup_predictions(
    preds: &[Detection],
    gt: &[BoundingBox],
    iou_threshold: f64,
) -> Vec<Detection> {
    let mut keep = vec![false; preds.len()];
    let mut overlaps_any = vec![false; preds.len()];
    for g in gt {
        let mut best: Option<usize> = None;
        for (i, d) in preds.iter().enumerate() {
            if iou(&d.bbox, g) > iou_threshold {
                overlaps_any[i] = true;
                best = match best {
                    None => Some(i),
                    Some(j) => {
                        if det_order(d, &preds[j]) == Ordering::Less {
                            Some(i)
                        } else {
                            Some(j)
                        }
                    }
                };
            }
        }
        if let Some(i) = best {
            keep[i] = true;
        }
    }
    preds
        .iter()
        .enumerate()
        .filter(|&(i, _)| keep[i] || !overlaps_any[i])
        .map(|(_, d)| *d)
        .collect()
}

/// Labels each (already deduplicated) detection: true positive when its best
/// IOU against any reference box strictly exceeds the threshold, false
/// positive otherwise.
pub fn match_detections(
    preds: &[Detection],
    gt: &[BoundingBox],
    iou_threshold: f64,
) -> Vec<MatchLabel> {
    preds
        .iter()
        .map(|d| {
            let hit = gt.iter().any(|g| iou(&d.bbox, g) > iou_threshold);
            if hit {
                MatchLabel::TruePositive
            } else {
                MatchLabel::FalsePositive
            }
        })
        .collect()
}

/// The leaderboard metric: `0.75 * AUC + 0.25 * sensitivity(0.25 FP/image)`.
pub fn rank_metric(auc: f64, sens_at_025: f64) -> f64 {
    0.75 * auc + 0.25 * sens_at_025
}

pub(crate) fn annotation_index<'a>(
    gts: &'a [ImageAnnotations],
) -> Result<HashMap<&'a str, &'a ImageAnnotations>, MetricsError> {
    let mut index = HashMap::with_capacity(gts.len());
    for gt in gts {
        if index.insert(gt.image_id.as_str(), gt).is_some() {
            return Err(MetricsError::DuplicateImageId(gt.image_id.clone()));
        }
    }
    Ok(index)
}

/// Full detection-track scoring: AUC over image scores, FROC sensitivities
/// at 0.125 / 0.25 / 0.5 FP per image, and the rank metric.
///
/// The reference list defines the image set; images without a prediction
/// entry are scored as having no detections. Requires at least one nodule
/// image and one non-nodule image.
pub fn evaluate(
    preds: &[ImagePredictions],
    gts: &[ImageAnnotations],
    options: EvalOptions,
) -> Result<EvalReport, MetricsError> {
    evaluate_full(preds, gts, options).map(|e| e.report)
}

/// As [`evaluate`], returning the underlying ROC and FROC curves as well.
pub fn evaluate_full(
    preds: &[ImagePredictions],
    gts: &[ImageAnnotations],
    options: EvalOptions,
) -> Result<Evaluation, MetricsError> {
    if gts.is_empty() {
        return Err(MetricsError::NoImages);
    }
    let index = annotation_index(gts)?;
    let mut pred_index: HashMap<&str, &ImagePredictions> = HashMap::with_capacity(preds.len());
    for p in preds {
        if !index.contains_key(p.image_id.as_str()) {
            return Err(MetricsError::UnknownImageId(p.image_id.clone()));
        }
        if pred_index.insert(p.image_id.as_str(), p).is_some() {
            return Err(MetricsError::DuplicateImageId(p.image_id.clone()));
        }
    }

    let empty = |id: &str| ImagePredictions {
        image_id: id.to_string(),
        detections: Vec::new(),
    };
    let scores: Vec<f64> = gts
        .iter()
        .map(|gt| {
            pred_index
                .get(gt.image_id.as_str())
                .map(|p| image_score(p))
                .unwrap_or_else(|| image_score(&empty(&gt.image_id)))
        })
        .collect();
    let labels: Vec<bool> = gts.iter().map(|gt| !gt.nodules.is_empty()).collect();

    let roc = compute_roc(&scores, &labels)?;
    let froc = compute_froc(preds, gts, options.iou_threshold)?;

    let sens_at_0125 = sensitivity_at_with(&froc, 0.125, options.interpolation)?;
    let sens_at_025 = sensitivity_at_with(&froc, 0.25, options.interpolation)?;
    let sens_at_05 = sensitivity_at_with(&froc, 0.5, options.interpolation)?;

    let n_nodule_images = labels.iter().filter(|&&l| l).count();
    let report = EvalReport {
        auc: roc.auc,
        sens_at_0125,
        sens_at_025,
        sens_at_05,
        rank_metric: rank_metric(roc.auc, sens_at_025),
        n_images: gts.len(),
        n_nodule_images,
        n_nodules: gts.iter().map(|g| g.nodules.len()).sum(),
    };
    Ok(Evaluation { report, roc, froc })
}
