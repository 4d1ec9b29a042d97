//! Free-response operating curve: sensitivity versus false positives per
//! image, sweeping the detection probability threshold.

use super::{
    annotation_index, dedup_predictions, match_detections, ImageAnnotations, ImagePredictions,
    MatchLabel, MetricsError,
};
use crate::geometry::iou;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrocPoint {
    pub fp_per_image: f64,
    pub sensitivity: f64,
    pub threshold: f64,
}

/// Points ordered by descending threshold; both rates are nondecreasing
/// along the curve. The first point is the `(0, 0)` anchor at +inf.
#[derive(Debug, Clone, PartialEq)]
pub struct FrocCurve {
    pub points: Vec<FrocPoint>,
}

/// How to read sensitivities between curve points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Straight line between bracketing points (default).
    Linear,
    /// Last point at or below the queried rate.
    Step,
}

/// Per-image tally after dedup and matching.
struct ImageTally {
    /// Probabilities of surviving detections (threshold sweep values).
    det_probs: Vec<f64>,
    /// Probabilities of surviving false-positive detections.
    fp_probs: Vec<f64>,
    /// Per reference box that was matched at all: the highest probability
    /// among surviving detections overlapping it. The box counts as hit
    /// once the sweep threshold drops to this value.
    hit_thresholds: Vec<f64>,
}

fn tally_image(
    preds: &ImagePredictions,
    gt: &ImageAnnotations,
    iou_threshold: f64,
) -> ImageTally {
    let surviving = dedup_predictions(&preds.detections, &gt.nodules, iou_threshold);
    let labels = match_detections(&surviving, &gt.nodules, iou_threshold);
    let det_probs = surviving.iter().map(|d| d.probability).collect();
    let fp_probs = surviving
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == MatchLabel::FalsePositive)
        .map(|(d, _)| d.probability)
        .collect();
    let hit_thresholds = gt
        .nodules
        .iter()
        .filter_map(|g| {
            surviving
                .iter()
                .filter(|d| iou(&d.bbox, g) > iou_threshold)
                .map(|d| d.probability)
                .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
        })
        .collect();
    ImageTally {
        det_probs,
        fp_probs,
        hit_thresholds,
    }
}

/// Computes the FROC curve with the challenge matching rules: per image,
/// overlapping predictions are deduplicated per reference box, survivors are
/// labelled TP/FP at strict `iou > threshold`, and the threshold sweep runs
/// over the distinct surviving probabilities descending. The false-positive
/// rate divides by the total image count, nodule and non-nodule alike.
pub fn compute_froc(
    preds: &[ImagePredictions],
    gts: &[ImageAnnotations],
    iou_threshold: f64,
) -> Result<FrocCurve, MetricsError> {
    if gts.is_empty() {
        return Err(MetricsError::NoImages);
    }
    let index = annotation_index(gts)?;
    let total_nodules: usize = gts.iter().map(|g| g.nodules.len()).sum();
    if total_nodules == 0 {
        return Err(MetricsError::NoNodulesInReference);
    }
    {
        let mut seen = std::collections::HashSet::new();
        for p in preds {
            if !index.contains_key(p.image_id.as_str()) {
                return Err(MetricsError::UnknownImageId(p.image_id.clone()));
            }
            if !seen.insert(p.image_id.as_str()) {
                return Err(MetricsError::DuplicateImageId(p.image_id.clone()));
            }
        }
    }

    // Images are independent; the tallies are merged in input order so the
    // result is identical at any parallelism degree.
    #[cfg(feature = "parallel")]
    let tallies: Vec<ImageTally> = preds
        .par_iter()
        .map(|p| tally_image(p, index[p.image_id.as_str()], iou_threshold))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let tallies: Vec<ImageTally> = preds
        .iter()
        .map(|p| tally_image(p, index[p.image_id.as_str()], iou_threshold))
        .collect();

    let mut det_probs = Vec::new();
    let mut fp_probs = Vec::new();
    let mut hit_thresholds = Vec::new();
    for t in tallies {
        det_probs.extend(t.det_probs);
        fp_probs.extend(t.fp_probs);
        hit_thresholds.extend(t.hit_thresholds);
    }

    // Descending sort; ties enter the curve together at one threshold step.
    det_probs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    fp_probs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    hit_thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let n_images = gts.len() as f64;
    let mut points = vec![FrocPoint {
        fp_per_image: 0.0,
        sensitivity: 0.0,
        threshold: f64::INFINITY,
    }];
    let mut fp_idx = 0;
    let mut hit_idx = 0;
    let mut i = 0;
    while i < det_probs.len() {
        let threshold = det_probs[i];
        while i < det_probs.len() && det_probs[i] == threshold {
            i += 1;
        }
        while fp_idx < fp_probs.len() && fp_probs[fp_idx] >= threshold {
            fp_idx += 1;
        }
        while hit_idx < hit_thresholds.len() && hit_thresholds[hit_idx] >= threshold {
            hit_idx += 1;
        }
        points.push(FrocPoint {
            fp_per_image: fp_idx as f64 / n_images,
            sensitivity: hit_idx as f64 / total_nodules as f64,
            threshold,
        });
    }
    Ok(FrocCurve { points })
}

/// Sensitivity at the requested false-positive rate, linearly interpolated.
///
/// Where the curve does not extend to the requested rate, the curve's
/// highest sensitivity is returned (the challenge plateau rule). Below the
/// first point, the sensitivity scales linearly from `(0, 0)`.
pub fn sensitivity_at(curve: &FrocCurve, fp_rate: f64) -> Result<f64, MetricsError> {
    sensitivity_at_with(curve, fp_rate, Interpolation::Linear)
}

/// As [`sensitivity_at`] with an explicit interpolation mode.
pub fn sensitivity_at_with(
    curve: &FrocCurve,
    fp_rate: f64,
    interpolation: Interpolation,
) -> Result<f64, MetricsError> {
    if curve.points.is_empty() {
        return Err(MetricsError::EmptyCurve);
    }
    let points = &curve.points;

    // Highest sensitivity at or below the queried rate.
    let below = points
        .iter()
        .rev()
        .find(|p| p.fp_per_image <= fp_rate);
    let above = points.iter().find(|p| p.fp_per_image > fp_rate);

    match interpolation {
        Interpolation::Step => Ok(below.map(|p| p.sensitivity).unwrap_or(0.0)),
        Interpolation::Linear => match (below, above) {
            (Some(lo), Some(hi)) => {
                let span = hi.fp_per_image - lo.fp_per_image;
                let t = (fp_rate - lo.fp_per_image) / span;
                Ok(lo.sensitivity + t * (hi.sensitivity - lo.sensitivity))
            }
            // Plateau: curve never reaches the requested rate.
            (Some(lo), None) => Ok(lo.sensitivity),
            // Entire curve lies right of the query: scale from (0, 0).
            (None, Some(hi)) => Ok(hi.sensitivity * fp_rate / hi.fp_per_image),
            (None, None) => unreachable!("nonempty curve"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundingBox, Detection};

    fn det(x: f64, y: f64, w: f64, h: f64, p: f64) -> Detection {
        Detection::new(BoundingBox::new(x, y, w, h), p)
    }

    fn curve(points: &[(f64, f64, f64)]) -> FrocCurve {
        FrocCurve {
            points: points
                .iter()
                .map(|&(fp, s, t)| FrocPoint {
                    fp_per_image: fp,
                    sensitivity: s,
                    threshold: t,
                })
                .collect(),
        }
    }

    #[test]
    fn single_true_positive() {
        let gts = vec![ImageAnnotations {
            image_id: "a".into(),
            nodules: vec![BoundingBox::new(0.0, 0.0, 10.0, 10.0)],
        }];
        let preds = vec![ImagePredictions {
            image_id: "a".into(),
            detections: vec![det(0.0, 0.0, 10.0, 10.0, 0.7)],
        }];
        let froc = compute_froc(&preds, &gts, 0.2).unwrap();
        assert_eq!(froc.points.len(), 2);
        assert_eq!(froc.points[0].fp_per_image, 0.0);
        assert_eq!(froc.points[0].sensitivity, 0.0);
        assert_eq!(froc.points[0].threshold, f64::INFINITY);
        assert_eq!(froc.points[1].fp_per_image, 0.0);
        assert_eq!(froc.points[1].sensitivity, 1.0);
        assert_eq!(froc.points[1].threshold, 0.7);
    }

    #[test]
    fn hit_and_false_positive_across_images() {
        let gts = vec![
            ImageAnnotations {
                image_id: "a".into(),
                nodules: vec![BoundingBox::new(0.0, 0.0, 10.0, 10.0)],
            },
            ImageAnnotations {
                image_id: "b".into(),
                nodules: vec![],
            },
        ];
        let preds = vec![
            ImagePredictions {
                image_id: "a".into(),
                detections: vec![det(0.0, 0.0, 10.0, 10.0, 0.9)],
            },
            ImagePredictions {
                image_id: "b".into(),
                detections: vec![det(50.0, 50.0, 10.0, 10.0, 0.5)],
            },
        ];
        let froc = compute_froc(&preds, &gts, 0.2).unwrap();
        let pts: Vec<(f64, f64, f64)> = froc.points[1..]
            .iter()
            .map(|p| (p.fp_per_image, p.sensitivity, p.threshold))
            .collect();
        assert_eq!(pts, vec![(0.0, 1.0, 0.9), (0.5, 1.0, 0.5)]);
    }

    #[test]
    fn rejects_empty_reference_nodules() {
        let gts = vec![ImageAnnotations {
            image_id: "a".into(),
            nodules: vec![],
        }];
        assert_eq!(
            compute_froc(&[], &gts, 0.2),
            Err(MetricsError::NoNodulesInReference)
        );
    }

    #[test]
    fn plateau_rule() {
        let c = curve(&[(0.0, 0.0, f64::INFINITY), (0.1, 0.5, 0.9), (0.3, 0.8, 0.4)]);
        assert_eq!(sensitivity_at(&c, 0.5).unwrap(), 0.8);
    }

    #[test]
    fn exact_point_query() {
        let c = curve(&[(0.0, 0.0, f64::INFINITY), (0.25, 0.6, 0.5)]);
        assert_eq!(sensitivity_at(&c, 0.25).unwrap(), 0.6);
    }

    #[test]
    fn linear_interpolation_between_points() {
        let c = curve(&[(0.2, 0.4, 0.8), (0.3, 0.6, 0.5)]);
        let s = sensitivity_at(&c, 0.25).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
    }

    #[test]
    fn below_first_point_scales_from_origin() {
        // Hand-built curve without the (0,0) anchor.
        let c = curve(&[(0.4, 0.8, 0.5)]);
        let s = sensitivity_at(&c, 0.1).unwrap();
        assert!((s - 0.2).abs() < 1e-12);
    }

    #[test]
    fn step_mode() {
        let c = curve(&[(0.0, 0.0, f64::INFINITY), (0.2, 0.4, 0.8), (0.3, 0.6, 0.5)]);
        assert_eq!(
            sensitivity_at_with(&c, 0.25, Interpolation::Step).unwrap(),
            0.4
        );
        assert_eq!(
            sensitivity_at_with(&c, 0.3, Interpolation::Step).unwrap(),
            0.6
        );
    }

    #[test]
    fn empty_curve_errors() {
        let c = FrocCurve { points: vec![] };
        assert_eq!(sensitivity_at(&c, 0.25), Err(MetricsError::EmptyCurve));
    }

    #[test]
    fn monotone_along_curve() {
        let gts = vec![
            ImageAnnotations {
                image_id: "a".into(),
                nodules: vec![
                    BoundingBox::new(0.0, 0.0, 10.0, 10.0),
                    BoundingBox::new(30.0, 30.0, 10.0, 10.0),
                ],
            },
            ImageAnnotations {
                image_id: "b".into(),
                nodules: vec![BoundingBox::new(5.0, 5.0, 8.0, 8.0)],
            },
        ];
        let preds = vec![
            ImagePredictions {
                image_id: "a".into(),
                detections: vec![
                    det(0.0, 0.0, 10.0, 10.0, 0.9),
                    det(60.0, 60.0, 5.0, 5.0, 0.6),
                    det(31.0, 30.0, 10.0, 10.0, 0.3),
                ],
            },
            ImagePredictions {
                image_id: "b".into(),
                detections: vec![det(70.0, 5.0, 8.0, 8.0, 0.45)],
            },
        ];
        let froc = compute_froc(&preds, &gts, 0.2).unwrap();
        for w in froc.points.windows(2) {
            assert!(w[1].fp_per_image >= w[0].fp_per_image);
            assert!(w[1].sensitivity >= w[0].sensitivity);
            assert!(w[1].threshold <= w[0].threshold);
        }
    }
}
