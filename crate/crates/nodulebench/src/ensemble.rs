//! Fusing prediction sets from multiple models: greedy non-maximum
//! suppression and weighted box fusion.
//!
//! Both are single-class (nodule) and deterministic: detections are
//! processed in the canonical order (probability descending, then left edge,
//! then top edge), so identical inputs produce identical outputs at any
//! parallelism degree.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::geometry::{iou, BoundingBox, Detection};
use crate::metrics::{det_order, ImagePredictions};

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("model weights are all zero")]
    AllZeroWeights,
    #[error("no models given")]
    NoModels,
}

/// One model's predictions across a set of images, with its fusion weight.
#[derive(Debug, Clone)]
pub struct ModelPredictions {
    pub model_id: String,
    pub weight: f64,
    pub images: Vec<ImagePredictions>,
}

impl ModelPredictions {
    pub fn new(model_id: impl Into<String>, images: Vec<ImagePredictions>) -> Self {
        Self {
            model_id: model_id.into(),
            weight: 1.0,
            images,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }
}

/// How a cluster's fused score is computed from its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Plain mean of member probabilities.
    Average,
    /// Model-weight-weighted mean of member probabilities.
    WeightedAverage,
}

#[derive(Debug, Clone, Copy)]
pub struct FusionParams {
    /// Cluster membership: a detection joins the first cluster whose running
    /// fused box overlaps it above this threshold.
    pub iou_threshold: f64,
    pub score_mode: ScoreMode,
    /// Rescale fused scores by `min(n_members, n_models) / n_models`,
    /// penalizing boxes confirmed by few models.
    pub count_rescale: bool,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            score_mode: ScoreMode::WeightedAverage,
            count_rescale: true,
        }
    }
}

/// Greedy non-maximum suppression: repeatedly emit the highest-probability
/// remaining detection and drop everything overlapping it above the
/// threshold. The emitted set is an antichain under the overlap relation.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted: Vec<Detection> = dets.to_vec();
    sorted.sort_by(det_order);
    let mut kept: Vec<Detection> = Vec::new();
    for d in sorted {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

struct Cluster {
    /// (model weight, probability, box) per member.
    members: Vec<(f64, f64, BoundingBox)>,
    fused: Detection,
}

impl Cluster {
    fn new(weight: f64, det: Detection) -> Self {
        Self {
            members: vec![(weight, det.probability, det.bbox)],
            fused: det,
        }
    }

    fn add(&mut self, weight: f64, det: Detection, params: &FusionParams) {
        self.members.push((weight, det.probability, det.bbox));
        self.refuse(params);
    }

    /// Recomputes the fused box and score from all members. Coordinates are
    /// averaged with weight `model_weight * probability`; the score is the
    /// (optionally weighted) mean probability.
    fn refuse(&mut self, params: &FusionParams) {
        let mut wsum = 0.0;
        let mut x1 = 0.0;
        let mut y1 = 0.0;
        let mut x2 = 0.0;
        let mut y2 = 0.0;
        for &(w, p, b) in &self.members {
            let cw = w * p;
            wsum += cw;
            x1 += cw * b.x;
            y1 += cw * b.y;
            x2 += cw * b.right();
            y2 += cw * b.bottom();
        }
        if wsum > 0.0 {
            self.fused.bbox = BoundingBox::new(
                x1 / wsum,
                y1 / wsum,
                (x2 - x1) / wsum,
                (y2 - y1) / wsum,
            );
        }
        self.fused.probability = match params.score_mode {
            ScoreMode::Average => {
                self.members.iter().map(|&(_, p, _)| p).sum::<f64>() / self.members.len() as f64
            }
            ScoreMode::WeightedAverage => {
                let w_total: f64 = self.members.iter().map(|&(w, _, _)| w).sum();
                self.members.iter().map(|&(w, p, _)| w * p).sum::<f64>() / w_total
            }
        };
    }

    fn finalized(&self, n_models: usize, params: &FusionParams) -> Detection {
        let mut out = self.fused;
        if params.count_rescale {
            let members = self.members.len().min(n_models) as f64;
            out.probability *= members / n_models as f64;
        }
        out
    }
}

/// Weighted box fusion across models, image by image.
///
/// Per image, all detections are pooled in canonical order and greedily
/// assigned to the first cluster whose running fused box overlaps above the
/// threshold; otherwise they start a new cluster. Fused coordinates are the
/// `(weight x probability)`-weighted average of member edges. The image set
/// is the union across models; output images are ordered by id.
pub fn wbf(
    models: &[ModelPredictions],
    params: &FusionParams,
) -> Result<Vec<ImagePredictions>, EnsembleError> {
    if models.is_empty() {
        return Err(EnsembleError::NoModels);
    }
    if models.iter().all(|m| m.weight == 0.0) {
        return Err(EnsembleError::AllZeroWeights);
    }

    // image id -> pooled (model weight, detection), in model order.
    let mut pools: BTreeMap<&str, Vec<(f64, Detection)>> = BTreeMap::new();
    for model in models {
        for image in &model.images {
            let pool = pools.entry(image.image_id.as_str()).or_default();
            for det in &image.detections {
                pool.push((model.weight, *det));
            }
        }
    }

    let n_models = models.len();
    let mut out = Vec::with_capacity(pools.len());
    for (image_id, mut pool) in pools {
        pool.sort_by(|a, b| det_order(&a.1, &b.1));
        let mut clusters: Vec<Cluster> = Vec::new();
        for (weight, det) in pool {
            match clusters
                .iter_mut()
                .find(|c| iou(&c.fused.bbox, &det.bbox) > params.iou_threshold)
            {
                Some(cluster) => cluster.add(weight, det, params),
                None => clusters.push(Cluster::new(weight, det)),
            }
        }
        let detections = clusters
            .iter()
            .map(|c| c.finalized(n_models, params))
            .collect();
        out.push(ImagePredictions {
            image_id: image_id.to_string(),
            detections,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(x: f64, y: f64, w: f64, h: f64, p: f64) -> Detection {
        Detection::new(BoundingBox::new(x, y, w, h), p)
    }

    fn image(id: &str, detections: Vec<Detection>) -> ImagePredictions {
        ImagePredictions {
            image_id: id.into(),
            detections,
        }
    }

    #[test]
    fn nms_single_detection_unchanged() {
        let d = vec![det(0.0, 0.0, 10.0, 10.0, 0.7)];
        assert_eq!(nms(&d, 0.5), d);
    }

    #[test]
    fn nms_disjoint_detections_kept() {
        let d = vec![
            det(0.0, 0.0, 10.0, 10.0, 0.7),
            det(50.0, 50.0, 10.0, 10.0, 0.9),
        ];
        let out = nms(&d, 0.5);
        assert_eq!(out.len(), 2);
        // Output comes back in probability order.
        assert_eq!(out[0].probability, 0.9);
    }

    #[test]
    fn nms_suppresses_heavy_overlap() {
        // iou = 90/(200-90) = 0.818 > 0.5.
        let d = vec![
            det(0.0, 0.0, 10.0, 10.0, 0.9),
            det(1.0, 0.0, 10.0, 10.0, 0.4),
        ];
        let out = nms(&d, 0.5);
        assert_eq!(out, vec![d[0]]);
    }

    #[test]
    fn wbf_single_model_identity() {
        let model = ModelPredictions::new(
            "m1",
            vec![image(
                "a",
                vec![
                    det(0.0, 0.0, 10.0, 10.0, 0.8),
                    det(50.0, 50.0, 10.0, 10.0, 0.3),
                ],
            )],
        );
        let params = FusionParams {
            count_rescale: false,
            ..FusionParams::default()
        };
        let out = wbf(&[model.clone()], &params).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].detections, model.images[0].detections);
    }

    #[test]
    fn wbf_identical_box_scores_average() {
        let b = det(10.0, 10.0, 20.0, 20.0, 0.6);
        let b2 = det(10.0, 10.0, 20.0, 20.0, 0.8);
        let models = [
            ModelPredictions::new("m1", vec![image("a", vec![b])]),
            ModelPredictions::new("m2", vec![image("a", vec![b2])]),
        ];
        let params = FusionParams {
            count_rescale: false,
            ..FusionParams::default()
        };
        let out = wbf(&models, &params).unwrap();
        assert_eq!(out[0].detections.len(), 1);
        let fused = out[0].detections[0];
        assert_eq!(fused.bbox, b.bbox);
        assert!((fused.probability - 0.7).abs() < 1e-12);
    }

    #[test]
    fn wbf_score_weighted_left_edge() {
        // Boxes (0,0,10,10,p=0.2) and (2,0,10,10,p=0.6), equal model weights:
        // fused left edge = (0.2*0 + 0.6*2) / 0.8 = 1.5.
        let models = [
            ModelPredictions::new("m1", vec![image("a", vec![det(0.0, 0.0, 10.0, 10.0, 0.2)])]),
            ModelPredictions::new("m2", vec![image("a", vec![det(2.0, 0.0, 10.0, 10.0, 0.6)])]),
        ];
        let params = FusionParams {
            count_rescale: false,
            ..FusionParams::default()
        };
        let out = wbf(&models, &params).unwrap();
        assert_eq!(out[0].detections.len(), 1);
        assert!((out[0].detections[0].bbox.x - 1.5).abs() < 1e-12);
    }

    #[test]
    fn wbf_count_rescale_scales_by_member_fraction() {
        let models = [
            ModelPredictions::new("m1", vec![image("a", vec![det(0.0, 0.0, 10.0, 10.0, 0.8)])]),
            ModelPredictions::new("m2", vec![image("a", vec![])]),
        ];
        let out = wbf(&models, &FusionParams::default()).unwrap();
        // One member out of two models: score halves.
        assert!((out[0].detections[0].probability - 0.4).abs() < 1e-12);
    }

    #[test]
    fn wbf_rejects_all_zero_weights() {
        let models = [ModelPredictions::new("m1", vec![]).with_weight(0.0)];
        assert_eq!(
            wbf(&models, &FusionParams::default()),
            Err(EnsembleError::AllZeroWeights)
        );
    }

    #[test]
    fn wbf_unions_image_ids() {
        let models = [
            ModelPredictions::new("m1", vec![image("b", vec![det(0.0, 0.0, 5.0, 5.0, 0.5)])]),
            ModelPredictions::new("m2", vec![image("a", vec![det(0.0, 0.0, 5.0, 5.0, 0.5)])]),
        ];
        let out = wbf(&models, &FusionParams::default()).unwrap();
        let ids: Vec<&str> = out.iter().map(|i| i.image_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b"]);
    }

    fn arb_detection() -> impl Strategy<Value = Detection> {
        (
            0.0..100.0f64,
            0.0..100.0f64,
            1.0..30.0f64,
            1.0..30.0f64,
            0.0..=1.0f64,
        )
            .prop_map(|(x, y, w, h, p)| det(x, y, w, h, p))
    }

    proptest! {
        #[test]
        fn nms_output_is_antichain(dets in proptest::collection::vec(arb_detection(), 0..30)) {
            let out = nms(&dets, 0.5);
            for i in 0..out.len() {
                for j in i + 1..out.len() {
                    prop_assert!(iou(&out[i].bbox, &out[j].bbox) <= 0.5);
                }
            }
            prop_assert!(out.len() <= dets.len());
            if let Some(top) = dets.iter().cloned().min_by(det_order) {
                // The top-probability detection always survives.
                prop_assert!(out.contains(&top));
            }
        }

        #[test]
        fn wbf_weight_scaling_invariant(
            dets_a in proptest::collection::vec(arb_detection(), 1..12),
            dets_b in proptest::collection::vec(arb_detection(), 1..12),
            scale in 0.1..10.0f64,
        ) {
            let build = |wa: f64, wb: f64| {
                [
                    ModelPredictions::new("a", vec![image("img", dets_a.clone())]).with_weight(wa),
                    ModelPredictions::new("b", vec![image("img", dets_b.clone())]).with_weight(wb),
                ]
            };
            let params = FusionParams::default();
            let base = wbf(&build(1.0, 2.0), &params).unwrap();
            let scaled = wbf(&build(scale, 2.0 * scale), &params).unwrap();
            prop_assert_eq!(base.len(), scaled.len());
            for (x, y) in base[0].detections.iter().zip(&scaled[0].detections) {
                prop_assert!((x.bbox.x - y.bbox.x).abs() < 1e-9);
                prop_assert!((x.bbox.y - y.bbox.y).abs() < 1e-9);
                prop_assert!((x.bbox.width - y.bbox.width).abs() < 1e-9);
                prop_assert!((x.bbox.height - y.bbox.height).abs() < 1e-9);
                prop_assert!((x.probability - y.probability).abs() < 1e-9);
            }
        }

        #[test]
        fn wbf_fused_edges_inside_member_hull(
            dets in proptest::collection::vec(arb_detection(), 1..16),
        ) {
            let models = [ModelPredictions::new("m", vec![image("img", dets.clone())])];
            let params = FusionParams::default();
            let out = wbf(&models, &params).unwrap();
            // Every fused edge lies within the extremes of the pooled inputs.
            let eps = 1e-9;
            let min_x = dets.iter().map(|d| d.bbox.x).fold(f64::INFINITY, f64::min);
            let max_r = dets.iter().map(|d| d.bbox.right()).fold(f64::NEG_INFINITY, f64::max);
            for d in &out[0].detections {
                prop_assert!(d.bbox.x >= min_x - eps && d.bbox.right() <= max_r + eps);
            }
        }
    }
}
