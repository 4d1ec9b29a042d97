//! Prediction and ground-truth files: a JSON document with a top-level
//! `images` array; each entry has an `id` and a `boxes` array of
//! `{x, y, width, height, probability?}`. Ground truth omits `probability`.
//!
//! Writing is canonical: two-space indentation, fixed field order,
//! probabilities rounded to six decimals.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::geometry::{BoundingBox, Detection};
use crate::metrics::{ImageAnnotations, ImagePredictions};

#[derive(Debug, Serialize, Deserialize)]
struct FileRoot {
    images: Vec<FileImage>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileImage {
    id: String,
    boxes: Vec<FileBox>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FileBox {
    x: f64,
    y: f64,
    width: f64,
    height: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    probability: Option<f64>,
}

fn parse_root(path: &Path) -> Result<FileRoot, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        FormatError::parse(
            path,
            format!("line {}, column {}: {}", e.line(), e.column(), e),
        )
    })
}

fn check_box(problems: &mut Vec<String>, image_id: &str, index: usize, b: &FileBox) {
    let bbox = BoundingBox::new(b.x, b.y, b.width, b.height);
    if let Err(e) = bbox.validate() {
        problems.push(format!("image {image_id:?} box {index}: {e}"));
    }
    if let Some(p) = b.probability {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            problems.push(format!(
                "image {image_id:?} box {index}: probability {p} outside [0, 1]"
            ));
        }
    }
}

fn check_unique_ids(problems: &mut Vec<String>, root: &FileRoot) {
    let mut seen = std::collections::HashSet::new();
    for image in &root.images {
        if !seen.insert(image.id.as_str()) {
            problems.push(format!("duplicate image id {:?}", image.id));
        }
    }
}

/// Loads a prediction file. Every box must carry a probability in `[0, 1]`
/// and positive extents; violations are reported together.
pub fn load_predictions(path: &Path) -> Result<Vec<ImagePredictions>, FormatError> {
    let root = parse_root(path)?;
    let mut problems = Vec::new();
    check_unique_ids(&mut problems, &root);
    for image in &root.images {
        for (i, b) in image.boxes.iter().enumerate() {
            check_box(&mut problems, &image.id, i, b);
            if b.probability.is_none() {
                problems.push(format!(
                    "image {:?} box {i}: prediction box has no probability",
                    image.id
                ));
            }
        }
    }
    if !problems.is_empty() {
        return Err(FormatError::Validation {
            path: path.to_path_buf(),
            problems,
        });
    }
    Ok(root
        .images
        .into_iter()
        .map(|image| ImagePredictions {
            image_id: image.id,
            detections: image
                .boxes
                .into_iter()
                .map(|b| {
                    Detection::new(
                        BoundingBox::new(b.x, b.y, b.width, b.height),
                        b.probability.expect("validated above"),
                    )
                })
                .collect(),
        })
        .collect())
}

/// Loads a ground-truth file. Probabilities, if present, are ignored.
pub fn load_ground_truth(path: &Path) -> Result<Vec<ImageAnnotations>, FormatError> {
    let root = parse_root(path)?;
    let mut problems = Vec::new();
    check_unique_ids(&mut problems, &root);
    for image in &root.images {
        for (i, b) in image.boxes.iter().enumerate() {
            check_box(&mut problems, &image.id, i, b);
        }
    }
    if !problems.is_empty() {
        return Err(FormatError::Validation {
            path: path.to_path_buf(),
            problems,
        });
    }
    Ok(root
        .images
        .into_iter()
        .map(|image| ImageAnnotations {
            image_id: image.id,
            nodules: image
                .boxes
                .into_iter()
                .map(|b| BoundingBox::new(b.x, b.y, b.width, b.height))
                .collect(),
        })
        .collect())
}

fn round6(p: f64) -> f64 {
    (p * 1e6).round() / 1e6
}

fn write_root(path: &Path, root: &FileRoot) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(root).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

/// Writes predictions canonically (probabilities at six decimals).
pub fn save_predictions(path: &Path, preds: &[ImagePredictions]) -> Result<(), FormatError> {
    let root = FileRoot {
        images: preds
            .iter()
            .map(|p| FileImage {
                id: p.image_id.clone(),
                boxes: p
                    .detections
                    .iter()
                    .map(|d| FileBox {
                        x: d.bbox.x,
                        y: d.bbox.y,
                        width: d.bbox.width,
                        height: d.bbox.height,
                        probability: Some(round6(d.probability)),
                    })
                    .collect(),
            })
            .collect(),
    };
    write_root(path, &root)
}

/// Writes ground truth canonically (no probability field).
pub fn save_ground_truth(path: &Path, gts: &[ImageAnnotations]) -> Result<(), FormatError> {
    let root = FileRoot {
        images: gts
            .iter()
            .map(|g| FileImage {
                id: g.image_id.clone(),
                boxes: g
                    .nodules
                    .iter()
                    .map(|b| FileBox {
                        x: b.x,
                        y: b.y,
                        width: b.width,
                        height: b.height,
                        probability: None,
                    })
                    .collect(),
            })
            .collect(),
    };
    write_root(path, &root)
}
