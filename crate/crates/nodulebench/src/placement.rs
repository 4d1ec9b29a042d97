//! Nodule location generation: build the anatomically plausible region from
//! lung and heart masks, then sample 1-3 square boxes of 7-17 mm inside it.
//!
//! The region is the union of the lung fields, the heart clipped to the
//! lowest lung row, and per lung a filled rectangle from the topmost heart
//! row down to that lung's lowest row spanning the lung's horizontal extent.
//! The rectangles admit retro-cardiac and retro-diaphragmatic lung that the
//! segmentation cannot see.

use thiserror::Error;

use crate::geometry::{iou, mm_to_pixels, round_half_up, BinaryMask, BoundingBox, PixelSpacing};
use crate::rng::SeededRng;

pub use crate::rng::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("lung mask has no set bits")]
    EmptyLungMask,
    #[error("lung and heart masks have different dimensions")]
    MaskDimensionMismatch,
    #[error("no valid box position found after {attempts} attempts (box {placed} of {requested})")]
    PlacementExhausted {
        attempts: u32,
        placed: usize,
        requested: usize,
    },
    #[error("a box of the minimum size does not fit inside the {width}x{height} image")]
    BoxTooLarge { width: usize, height: usize },
    #[error("allowed region has no set bits")]
    EmptyRegion,
}

/// Mask of pixels where a synthetic nodule box center may fall.
/// Always a superset of the lung mask.
#[derive(Debug, Clone, PartialEq)]
pub struct AllowedRegion {
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, Copy)]
pub struct PlacementParams {
    /// Box side range in millimetres.
    pub min_size_mm: f64,
    pub max_size_mm: f64,
    /// Boxes per image, drawn uniformly in this inclusive range.
    pub min_count: u32,
    pub max_count: u32,
    pub seed: u64,
    /// Rejection-sampling budget per box.
    pub max_attempts: u32,
    /// When set, every box pixel must lie inside the region, not only the
    /// center.
    pub strict_inside_region: bool,
}

impl Default for PlacementParams {
    fn default() -> Self {
        Self {
            min_size_mm: 7.0,
            max_size_mm: 17.0,
            min_count: 1,
            max_count: 3,
            seed: 0,
            max_attempts: 1000,
            strict_inside_region: false,
        }
    }
}

struct Component {
    pixels: Vec<(usize, usize)>,
    min_col: usize,
    max_col: usize,
    max_row: usize,
}

/// 4-connected components, largest first.
fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut components = Vec::new();
    for start_y in 0..h {
        for start_x in 0..w {
            if !mask.get(start_x, start_y) || seen[start_y * w + start_x] {
                continue;
            }
            let mut pixels = Vec::new();
            let mut stack = vec![(start_x, start_y)];
            seen[start_y * w + start_x] = true;
            while let Some((x, y)) = stack.pop() {
                pixels.push((x, y));
                let mut push = |nx: usize, ny: usize| {
                    if mask.get(nx, ny) && !seen[ny * w + nx] {
                        seen[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                };
                if x > 0 {
                    push(x - 1, y);
                }
                if x + 1 < w {
                    push(x + 1, y);
                }
                if y > 0 {
                    push(x, y - 1);
                }
                if y + 1 < h {
                    push(x, y + 1);
                }
            }
            let min_col = pixels.iter().map(|&(x, _)| x).min().unwrap();
            let max_col = pixels.iter().map(|&(x, _)| x).max().unwrap();
            let max_row = pixels.iter().map(|&(_, y)| y).max().unwrap();
            components.push(Component {
                pixels,
                min_col,
                max_col,
                max_row,
            });
        }
    }
    components.sort_by(|a, b| b.pixels.len().cmp(&a.pixels.len()));
    components
}

/// Builds the allowed placement region from lung and heart segmentations.
///
/// The two largest lung components are taken as the individual lungs (in a
/// PA radiograph the anatomical right lung has the smaller centroid column).
/// With an empty heart mask the clip and rectangles degenerate and the
/// region equals the lung mask.
pub fn allowed_region(
    lungs: &BinaryMask,
    heart: &BinaryMask,
) -> Result<AllowedRegion, PlacementError> {
    if lungs.width() != heart.width() || lungs.height() != heart.height() {
        return Err(PlacementError::MaskDimensionMismatch);
    }
    if lungs.is_empty() {
        return Err(PlacementError::EmptyLungMask);
    }

    let mut region = lungs.clone();
    let components = connected_components(lungs);
    let lung_components: &[Component] = if components.len() >= 2 {
        &components[..2]
    } else {
        log::warn!("lung mask has a single connected component; using its full extent");
        &components[..1]
    };

    let lowest_lung_row = components
        .iter()
        .map(|c| c.max_row)
        .max()
        .expect("nonempty mask");

    // Heart, clipped to rows at or above the lowest lung point.
    let mut heart_top_row: Option<usize> = None;
    for y in 0..heart.height() {
        for x in 0..heart.width() {
            if heart.get(x, y) {
                heart_top_row = Some(heart_top_row.map_or(y, |t: usize| t.min(y)));
                if y <= lowest_lung_row {
                    region.set(x, y, true);
                }
            }
        }
    }

    // Per lung: fill the rectangle from the topmost heart row down to the
    // lung's lowest row, across the lung's horizontal extent.
    if let Some(top) = heart_top_row {
        for lung in lung_components {
            for y in top..=lung.max_row {
                for x in lung.min_col..=lung.max_col {
                    region.set(x, y, true);
                }
            }
        }
    }

    Ok(AllowedRegion { mask: region })
}

/// Samples square, pairwise-disjoint nodule boxes with centers uniformly
/// distributed over the region.
///
/// Draw order per seed (part of the reproducibility contract): first the box
/// count, then per attempt the side length in millimetres followed by the
/// center pixel index. An attempt is rejected when the box leaves the image,
/// intersects an accepted box, or (in strict mode) leaves the region; each
/// box gets `max_attempts` attempts.
pub fn sample_boxes(
    region: &AllowedRegion,
    spacing: PixelSpacing,
    params: &PlacementParams,
) -> Result<Vec<BoundingBox>, PlacementError> {
    let pixels = region.mask.set_pixels();
    if pixels.is_empty() {
        return Err(PlacementError::EmptyRegion);
    }
    let (img_w, img_h) = (region.mask.width(), region.mask.height());
    let min_side = side_in_pixels(params.min_size_mm, spacing);
    if min_side > img_w as i64 || min_side > img_h as i64 {
        return Err(PlacementError::BoxTooLarge {
            width: img_w,
            height: img_h,
        });
    }

    let mut rng = SeededRng::from_seed(params.seed);
    let count = rng.uniform_inclusive(params.min_count as u64, params.max_count as u64) as usize;

    let mut boxes: Vec<BoundingBox> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut accepted = false;
        for _ in 0..params.max_attempts {
            let size_mm = rng.uniform_range(params.min_size_mm, params.max_size_mm);
            let (cx, cy) = pixels[rng.uniform_below(pixels.len() as u64) as usize];
            let side = side_in_pixels(size_mm, spacing);
            let left = cx as i64 - side / 2;
            let top = cy as i64 - side / 2;
            if left < 0 || top < 0 || left + side > img_w as i64 || top + side > img_h as i64 {
                continue;
            }
            let candidate =
                BoundingBox::new(left as f64, top as f64, side as f64, side as f64);
            if boxes.iter().any(|b| iou(b, &candidate) > 0.0) {
                continue;
            }
            if params.strict_inside_region && !box_inside_region(&region.mask, &candidate) {
                continue;
            }
            boxes.push(candidate);
            accepted = true;
            break;
        }
        if !accepted {
            return Err(PlacementError::PlacementExhausted {
                attempts: params.max_attempts,
                placed: boxes.len(),
                requested: count,
            });
        }
    }
    Ok(boxes)
}

fn side_in_pixels(size_mm: f64, spacing: PixelSpacing) -> i64 {
    round_half_up(mm_to_pixels(size_mm, spacing)).max(1)
}

fn box_inside_region(mask: &BinaryMask, b: &BoundingBox) -> bool {
    let (x0, y0) = (b.x as usize, b.y as usize);
    let (x1, y1) = ((b.x + b.width) as usize, (b.y + b.height) as usize);
    for y in y0..y1 {
        for x in x0..x1 {
            if !mask.get(x, y) {
                return false;
            }
        }
    }
    true
}
