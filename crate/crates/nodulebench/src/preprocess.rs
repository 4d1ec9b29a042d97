//! Radiograph standardization: trim homogeneous borders, normalize
//! intensity, crop to the lung fields, resize to 1024x1024 with
//! aspect-preserving zero padding.
//!
//! Every geometric step is logged in a [`PreprocessRecord`] so annotation
//! boxes can be mapped through the chain in either direction.
//!
//! Intensity normalization is percentile clipping, a simplified substitute
//! for model-driven energy-based normalization: outputs are standardized to
//! `[0, 1]` but not identical to that pipeline's.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    mask_bounding_box, round_half_up, BinaryMask, BoundingBox, GeometryError, GrayImage,
};

pub const OUTPUT_SIZE: usize = 1024;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("nothing would remain after trimming homogeneous borders")]
    FullyHomogeneousImage,
    #[error("image is constant; intensity normalization is undefined")]
    ConstantImage,
    #[error("lung mask has no set bits")]
    EmptyLungMask,
    #[error("lung mask raster does not match the image")]
    MaskDimensionMismatch,
    #[error("box lies entirely outside the crop region")]
    BoxOutsideCrop,
    #[error("percentile bounds must satisfy 0 <= lo < hi <= 100")]
    InvalidPercentiles,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The affine bookkeeping of one preprocessing run. Identity components are
/// used for stages an operation does not perform, so records from individual
/// stages and from the full chain go through the same [`map_box`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub trim_left: usize,
    pub trim_top: usize,
    pub trim_right: usize,
    pub trim_bottom: usize,
    /// Crop rectangle in trimmed-image coordinates: x, y, width, height.
    pub crop: (usize, usize, usize, usize),
    pub scale_x: f64,
    pub scale_y: f64,
    pub pad_left: usize,
    pub pad_top: usize,
    pub out_width: usize,
    pub out_height: usize,
    /// Intensity bounds used for normalization (raw units).
    pub norm_lo: f64,
    pub norm_hi: f64,
    pub inverted: bool,
}

impl PreprocessRecord {
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            trim_left: 0,
            trim_top: 0,
            trim_right: 0,
            trim_bottom: 0,
            crop: (0, 0, width, height),
            scale_x: 1.0,
            scale_y: 1.0,
            pad_left: 0,
            pad_top: 0,
            out_width: width,
            out_height: height,
            norm_lo: 0.0,
            norm_hi: 1.0,
            inverted: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapDirection {
    /// Original-image coordinates to output coordinates.
    Forward,
    /// Output coordinates back to the original image.
    Inverse,
}

#[derive(Debug, Clone, Copy)]
pub struct PreprocessOptions {
    /// Border-trim variance tolerance in intensity-squared units; `None`
    /// selects `1e-6` of the squared dynamic range.
    pub variance_tol: Option<f64>,
    pub lo_percentile: f64,
    pub hi_percentile: f64,
    /// Detect bright-border (inverted) inputs and flip them before
    /// normalization.
    pub detect_inversion: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            variance_tol: None,
            lo_percentile: 0.5,
            hi_percentile: 99.5,
            detect_inversion: true,
        }
    }
}

fn line_variance(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Strips outermost rows and columns whose intensity variance is at or below
/// the tolerance, alternating sides until a fixed point. Fails when the
/// whole image is homogeneous.
pub fn trim_homogeneous_borders(
    img: &GrayImage,
    variance_tol: f64,
) -> Result<(GrayImage, PreprocessRecord), PreprocessError> {
    let (w, h) = (img.width(), img.height());
    let mut left = 0usize;
    let mut top = 0usize;
    let mut right = w;
    let mut bottom = h;

    let row_var = |y: usize, l: usize, r: usize| {
        line_variance((l..r).map(move |x| img.get(x, y)))
    };
    let col_var = |x: usize, t: usize, b: usize| {
        line_variance((t..b).map(move |y| img.get(x, y)))
    };

    loop {
        let mut changed = false;
        // Row decisions need at least two columns, and vice versa, so a
        // single-pixel line is never judged homogeneous by default.
        if bottom - top > 1 && right - left >= 2 && row_var(top, left, right) <= variance_tol {
            top += 1;
            changed = true;
        }
        if bottom - top > 1 && right - left >= 2 && row_var(bottom - 1, left, right) <= variance_tol
        {
            bottom -= 1;
            changed = true;
        }
        if right - left > 1 && bottom - top >= 2 && col_var(left, top, bottom) <= variance_tol {
            left += 1;
            changed = true;
        }
        if right - left > 1 && bottom - top >= 2 && col_var(right - 1, top, bottom) <= variance_tol
        {
            right -= 1;
            changed = true;
        }
        if !changed {
            break;
        }
    }

    let trimmed = img.crop(left, top, right - left, bottom - top);
    let remaining_var = line_variance(trimmed.pixels().iter().copied());
    if remaining_var <= variance_tol {
        return Err(PreprocessError::FullyHomogeneousImage);
    }

    let mut record = PreprocessRecord::identity(trimmed.width(), trimmed.height());
    record.trim_left = left;
    record.trim_top = top;
    record.trim_right = w - right;
    record.trim_bottom = h - bottom;
    Ok((trimmed, record))
}

/// Linear-interpolation percentile of the sorted pixel values, matching the
/// usual numerical-library convention: rank `p/100 * (n-1)`.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = p / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi.min(n - 1)] * frac
}

/// Clips to the given percentiles and rescales affinely to `[0, 1]`.
pub fn normalize_intensity(
    img: &GrayImage,
    lo_pct: f64,
    hi_pct: f64,
) -> Result<(GrayImage, f64, f64), PreprocessError> {
    if !(0.0..=100.0).contains(&lo_pct) || !(0.0..=100.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(PreprocessError::InvalidPercentiles);
    }
    let mut sorted: Vec<f64> = img.pixels().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = percentile(&sorted, lo_pct);
    let hi = percentile(&sorted, hi_pct);
    if hi <= lo {
        return Err(PreprocessError::ConstantImage);
    }
    let span = hi - lo;
    let pixels = img
        .pixels()
        .iter()
        .map(|&v| (v.clamp(lo, hi) - lo) / span)
        .collect();
    let out = GrayImage::new(img.width(), img.height(), pixels, img.spacing())?;
    Ok((out, lo, hi))
}

/// Bright-border heuristic for inverted (air-is-white) inputs: compares the
/// mean of the outer frame against the mean of the central half.
pub fn looks_inverted(img: &GrayImage) -> bool {
    let (w, h) = (img.width(), img.height());
    let frame = (w.min(h) / 10).max(1);
    let mut border_sum = 0.0;
    let mut border_n = 0usize;
    let mut center_sum = 0.0;
    let mut center_n = 0usize;
    for y in 0..h {
        for x in 0..w {
            let v = img.get(x, y);
            if x < frame || y < frame || x >= w - frame || y >= h - frame {
                border_sum += v;
                border_n += 1;
            } else if x >= w / 4 && x < 3 * w / 4 && y >= h / 4 && y < 3 * h / 4 {
                center_sum += v;
                center_n += 1;
            }
        }
    }
    if border_n == 0 || center_n == 0 {
        return false;
    }
    border_sum / border_n as f64 > center_sum / center_n as f64
}

/// Flips the intensity scale in place: `v -> (min + max) - v`.
pub fn invert(img: &mut GrayImage) {
    let min = img.pixels().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = img
        .pixels()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    for v in img.pixels_mut() {
        *v = (min + max) - *v;
    }
}

/// Edge-aligned bilinear resize (pixel centers at `i + 0.5`).
fn resize_bilinear(img: &GrayImage, new_w: usize, new_h: usize) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let mut pixels = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let fy = ((y as f64 + 0.5) * h as f64 / new_h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let dy = fy - y0 as f64;
        for x in 0..new_w {
            let fx = ((x as f64 + 0.5) * w as f64 / new_w as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let dx = fx - x0 as f64;
            let v = img.get(x0, y0) * (1.0 - dx) * (1.0 - dy)
                + img.get(x1, y0) * dx * (1.0 - dy)
                + img.get(x0, y1) * (1.0 - dx) * dy
                + img.get(x1, y1) * dx * dy;
            pixels.push(v);
        }
    }
    GrayImage::new(new_w, new_h, pixels, img.spacing()).expect("consistent dims")
}

/// Crops to the lung-field bounding box, scales the longer side to 1024 and
/// pads the shorter side symmetrically with zeros (odd remainder goes to the
/// bottom/right).
pub fn crop_resize(
    img: &GrayImage,
    lungs: &BinaryMask,
) -> Result<(GrayImage, PreprocessRecord), PreprocessError> {
    if lungs.width() != img.width() || lungs.height() != img.height() {
        return Err(PreprocessError::MaskDimensionMismatch);
    }
    let bbox = mask_bounding_box(lungs).map_err(|_| PreprocessError::EmptyLungMask)?;
    let (cx, cy) = (bbox.x as usize, bbox.y as usize);
    let (cw, ch) = (bbox.width as usize, bbox.height as usize);
    let cropped = img.crop(cx, cy, cw, ch);

    let (new_w, new_h) = if cw >= ch {
        let short = round_half_up(OUTPUT_SIZE as f64 * ch as f64 / cw as f64).max(1) as usize;
        (OUTPUT_SIZE, short)
    } else {
        let short = round_half_up(OUTPUT_SIZE as f64 * cw as f64 / ch as f64).max(1) as usize;
        (short, OUTPUT_SIZE)
    };
    let resized = resize_bilinear(&cropped, new_w, new_h);

    let pad_left = (OUTPUT_SIZE - new_w) / 2;
    let pad_top = (OUTPUT_SIZE - new_h) / 2;
    let mut out = GrayImage::filled(OUTPUT_SIZE, OUTPUT_SIZE, 0.0, img.spacing());
    out.paste(&resized, pad_left, pad_top);

    let mut record = PreprocessRecord::identity(img.width(), img.height());
    record.crop = (cx, cy, cw, ch);
    record.scale_x = new_w as f64 / cw as f64;
    record.scale_y = new_h as f64 / ch as f64;
    record.pad_left = pad_left;
    record.pad_top = pad_top;
    record.out_width = OUTPUT_SIZE;
    record.out_height = OUTPUT_SIZE;
    Ok((out, record))
}

/// Maps a box through the record's trim/crop/scale/pad chain.
/// `inverse(forward(b))` reproduces `b` to floating-point accuracy.
pub fn map_box(
    b: &BoundingBox,
    r: &PreprocessRecord,
    direction: MapDirection,
) -> Result<BoundingBox, PreprocessError> {
    match direction {
        MapDirection::Forward => {
            // Reject boxes with no overlap with the crop region (stated in
            // original-image coordinates).
            let crop_rect = BoundingBox::new(
                (r.trim_left + r.crop.0) as f64,
                (r.trim_top + r.crop.1) as f64,
                r.crop.2 as f64,
                r.crop.3 as f64,
            );
            if b.intersection_area(&crop_rect) == 0.0 {
                return Err(PreprocessError::BoxOutsideCrop);
            }
            let x = (b.x - (r.trim_left + r.crop.0) as f64) * r.scale_x + r.pad_left as f64;
            let y = (b.y - (r.trim_top + r.crop.1) as f64) * r.scale_y + r.pad_top as f64;
            Ok(BoundingBox::new(
                x,
                y,
                b.width * r.scale_x,
                b.height * r.scale_y,
            ))
        }
        MapDirection::Inverse => {
            let x = (b.x - r.pad_left as f64) / r.scale_x + (r.trim_left + r.crop.0) as f64;
            let y = (b.y - r.pad_top as f64) / r.scale_y + (r.trim_top + r.crop.1) as f64;
            Ok(BoundingBox::new(
                x,
                y,
                b.width / r.scale_x,
                b.height / r.scale_y,
            ))
        }
    }
}

/// The full standardization chain: trim, optional inversion, percentile
/// normalization, lung-field crop, resize and pad to 1024x1024.
///
/// The lung mask shares the original raster and is trimmed alongside the
/// image before the crop is computed.
pub fn preprocess_image(
    img: &GrayImage,
    lungs: &BinaryMask,
    options: &PreprocessOptions,
) -> Result<(GrayImage, PreprocessRecord), PreprocessError> {
    if lungs.width() != img.width() || lungs.height() != img.height() {
        return Err(PreprocessError::MaskDimensionMismatch);
    }
    let tol = options.variance_tol.unwrap_or_else(|| {
        let min = img.pixels().iter().cloned().fold(f64::INFINITY, f64::min);
        let max = img
            .pixels()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        1e-6 * (max - min) * (max - min)
    });
    let (mut trimmed, trim_record) = trim_homogeneous_borders(img, tol)?;

    let mut trimmed_lungs = BinaryMask::empty(trimmed.width(), trimmed.height(), lungs.spacing());
    for y in 0..trimmed.height() {
        for x in 0..trimmed.width() {
            trimmed_lungs.set(x, y, lungs.get(x + trim_record.trim_left, y + trim_record.trim_top));
        }
    }

    let inverted = options.detect_inversion && looks_inverted(&trimmed);
    if inverted {
        invert(&mut trimmed);
    }

    let (normalized, lo, hi) =
        normalize_intensity(&trimmed, options.lo_percentile, options.hi_percentile)?;
    let (out, crop_record) = crop_resize(&normalized, &trimmed_lungs)?;

    let record = PreprocessRecord {
        trim_left: trim_record.trim_left,
        trim_top: trim_record.trim_top,
        trim_right: trim_record.trim_right,
        trim_bottom: trim_record.trim_bottom,
        crop: crop_record.crop,
        scale_x: crop_record.scale_x,
        scale_y: crop_record.scale_y,
        pad_left: crop_record.pad_left,
        pad_top: crop_record.pad_top,
        out_width: crop_record.out_width,
        out_height: crop_record.out_height,
        norm_lo: lo,
        norm_hi: hi,
        inverted,
    };
    Ok((out, record))
}
