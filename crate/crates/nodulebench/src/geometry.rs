//! Bounding boxes, grayscale rasters, binary masks and pixel spacing — the
//! shared vocabulary of every other module.
//!
//! Boxes use the `(left, top, width, height)` convention with `y` increasing
//! downward, matching raster order. Coordinates are continuous: fused boxes
//! are weighted averages and therefore fractional. Rasterization happens only
//! at drawing time via [`round_half_up`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("mask has no set bits")]
    EmptyMask,
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("raster dimensions do not match buffer length: {width}x{height} vs {len}")]
    DimensionMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("pixel spacing must be positive and finite, got {0}")]
    InvalidSpacing(f64),
}

/// Isotropic pixel spacing in millimetres per pixel.
///
/// Anisotropic inputs must be resampled upstream; the evaluation pipeline
/// works on square rasters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelSpacing(f64);

impl PixelSpacing {
    pub fn new(mm_per_pixel: f64) -> Result<Self, GeometryError> {
        if mm_per_pixel > 0.0 && mm_per_pixel.is_finite() {
            Ok(Self(mm_per_pixel))
        } else {
            Err(GeometryError::InvalidSpacing(mm_per_pixel))
        }
    }

    pub fn mm_per_pixel(&self) -> f64 {
        self.0
    }
}

/// Axis-aligned box in pixel coordinates: left edge, top edge, width, height.
/// Fractional coordinates are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Self {
        Self {
            x,
            y,
            width,
            height,
        }
    }

    /// Checks the box invariants: positive extents, finite coordinates.
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.x.is_finite() && self.y.is_finite()) {
            return Err(GeometryError::InvalidBox(format!(
                "non-finite corner ({}, {})",
                self.x, self.y
            )));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(GeometryError::InvalidBox(format!(
                "width must be positive, got {}",
                self.width
            )));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(GeometryError::InvalidBox(format!(
                "height must be positive, got {}",
                self.height
            )));
        }
        Ok(())
    }

    pub fn right(&self) -> f64 {
        self.x + self.width
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.height
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.right().min(other.right()) - self.x.max(other.x);
        let h = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }
}

/// A box with a detection likelihood in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub probability: f64,
}

impl Detection {
    pub fn new(bbox: BoundingBox, probability: f64) -> Self {
        Self { bbox, probability }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(GeometryError::InvalidBox(format!(
                "probability must be in [0, 1], got {}",
                self.probability
            )));
        }
        Ok(())
    }
}

/// 2D scalar raster with isotropic spacing. Pixels are row-major
/// (`index = y * width + x`). Values are the raw integer range on load and
/// `[0, 1]` after intensity normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    spacing: PixelSpacing,
}

impl GrayImage {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f64>,
        spacing: PixelSpacing,
    ) -> Result<Self, GeometryError> {
        if pixels.len() != width * height {
            return Err(GeometryError::DimensionMismatch {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
            spacing,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, value: f64, spacing: PixelSpacing) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            spacing,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> PixelSpacing {
        self.spacing
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.pixels[y * self.width + x] = value;
    }

    /// Copies the rectangle `[x0, x0+w) x [y0, y0+h)` into a new image.
    /// The rectangle must lie inside the raster.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> GrayImage {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            pixels.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x0 + w]);
        }
        GrayImage {
            width: w,
            height: h,
            pixels,
            spacing: self.spacing,
        }
    }

    /// Writes `patch` back at `(x0, y0)`. The patch must fit.
    pub fn paste(&mut self, patch: &GrayImage, x0: usize, y0: usize) {
        assert!(x0 + patch.width <= self.width && y0 + patch.height <= self.height);
        for y in 0..patch.height {
            let src = &patch.pixels[y * patch.width..(y + 1) * patch.width];
            let dst_start = (y0 + y) * self.width + x0;
            self.pixels[dst_start..dst_start + patch.width].copy_from_slice(src);
        }
    }
}

/// Row-major boolean raster annotating an image of the same dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    spacing: PixelSpacing,
}

impl BinaryMask {
    pub fn new(
        width: usize,
        height: usize,
        bits: Vec<bool>,
        spacing: PixelSpacing,
    ) -> Result<Self, GeometryError> {
        if bits.len() != width * height {
            return Err(GeometryError::DimensionMismatch {
                width,
                height,
                len: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
            spacing,
        })
    }

    pub fn empty(width: usize, height: usize, spacing: PixelSpacing) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            spacing,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn spacing(&self) -> PixelSpacing {
        self.spacing
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y * self.width + x] = value;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set-bit coordinates in row-major order.
    pub fn set_pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.bits[y * self.width + x] {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Intersection over union of two boxes. Symmetric, 0 when disjoint,
/// 1 for identical boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    // Identical boxes score exactly 1; the edge arithmetic below would lose
    // the last ulp on (x + width) - x.
    if a == b {
        return 1.0;
    }
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Tightest axis-aligned box containing every set bit of the mask.
pub fn mask_bounding_box(m: &BinaryMask) -> Result<BoundingBox, GeometryError> {
    let mut min_x = usize::MAX;
    let mut min_y = usize::MAX;
    let mut max_x = 0usize;
    let mut max_y = 0usize;
    let mut any = false;
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(x, y) {
                any = true;
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
            }
        }
    }
    if !any {
        return Err(GeometryError::EmptyMask);
    }
    Ok(BoundingBox::new(
        min_x as f64,
        min_y as f64,
        (max_x - min_x + 1) as f64,
        (max_y - min_y + 1) as f64,
    ))
}

/// Converts a physical length to pixels. Unrounded; rounding is the
/// caller's decision.
pub fn mm_to_pixels(length_mm: f64, spacing: PixelSpacing) -> f64 {
    length_mm / spacing.mm_per_pixel()
}

/// Rounds half-up (toward positive infinity on ties), the rasterization
/// rule used whenever continuous boxes are drawn onto a pixel grid.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    #[test]
    fn iou_identity() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(20.0, 20.0, 5.0, 5.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        // 10x10 boxes offset by 5 in x: intersection 50, union 150.
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(5.0, 0.0, 10.0, 10.0);
        let expected = 50.0 / 150.0;
        assert!((iou(&a, &b) - expected).abs() < 1e-12);
    }

    #[test]
    fn iou_touching_edges_is_zero() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(10.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn mask_bbox_full() {
        let spacing = PixelSpacing::new(1.0).unwrap();
        let m = BinaryMask::new(4, 3, vec![true; 12], spacing).unwrap();
        assert_eq!(mask_bounding_box(&m).unwrap(), bx(0.0, 0.0, 4.0, 3.0));
    }

    #[test]
    fn mask_bbox_single_bit() {
        let spacing = PixelSpacing::new(1.0).unwrap();
        let mut m = BinaryMask::empty(10, 10, spacing);
        m.set(3, 7, true);
        assert_eq!(mask_bounding_box(&m).unwrap(), bx(3.0, 7.0, 1.0, 1.0));
    }

    #[test]
    fn mask_bbox_two_bits() {
        let spacing = PixelSpacing::new(1.0).unwrap();
        let mut m = BinaryMask::empty(10, 10, spacing);
        m.set(2, 2, true);
        m.set(8, 5, true);
        assert_eq!(mask_bounding_box(&m).unwrap(), bx(2.0, 2.0, 7.0, 4.0));
    }

    #[test]
    fn mask_bbox_empty_errors() {
        let spacing = PixelSpacing::new(1.0).unwrap();
        let m = BinaryMask::empty(5, 5, spacing);
        assert_eq!(mask_bounding_box(&m), Err(GeometryError::EmptyMask));
    }

    #[test]
    fn mm_conversion() {
        let s1 = PixelSpacing::new(1.0).unwrap();
        assert_eq!(mm_to_pixels(10.0, s1), 10.0);
        let s = PixelSpacing::new(0.175).unwrap();
        assert!((mm_to_pixels(7.0, s) - 40.0).abs() < 1e-12);
        let s2 = PixelSpacing::new(0.2).unwrap();
        assert!((mm_to_pixels(17.0, s2) - 85.0).abs() < 1e-12);
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(2.49), 2);
        assert_eq!(round_half_up(-0.5), 0);
        assert_eq!(round_half_up(7.0), 7);
    }

    #[test]
    fn spacing_rejects_nonpositive() {
        assert!(PixelSpacing::new(0.0).is_err());
        assert!(PixelSpacing::new(-1.0).is_err());
        assert!(PixelSpacing::new(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn iou_symmetric(
            ax in -50.0..50.0f64, ay in -50.0..50.0f64,
            aw in 0.1..40.0f64, ah in 0.1..40.0f64,
            bx_ in -50.0..50.0f64, by in -50.0..50.0f64,
            bw in 0.1..40.0f64, bh in 0.1..40.0f64,
        ) {
            let a = bx(ax, ay, aw, ah);
            let b = bx(bx_, by, bw, bh);
            prop_assert_eq!(iou(&a, &b), iou(&b, &a));
        }

        #[test]
        fn iou_bounded(
            ax in -50.0..50.0f64, ay in -50.0..50.0f64,
            aw in 0.1..40.0f64, ah in 0.1..40.0f64,
            bx_ in -50.0..50.0f64, by in -50.0..50.0f64,
            bw in 0.1..40.0f64, bh in 0.1..40.0f64,
        ) {
            let a = bx(ax, ay, aw, ah);
            let b = bx(bx_, by, bw, bh);
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            // Zero exactly when the intersection has zero area.
            prop_assert_eq!(v == 0.0, a.intersection_area(&b) == 0.0);
        }

        #[test]
        fn iou_self_is_one(
            ax in -50.0..50.0f64, ay in -50.0..50.0f64,
            aw in 0.1..40.0f64, ah in 0.1..40.0f64,
        ) {
            let a = bx(ax, ay, aw, ah);
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn mask_bbox_tight(bits in proptest::collection::vec(any::<bool>(), 36)) {
            prop_assume!(bits.iter().any(|&b| b));
            let spacing = PixelSpacing::new(1.0).unwrap();
            let m = BinaryMask::new(6, 6, bits, spacing).unwrap();
            let b = mask_bounding_box(&m).unwrap();
            let (x0, y0) = (b.x as usize, b.y as usize);
            let (x1, y1) = ((b.x + b.width) as usize - 1, (b.y + b.height) as usize - 1);
            // Contains every set bit.
            for (x, y) in m.set_pixels() {
                prop_assert!(x >= x0 && x <= x1 && y >= y0 && y <= y1);
            }
            // Touches a set bit on all four edges.
            prop_assert!((x0..=x1).any(|x| m.get(x, y0)));
            prop_assert!((x0..=x1).any(|x| m.get(x, y1)));
            prop_assert!((y0..=y1).any(|y| m.get(x0, y)));
            prop_assert!((y0..=y1).any(|y| m.get(x1, y)));
        }
    }
}
