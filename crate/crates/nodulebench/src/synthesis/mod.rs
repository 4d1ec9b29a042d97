//! CT-template-based nodule synthesis: project a 3D nodule patch to 2D,
//! resample it into the requested box, superimpose it on the radiograph and
//! Poisson-blend the patch seams.

mod poisson;

pub use poisson::{default_max_iterations, full_interior, poisson_blend};

use thiserror::Error;

use crate::geometry::{round_half_up, BoundingBox, GrayImage};
use crate::rng::SeededRng;

#[derive(Debug, Error, PartialEq)]
pub enum SynthesisError {
    #[error("CT patch segmentation has no set voxels")]
    EmptySegmentation,
    #[error("voxel buffer length does not match dims")]
    VoxelDimensionMismatch,
    #[error("template library is empty")]
    EmptyLibrary,
    #[error("box plus blend margin falls outside the image")]
    BoxOutsideImage,
    #[error("box {box_index} falls outside the image")]
    PlacementOutsideImage { box_index: usize },
    #[error("patch dimensions disagree")]
    PatchDimensionMismatch,
    #[error("blend interior touches the patch border")]
    InteriorTouchesBorder,
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

/// A cubic CT patch in Hounsfield units with a binary nodule segmentation.
/// Voxels are stored x-fastest: `index = (z * ny + y) * nx + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtPatch {
    dims: (usize, usize, usize),
    spacing_mm: f64,
    voxels: Vec<i16>,
    segmentation: Vec<u8>,
}

impl CtPatch {
    pub fn new(
        dims: (usize, usize, usize),
        spacing_mm: f64,
        voxels: Vec<i16>,
        segmentation: Vec<u8>,
    ) -> Result<Self, SynthesisError> {
        let n = dims.0 * dims.1 * dims.2;
        if voxels.len() != n || segmentation.len() != n {
            return Err(SynthesisError::VoxelDimensionMismatch);
        }
        Ok(Self {
            dims,
            spacing_mm,
            voxels,
            segmentation,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    pub fn voxels(&self) -> &[i16] {
        &self.voxels
    }

    pub fn segmentation(&self) -> &[u8] {
        &self.segmentation
    }

    #[inline]
    fn at(&self, x: usize, y: usize, z: usize) -> (i16, bool) {
        let i = (z * self.dims.1 + y) * self.dims.0 + x;
        (self.voxels[i], self.segmentation[i] != 0)
    }
}

/// Projection axis through the CT patch. In the usual patch orientation the
/// anterior-posterior direction is `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// 2D nodule footprint: projected attenuation (max-normalized to 1) and
/// projected segmentation coverage in `[0, 1]`, cropped to the tight
/// nonzero-alpha box.
#[derive(Debug, Clone, PartialEq)]
pub struct NoduleTemplate2D {
    pub width: usize,
    pub height: usize,
    pub intensity: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl NoduleTemplate2D {
    #[inline]
    pub fn intensity_at(&self, x: usize, y: usize) -> f64 {
        self.intensity[y * self.width + x]
    }

    #[inline]
    pub fn alpha_at(&self, x: usize, y: usize) -> f64 {
        self.alpha[y * self.width + x]
    }
}

/// Free parameters of the synthesis step.
#[derive(Debug, Clone, Copy)]
pub struct BlendParams {
    /// Multiplier on the normalized template intensity before compositing.
    pub contrast: f64,
    /// Pixels of surrounding context included in the blend patch.
    pub blend_margin: usize,
    /// Relative residual at which the Poisson solve stops.
    pub solver_tolerance: f64,
    /// Iteration cap; `None` means ten times the patch pixel count.
    pub max_iterations: Option<usize>,
}

impl Default for BlendParams {
    fn default() -> Self {
        Self {
            contrast: 0.4,
            blend_margin: 5,
            solver_tolerance: 1e-6,
            max_iterations: None,
        }
    }
}

/// What was inserted where, for one synthesized nodule.
#[derive(Debug, Clone, PartialEq)]
pub struct NoduleProvenance {
    pub bbox: BoundingBox,
    pub template_index: usize,
    pub contrast: f64,
}

/// Projects the segmented voxels along the anterior-posterior axis with the
/// default air-floor offset of 1000 HU.
pub fn project_template(patch: &CtPatch) -> Result<NoduleTemplate2D, SynthesisError> {
    project_template_along(patch, Axis::Y, 1000.0)
}

/// Projection with an explicit axis and HU offset.
///
/// Per projected pixel the intensity is the sum of `max(HU + offset, 0)`
/// over segmented voxels in the column, normalized by the maximum across
/// pixels; alpha is the segmented-voxel count normalized the same way.
pub fn project_template_along(
    patch: &CtPatch,
    axis: Axis,
    hu_offset: f64,
) -> Result<NoduleTemplate2D, SynthesisError> {
    let (nx, ny, nz) = patch.dims;
    // Output raster (u, v) and the summation depth for the chosen axis.
    let (w, h, depth) = match axis {
        Axis::X => (ny, nz, nx),
        Axis::Y => (nx, nz, ny),
        Axis::Z => (nx, ny, nz),
    };
    let voxel = |u: usize, v: usize, d: usize| match axis {
        Axis::X => patch.at(d, u, v),
        Axis::Y => patch.at(u, d, v),
        Axis::Z => patch.at(u, v, d),
    };

    let mut intensity = vec![0.0f64; w * h];
    let mut counts = vec![0usize; w * h];
    for v in 0..h {
        for u in 0..w {
            let mut sum = 0.0;
            let mut count = 0usize;
            for d in 0..depth {
                let (hu, seg) = voxel(u, v, d);
                if seg {
                    sum += (f64::from(hu) + hu_offset).max(0.0);
                    count += 1;
                }
            }
            intensity[v * w + u] = sum;
            counts[v * w + u] = count;
        }
    }
    let max_count = counts.iter().copied().max().unwrap_or(0);
    if max_count == 0 {
        return Err(SynthesisError::EmptySegmentation);
    }
    let max_intensity = intensity.iter().cloned().fold(0.0f64, f64::max);
    if max_intensity > 0.0 {
        for v in &mut intensity {
            *v /= max_intensity;
        }
    }
    let alpha: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / max_count as f64)
        .collect();

    // Crop to the tight alpha > 0 box.
    let mut min_u = w;
    let mut max_u = 0usize;
    let mut min_v = h;
    let mut max_v = 0usize;
    for v in 0..h {
        for u in 0..w {
            if alpha[v * w + u] > 0.0 {
                min_u = min_u.min(u);
                max_u = max_u.max(u);
                min_v = min_v.min(v);
                max_v = max_v.max(v);
            }
        }
    }
    let (cw, ch) = (max_u - min_u + 1, max_v - min_v + 1);
    let mut out = NoduleTemplate2D {
        width: cw,
        height: ch,
        intensity: vec![0.0; cw * ch],
        alpha: vec![0.0; cw * ch],
    };
    for v in 0..ch {
        for u in 0..cw {
            out.intensity[v * cw + u] = intensity[(v + min_v) * w + (u + min_u)];
            out.alpha[v * cw + u] = alpha[(v + min_v) * w + (u + min_u)];
        }
    }
    Ok(out)
}

/// Corner-aligned bilinear resampling of intensity and alpha to `w x h`.
pub fn resample_template(t: &NoduleTemplate2D, w: usize, h: usize) -> NoduleTemplate2D {
    assert!(w >= 1 && h >= 1);
    if w == t.width && h == t.height {
        return t.clone();
    }
    let src_pos = |out: usize, out_len: usize, src_len: usize| -> f64 {
        if out_len > 1 {
            out as f64 * (src_len - 1) as f64 / (out_len - 1) as f64
        } else {
            (src_len - 1) as f64 / 2.0
        }
    };
    let sample = |data: &[f64], fx: f64, fy: f64| -> f64 {
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(t.width - 1);
        let y1 = (y0 + 1).min(t.height - 1);
        let dx = fx - x0 as f64;
        let dy = fy - y0 as f64;
        let v00 = data[y0 * t.width + x0];
        let v10 = data[y0 * t.width + x1];
        let v01 = data[y1 * t.width + x0];
        let v11 = data[y1 * t.width + x1];
        v00 * (1.0 - dx) * (1.0 - dy)
            + v10 * dx * (1.0 - dy)
            + v01 * (1.0 - dx) * dy
            + v11 * dx * dy
    };
    let mut out = NoduleTemplate2D {
        width: w,
        height: h,
        intensity: vec![0.0; w * h],
        alpha: vec![0.0; w * h],
    };
    for y in 0..h {
        let fy = src_pos(y, h, t.height);
        for x in 0..w {
            let fx = src_pos(x, w, t.width);
            out.intensity[y * w + x] = sample(&t.intensity, fx, fy);
            out.alpha[y * w + x] = sample(&t.alpha, fx, fy);
        }
    }
    out
}

/// The rounded pixel rectangle for a continuous box: half-up rounded corner
/// and extents with a 1-pixel floor.
pub fn rasterize_box(b: &BoundingBox) -> (i64, i64, i64, i64) {
    let x0 = round_half_up(b.x);
    let y0 = round_half_up(b.y);
    let w = round_half_up(b.width).max(1);
    let h = round_half_up(b.height).max(1);
    (x0, y0, w, h)
}

/// Additively composites the template into the rounded box and returns the
/// `box + margin` patch; the margin ring copies the image. The image must be
/// normalized to `[0, 1]`.
pub fn superimpose(
    img: &GrayImage,
    t: &NoduleTemplate2D,
    bbox: &BoundingBox,
    contrast: f64,
    margin: usize,
) -> Result<GrayImage, SynthesisError> {
    let (x0, y0, w, h) = rasterize_box(bbox);
    let m = margin as i64;
    if x0 - m < 0
        || y0 - m < 0
        || x0 + w + m > img.width() as i64
        || y0 + h + m > img.height() as i64
    {
        return Err(SynthesisError::BoxOutsideImage);
    }
    let resampled;
    let t = if t.width == w as usize && t.height == h as usize {
        t
    } else {
        resampled = resample_template(t, w as usize, h as usize);
        &resampled
    };

    let mut patch = img.crop(
        (x0 - m) as usize,
        (y0 - m) as usize,
        (w + 2 * m) as usize,
        (h + 2 * m) as usize,
    );
    for ty in 0..h as usize {
        for tx in 0..w as usize {
            let base = img.get(x0 as usize + tx, y0 as usize + ty);
            let add = contrast * t.intensity_at(tx, ty) * t.alpha_at(tx, ty);
            patch.set(
                margin + tx,
                margin + ty,
                (base + add).clamp(0.0, 1.0),
            );
        }
    }
    Ok(patch)
}

/// Inserts one randomly chosen template per box: project, resample into the
/// rounded box, superimpose, then Poisson-blend the `box + margin` patch back
/// into the image. Boxes are processed in order, so later nodules composite
/// over earlier ones. Deterministic for a fixed seed and library order.
pub fn generate_nodules(
    img: &GrayImage,
    boxes: &[BoundingBox],
    library: &[CtPatch],
    seed: u64,
    params: &BlendParams,
) -> Result<(GrayImage, Vec<NoduleProvenance>), SynthesisError> {
    if library.is_empty() {
        return Err(SynthesisError::EmptyLibrary);
    }
    let m = params.blend_margin as i64;
    for (i, b) in boxes.iter().enumerate() {
        let (x0, y0, w, h) = rasterize_box(b);
        if x0 - m < 0
            || y0 - m < 0
            || x0 + w + m > img.width() as i64
            || y0 + h + m > img.height() as i64
        {
            return Err(SynthesisError::PlacementOutsideImage { box_index: i });
        }
    }

    let mut rng = SeededRng::from_seed(seed);
    let mut out = img.clone();
    let mut provenance = Vec::with_capacity(boxes.len());
    for bbox in boxes {
        let template_index = rng.uniform_below(library.len() as u64) as usize;
        let template = project_template(&library[template_index])?;
        let (x0, y0, w, h) = rasterize_box(bbox);
        let template = resample_template(&template, w as usize, h as usize);
        let composite = superimpose(&out, &template, bbox, params.contrast, params.blend_margin)?;

        let px = (x0 - m) as usize;
        let py = (y0 - m) as usize;
        let target = out.crop(px, py, composite.width(), composite.height());
        let interior = full_interior(composite.width(), composite.height(), img.spacing());
        let max_iter = params
            .max_iterations
            .unwrap_or_else(|| default_max_iterations(composite.width(), composite.height()));
        let mut blended = poisson_blend(
            &target,
            &composite,
            &interior,
            params.solver_tolerance,
            max_iter,
        )?;
        for v in blended.pixels_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        out.paste(&blended, px, py);
        provenance.push(NoduleProvenance {
            bbox: *bbox,
            template_index,
            contrast: params.contrast,
        });
    }
    Ok((out, provenance))
}

/// Synthetic sphere template: radius `r_mm` of soft-tissue HU inside an
/// air-filled cube. Useful as a deterministic stand-in for real CT patches.
pub fn sphere_template(dim: usize, radius_mm: f64, spacing_mm: f64, hu: i16) -> CtPatch {
    let n = dim * dim * dim;
    let mut voxels = vec![-1000i16; n];
    let mut seg = vec![0u8; n];
    let c = (dim as f64 - 1.0) / 2.0;
    for z in 0..dim {
        for y in 0..dim {
            for x in 0..dim {
                let dx = (x as f64 - c) * spacing_mm;
                let dy = (y as f64 - c) * spacing_mm;
                let dz = (z as f64 - c) * spacing_mm;
                if (dx * dx + dy * dy + dz * dz).sqrt() <= radius_mm {
                    let i = (z * dim + y) * dim + x;
                    voxels[i] = hu;
                    seg[i] = 1;
                }
            }
        }
    }
    CtPatch::new((dim, dim, dim), spacing_mm, voxels, seg).expect("consistent dims")
}
