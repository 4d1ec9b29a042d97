//! Discrete Poisson blending (seamless cloning) on image patches.
//!
//! Over the interior pixels, the result follows the source's gradient field
//! while matching the target on the boundary:
//!
//! ```text
//! |N_p| f_p - sum_{q in N_p ∩ Omega} f_q =
//!     sum_{q in N_p ∩ dOmega} target_q + sum_{q in N_p} (source_p - source_q)
//! ```
//!
//! with 4-neighborhoods. Exterior pixels keep the target values. The system
//! is symmetric positive definite and is solved with conjugate gradients.

use super::SynthesisError;
use crate::geometry::{BinaryMask, GrayImage};

/// Default iteration cap: ten times the patch pixel count.
pub fn default_max_iterations(width: usize, height: usize) -> usize {
    10 * width * height
}

/// Solves the blend over `interior` and returns the patch with interior
/// pixels replaced by the solution. `interior` must leave the outermost
/// 1-pixel ring of the patch free so every interior pixel has 4 in-patch
/// neighbors.
pub fn poisson_blend(
    target: &GrayImage,
    source: &GrayImage,
    interior: &BinaryMask,
    tolerance: f64,
    max_iterations: usize,
) -> Result<GrayImage, SynthesisError> {
    let (w, h) = (target.width(), target.height());
    if source.width() != w
        || source.height() != h
        || interior.width() != w
        || interior.height() != h
    {
        return Err(SynthesisError::PatchDimensionMismatch);
    }

    // Equation indices for interior pixels.
    let mut index = vec![usize::MAX; w * h];
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if interior.get(x, y) {
                if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                    return Err(SynthesisError::InteriorTouchesBorder);
                }
                index[y * w + x] = cells.len();
                cells.push((x, y));
            }
        }
    }
    let mut out = target.clone();
    if cells.is_empty() {
        return Ok(out);
    }
    let n = cells.len();

    // Right-hand side: boundary Dirichlet terms plus the guidance divergence
    // (negative discrete Laplacian of the source).
    let neighbors = |x: usize, y: usize| [(x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)];
    let mut b = vec![0.0; n];
    for (i, &(x, y)) in cells.iter().enumerate() {
        let mut rhs = 4.0 * source.get(x, y);
        for (nx, ny) in neighbors(x, y) {
            rhs -= source.get(nx, ny);
            if index[ny * w + nx] == usize::MAX {
                rhs += target.get(nx, ny);
            }
        }
        b[i] = rhs;
    }

    // Matrix-free application of the interior Laplacian.
    let apply = |v: &[f64], out: &mut [f64]| {
        for (i, &(x, y)) in cells.iter().enumerate() {
            let mut acc = 4.0 * v[i];
            for (nx, ny) in neighbors(x, y) {
                let j = index[ny * w + nx];
                if j != usize::MAX {
                    acc -= v[j];
                }
            }
            out[i] = acc;
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    // Conjugate gradients from the source values; the relative residual is
    // measured against ||b||.
    let mut x: Vec<f64> = cells.iter().map(|&(px, py)| source.get(px, py)).collect();
    let mut r = vec![0.0; n];
    apply(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let b_norm = dot(&b, &b).sqrt();
    let target_norm = if b_norm > 0.0 { tolerance * b_norm } else { tolerance };

    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rs = dot(&r, &r);
    let mut iterations = 0usize;
    while rs.sqrt() > target_norm {
        if iterations >= max_iterations {
            return Err(SynthesisError::NonConvergence {
                iterations,
                residual: rs.sqrt(),
            });
        }
        apply(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        iterations += 1;
    }

    for (i, &(px, py)) in cells.iter().enumerate() {
        out.set(px, py, x[i]);
    }
    Ok(out)
}

/// Interior mask for a blend patch: everything except the outermost
/// 1-pixel ring.
pub fn full_interior(width: usize, height: usize, spacing: crate::geometry::PixelSpacing) -> BinaryMask {
    let mut m = BinaryMask::empty(width, height, spacing);
    if width > 2 && height > 2 {
        for y in 1..height - 1 {
            for x in 1..width - 1 {
                m.set(x, y, true);
            }
        }
    }
    m
}
