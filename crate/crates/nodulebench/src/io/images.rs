//! Grayscale image and mask I/O: 8- or 16-bit PNG and PGM, with pixel
//! spacing supplied by a `<image>.spacing.txt` sidecar holding one decimal
//! number (millimetres per pixel). Without a sidecar the spacing defaults
//! to 1 mm/pixel.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};

use super::FormatError;
use crate::geometry::{BinaryMask, GrayImage, PixelSpacing};

/// Sidecar path: the image path with `.spacing.txt` appended.
pub fn spacing_sidecar_path(image_path: &Path) -> PathBuf {
    let mut s = image_path.as_os_str().to_os_string();
    s.push(".spacing.txt");
    PathBuf::from(s)
}

pub fn read_spacing_sidecar(image_path: &Path) -> Result<Option<PixelSpacing>, FormatError> {
    let sidecar = spacing_sidecar_path(image_path);
    if !sidecar.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&sidecar).map_err(|e| FormatError::io(&sidecar, e))?;
    let value: f64 = text
        .trim()
        .parse()
        .map_err(|e| FormatError::parse(&sidecar, format!("not a number: {e}")))?;
    PixelSpacing::new(value)
        .map(Some)
        .map_err(|e| FormatError::parse(&sidecar, e.to_string()))
}

pub fn write_spacing_sidecar(image_path: &Path, spacing: PixelSpacing) -> Result<(), FormatError> {
    let sidecar = spacing_sidecar_path(image_path);
    fs::write(&sidecar, format!("{}\n", spacing.mm_per_pixel()))
        .map_err(|e| FormatError::io(&sidecar, e))
}

fn open(path: &Path) -> Result<DynamicImage, FormatError> {
    image::open(path).map_err(|e| FormatError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads an 8- or 16-bit grayscale image. Values keep their raw integer
/// range (0..255 or 0..65535).
pub fn load_gray_image(path: &Path) -> Result<GrayImage, FormatError> {
    let spacing = read_spacing_sidecar(path)?.unwrap_or_else(|| {
        PixelSpacing::new(1.0).expect("valid default")
    });
    let dynamic = open(path)?;
    let (w, h, pixels) = match dynamic {
        DynamicImage::ImageLuma8(buf) => (
            buf.width() as usize,
            buf.height() as usize,
            buf.pixels().map(|p| f64::from(p.0[0])).collect::<Vec<_>>(),
        ),
        DynamicImage::ImageLuma16(buf) => (
            buf.width() as usize,
            buf.height() as usize,
            buf.pixels().map(|p| f64::from(p.0[0])).collect::<Vec<_>>(),
        ),
        other => {
            return Err(FormatError::Image {
                path: path.to_path_buf(),
                message: format!(
                    "expected 8- or 16-bit grayscale, got {:?}",
                    other.color()
                ),
            })
        }
    };
    GrayImage::new(w, h, pixels, spacing).map_err(|e| FormatError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Saves a `[0, 1]`-normalized image as 16-bit grayscale
/// (`round(v * 65535)`); format follows the extension (PNG or PGM).
pub fn save_normalized_image(path: &Path, img: &GrayImage) -> Result<(), FormatError> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(
        img.width() as u32,
        img.height() as u32,
        |x, y| {
            let v = img.get(x as usize, y as usize).clamp(0.0, 1.0);
            Luma([(v * 65535.0).round() as u16])
        },
    );
    buf.save(path).map_err(|e| FormatError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_spacing_sidecar(path, img.spacing())
}

/// Loads a binary mask: pixels above half intensity are set.
pub fn load_mask(path: &Path) -> Result<BinaryMask, FormatError> {
    let spacing = read_spacing_sidecar(path)?.unwrap_or_else(|| {
        PixelSpacing::new(1.0).expect("valid default")
    });
    let dynamic = open(path)?;
    let (w, h, bits) = match dynamic {
        DynamicImage::ImageLuma8(buf) => (
            buf.width() as usize,
            buf.height() as usize,
            buf.pixels().map(|p| p.0[0] > 127).collect::<Vec<_>>(),
        ),
        DynamicImage::ImageLuma16(buf) => (
            buf.width() as usize,
            buf.height() as usize,
            buf.pixels().map(|p| p.0[0] > 32767).collect::<Vec<_>>(),
        ),
        other => {
            return Err(FormatError::Image {
                path: path.to_path_buf(),
                message: format!(
                    "expected 8- or 16-bit grayscale mask, got {:?}",
                    other.color()
                ),
            })
        }
    };
    BinaryMask::new(w, h, bits, spacing).map_err(|e| FormatError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Saves a mask as 8-bit grayscale with values 0 and 255.
pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<(), FormatError> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(
        mask.width() as u32,
        mask.height() as u32,
        |x, y| Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }]),
    );
    buf.save(path).map_err(|e| FormatError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
