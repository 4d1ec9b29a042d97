//! On-disk formats: prediction/ground-truth JSON, grayscale images with
//! spacing sidecars, CT patch volumes, and dataset manifests.
//!
//! Every format is documented bit-exactly in `docs/FORMATS.md`.

mod ct;
mod images;
mod manifest;
mod predictions;

pub use ct::{load_ct_patch, load_template_library, save_ct_patch};
pub use images::{
    load_gray_image, load_mask, read_spacing_sidecar, save_mask, save_normalized_image,
    spacing_sidecar_path, write_spacing_sidecar,
};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, ManifestEntry};
pub use predictions::{
    load_ground_truth, load_predictions, save_ground_truth, save_predictions,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: validation failed:\n{}", problems.join("\n"))]
    Validation {
        path: PathBuf,
        problems: Vec<String>,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("missing file {path}: {hint}")]
    MissingFile { path: PathBuf, hint: String },
}

impl FormatError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
