//! Dataset manifests: which images exist, where their masks live, and the
//! pixel spacing to use. JSON with a top-level `entries` array.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FormatError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lungs: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heart: Option<PathBuf>,
    pub spacing_mm_per_pixel: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Resolves a path stored in the manifest against the manifest's
    /// directory.
    pub fn resolve(base: &Path, stored: &Path) -> PathBuf {
        if stored.is_absolute() {
            stored.to_path_buf()
        } else {
            base.join(stored)
        }
    }
}

/// Loads and validates a manifest: unique ids, positive spacing, and every
/// referenced file present on disk.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| {
        FormatError::parse(
            path,
            format!("line {}, column {}: {}", e.line(), e.column(), e),
        )
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let mut problems = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for entry in &manifest.entries {
        if !seen.insert(entry.id.as_str()) {
            problems.push(format!("duplicate image id {:?}", entry.id));
        }
        if !(entry.spacing_mm_per_pixel > 0.0) {
            problems.push(format!(
                "entry {:?}: spacing must be positive, got {}",
                entry.id, entry.spacing_mm_per_pixel
            ));
        }
        let mut check = |label: &str, p: &Path| {
            let resolved = DatasetManifest::resolve(base, p);
            if !resolved.exists() {
                problems.push(format!(
                    "entry {:?}: {label} file {} does not exist",
                    entry.id,
                    resolved.display()
                ));
            }
        };
        check("image", &entry.image);
        if let Some(l) = &entry.lungs {
            check("lungs", l);
        }
        if let Some(h) = &entry.heart {
            check("heart", h);
        }
    }
    if !problems.is_empty() {
        return Err(FormatError::Validation {
            path: path.to_path_buf(),
            problems,
        });
    }
    Ok(manifest)
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(manifest).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{GrayImage, PixelSpacing};
    use crate::io::save_normalized_image;

    #[test]
    fn validates_referenced_files() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::filled(4, 4, 0.5, PixelSpacing::new(1.0).unwrap());
        save_normalized_image(&dir.path().join("a.png"), &img).unwrap();
        let manifest = DatasetManifest {
            entries: vec![
                ManifestEntry {
                    id: "a".into(),
                    image: "a.png".into(),
                    lungs: None,
                    heart: None,
                    spacing_mm_per_pixel: 0.2,
                },
                ManifestEntry {
                    id: "b".into(),
                    image: "missing.png".into(),
                    lungs: None,
                    heart: None,
                    spacing_mm_per_pixel: 0.2,
                },
            ],
        };
        let path = dir.path().join("manifest.json");
        save_manifest(&path, &manifest).unwrap();
        match load_manifest(&path) {
            Err(FormatError::Validation { problems, .. }) => {
                assert_eq!(problems.len(), 1);
                assert!(problems[0].contains("missing.png"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::filled(4, 4, 0.5, PixelSpacing::new(1.0).unwrap());
        save_normalized_image(&dir.path().join("a.png"), &img).unwrap();
        let manifest = DatasetManifest {
            entries: vec![ManifestEntry {
                id: "a".into(),
                image: "a.png".into(),
                lungs: None,
                heart: None,
                spacing_mm_per_pixel: 0.175,
            }],
        };
        let path = dir.path().join("manifest.json");
        save_manifest(&path, &manifest).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.entries.len(), 1);
        assert_eq!(loaded.entries[0].spacing_mm_per_pixel, 0.175);
    }
}
