//! CT patch volumes: a small text header next to two raw files.
//!
//! ```text
//! ctpatch 1
//! dims <nx> <ny> <nz>
//! spacing <mm per voxel>
//! hu <file> int16 little-endian
//! seg <file> uint8
//! ```
//!
//! Voxels are x-fastest (`index = (z * ny + y) * nx + x`); HU values are
//! little-endian `i16`, the segmentation is one byte per voxel (nonzero =
//! nodule). Raw file paths are relative to the header's directory.

use std::fs;
use std::path::{Path, PathBuf};

use super::FormatError;
use crate::synthesis::CtPatch;

struct Header {
    dims: (usize, usize, usize),
    spacing: f64,
    hu_file: PathBuf,
    seg_file: PathBuf,
}

fn parse_header(path: &Path) -> Result<Header, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut dims = None;
    let mut spacing = None;
    let mut hu_file = None;
    let mut seg_file = None;
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let err = |msg: &str| FormatError::parse(path, format!("line {}: {msg}", lineno + 1));
        match fields.as_slice() {
            [] => {}
            ["ctpatch", "1"] => {}
            ["ctpatch", v] => return Err(err(&format!("unsupported version {v}"))),
            ["dims", nx, ny, nz] => {
                let parse =
                    |s: &str| s.parse::<usize>().map_err(|e| err(&format!("dims: {e}")));
                dims = Some((parse(nx)?, parse(ny)?, parse(nz)?));
            }
            ["spacing", s] => {
                spacing = Some(
                    s.parse::<f64>()
                        .map_err(|e| err(&format!("spacing: {e}")))?,
                );
            }
            ["hu", file, "int16", "little-endian"] => hu_file = Some(dir.join(file)),
            ["seg", file, "uint8"] => seg_file = Some(dir.join(file)),
            _ => return Err(err(&format!("unrecognized line {line:?}"))),
        }
    }
    let missing = |field: &str| FormatError::parse(path, format!("missing {field} line"));
    Ok(Header {
        dims: dims.ok_or_else(|| missing("dims"))?,
        spacing: spacing.ok_or_else(|| missing("spacing"))?,
        hu_file: hu_file.ok_or_else(|| missing("hu"))?,
        seg_file: seg_file.ok_or_else(|| missing("seg"))?,
    })
}

pub fn load_ct_patch(header_path: &Path) -> Result<CtPatch, FormatError> {
    let header = parse_header(header_path)?;
    let n = header.dims.0 * header.dims.1 * header.dims.2;

    let hu_bytes = fs::read(&header.hu_file).map_err(|e| FormatError::io(&header.hu_file, e))?;
    if hu_bytes.len() != 2 * n {
        return Err(FormatError::parse(
            &header.hu_file,
            format!("expected {} bytes, found {}", 2 * n, hu_bytes.len()),
        ));
    }
    let voxels: Vec<i16> = hu_bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]))
        .collect();

    let seg = fs::read(&header.seg_file).map_err(|e| FormatError::io(&header.seg_file, e))?;
    if seg.len() != n {
        return Err(FormatError::parse(
            &header.seg_file,
            format!("expected {} bytes, found {}", n, seg.len()),
        ));
    }

    CtPatch::new(header.dims, header.spacing, voxels, seg)
        .map_err(|e| FormatError::parse(header_path, e.to_string()))
}

/// Writes `<stem>.ctpatch.txt` semantics in reverse: the header goes to
/// `header_path` and the raw volumes next to it as `<stem>.hu.raw` and
/// `<stem>.seg.raw`.
pub fn save_ct_patch(header_path: &Path, patch: &CtPatch) -> Result<(), FormatError> {
    let stem = header_path
        .file_name()
        .and_then(|n| n.to_str())
        .map(|n| n.trim_end_matches(".ctpatch.txt").to_string())
        .unwrap_or_else(|| "patch".to_string());
    let dir = header_path.parent().unwrap_or_else(|| Path::new("."));
    let hu_name = format!("{stem}.hu.raw");
    let seg_name = format!("{stem}.seg.raw");

    let (nx, ny, nz) = patch.dims();
    let header = format!(
        "ctpatch 1\ndims {nx} {ny} {nz}\nspacing {}\nhu {hu_name} int16 little-endian\nseg {seg_name} uint8\n",
        patch.spacing_mm()
    );
    fs::write(header_path, header).map_err(|e| FormatError::io(header_path, e))?;

    let mut hu_bytes = Vec::with_capacity(patch.voxels().len() * 2);
    for v in patch.voxels() {
        hu_bytes.extend_from_slice(&v.to_le_bytes());
    }
    let hu_path = dir.join(&hu_name);
    fs::write(&hu_path, hu_bytes).map_err(|e| FormatError::io(&hu_path, e))?;
    let seg_path = dir.join(&seg_name);
    fs::write(&seg_path, patch.segmentation()).map_err(|e| FormatError::io(&seg_path, e))
}

/// Loads every `*.ctpatch.txt` in a directory, sorted by file name. The
/// ordering is part of the seeded-selection contract.
pub fn load_template_library(dir: &Path) -> Result<Vec<CtPatch>, FormatError> {
    let entries = fs::read_dir(dir).map_err(|e| FormatError::io(dir, e))?;
    let mut headers: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".ctpatch.txt"))
        })
        .collect();
    headers.sort();
    headers.iter().map(|h| load_ct_patch(h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::sphere_template;

    #[test]
    fn header_and_volumes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let header = dir.path().join("sphere.ctpatch.txt");
        let patch = sphere_template(10, 3.5, 1.0, 40);
        save_ct_patch(&header, &patch).unwrap();
        let loaded = load_ct_patch(&header).unwrap();
        assert_eq!(loaded, patch);
    }

    #[test]
    fn library_is_sorted_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let a = sphere_template(6, 2.0, 1.0, 0);
        let b = sphere_template(8, 3.0, 1.0, 0);
        save_ct_patch(&dir.path().join("b.ctpatch.txt"), &b).unwrap();
        save_ct_patch(&dir.path().join("a.ctpatch.txt"), &a).unwrap();
        let lib = load_template_library(dir.path()).unwrap();
        assert_eq!(lib.len(), 2);
        assert_eq!(lib[0], a);
        assert_eq!(lib[1], b);
    }

    #[test]
    fn truncated_volume_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let header = dir.path().join("p.ctpatch.txt");
        let patch = sphere_template(6, 2.0, 1.0, 0);
        save_ct_patch(&header, &patch).unwrap();
        let hu = dir.path().join("p.hu.raw");
        let bytes = fs::read(&hu).unwrap();
        fs::write(&hu, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(
            load_ct_patch(&header),
            Err(FormatError::Parse { .. })
        ));
    }

    #[test]
    fn malformed_header_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let header = dir.path().join("p.ctpatch.txt");
        fs::write(&header, "ctpatch 1\nwhat is this\n").unwrap();
        match load_ct_patch(&header) {
            Err(FormatError::Parse { message, .. }) => assert!(message.contains("line 2")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
