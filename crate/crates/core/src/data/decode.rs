use std::path::{Path, PathBuf};

use log::{info, warn};
use walkdir::WalkDir;

use crate::augment::GrayImage;
use crate::error::{Error, Result};

use super::manifest::{Label, Manifest, Record};

/// Largest tolerated fraction of undecodable files during ingestion.
pub const MAX_SKIPPED_FRACTION: f64 = 0.05;

/// Decode a PNG or JPEG into `[0, 1]` grayscale. Color sources are reduced by
/// the plain channel average `(r + g + b) / 3`; alpha is ignored.
pub fn decode_image(path: &Path) -> Result<GrayImage> {
    let dynamic = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let pixels = if dynamic.color().has_color() {
        dynamic
            .to_rgb8()
            .pixels()
            .map(|p| (p[0] as u32 + p[1] as u32 + p[2] as u32) as f32 / 765.0)
            .collect()
    } else {
        dynamic
            .to_luma8()
            .pixels()
            .map(|p| p[0] as f32 / 255.0)
            .collect()
    };
    GrayImage::new(h, w, pixels)
}

/// Write an 8-bit grayscale PNG, rounding `p * 255`.
pub fn encode_png(img: &GrayImage, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img
        .pixels()
        .iter()
        .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    image::save_buffer(
        path,
        &bytes,
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: format!("encode failed: {e}"),
    })
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        .unwrap_or(false)
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub manifest: Manifest,
    pub skipped: Vec<PathBuf>,
}

/// Scan `root/<class>/**` for PNG/JPEG files. Every file is decoded once to
/// make sure it is usable; failures are skipped with a warning, and ingestion
/// fails if more than 5% of the files are unusable.
pub fn ingest_directory(root: &Path) -> Result<Ingested> {
    if !root.is_dir() {
        return Err(Error::Dataset(format!(
            "data directory {} does not exist",
            root.display()
        )));
    }
    let mut class_dirs: Vec<(Label, PathBuf)> = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        match Label::from_dir_name(&name) {
            Some(label) => class_dirs.push((label, path)),
            None => warn!("ignoring unrecognized class folder {}", path.display()),
        }
    }
    class_dirs.sort();
    for label in Label::ALL {
        if !class_dirs.iter().any(|(l, _)| *l == label) {
            return Err(Error::Dataset(format!(
                "no `{label}` class folder under {}",
                root.display()
            )));
        }
    }

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut total = 0usize;
    for (label, dir) in &class_dirs {
        let mut files: Vec<PathBuf> = WalkDir::new(dir)
            .follow_links(true)
            .into_iter()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_type().is_file() && is_image(e.path()))
            .map(|e| e.into_path())
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Dataset(format!(
                "class folder {} contains no images",
                dir.display()
            )));
        }
        total += files.len();
        for path in files {
            match decode_image(&path) {
                Ok(_) => records.push(Record {
                    path,
                    label: *label,
                    split: None,
                    origin: None,
                }),
                Err(e) => {
                    warn!("skipping {}: {e}", path.display());
                    skipped.push(path);
                }
            }
        }
    }
    if skipped.len() as f64 > MAX_SKIPPED_FRACTION * total as f64 {
        return Err(Error::Dataset(format!(
            "{} of {total} images under {} could not be decoded",
            skipped.len(),
            root.display()
        )));
    }
    let manifest = Manifest::new(records);
    for label in Label::ALL {
        if manifest.class_counts()[label as usize] == 0 {
            return Err(Error::Dataset(format!("class `{label}` has no decodable images")));
        }
    }
    let [n, t] = manifest.class_counts();
    info!("ingested {} images ({n} normal, {t} tumor)", manifest.len());
    Ok(Ingested { manifest, skipped })
}
