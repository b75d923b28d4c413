//! Dataset layout on disk.
//!
//! A dataset is a directory of 8- or 16-bit PNG files, optionally described by
//! a `manifest.json` sidecar:
//!
//! ```json
//! { "images": [ { "file": "a.png", "colorspace": "grey", "clean": "clean/a.png" } ] }
//! ```
//!
//! Without a manifest every `*.png` in the directory is loaded, in name order,
//! with the caller's colorspace and no clean reference.

use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{ColorSpace, ImageSample};
use crate::error::{Error, Result};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    #[serde(default)]
    pub colorspace: Option<ColorSpace>,
    #[serde(default)]
    pub clean: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub images: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Reads one raster file as floats in `[0, 1]`.
pub fn load_image(path: &Path, colorspace: ColorSpace) -> Result<ImageSample> {
    Ok(read_image(path, colorspace)?.0)
}

/// As [`load_image`], also reporting the bit depth of the file. The file's
/// colour channels (alpha ignored) must match the colorspace.
pub fn read_image(path: &Path, colorspace: ColorSpace) -> Result<(ImageSample, BitDepth)> {
    let img = image::open(path)?;
    let color = img.color();
    let file_channels = color.channel_count() as usize - usize::from(color.has_alpha());
    if file_channels != colorspace.file_channels() {
        return Err(config_err!(
            "{} has {file_channels} colour channel(s), colorspace {colorspace:?} expects {}",
            path.display(),
            colorspace.file_channels()
        ));
    }
    let sixteen = color.bytes_per_pixel() / color.channel_count() > 1;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = match (file_channels, sixteen) {
        (1, false) => Array3::from_shape_vec((h, w, 1), img.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        (1, true) => Array3::from_shape_vec((h, w, 1), img.to_luma16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
        (_, false) => Array3::from_shape_vec((h, w, 3), img.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()),
        (_, true) => Array3::from_shape_vec((h, w, 3), img.to_rgb16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect()),
    }
    .map_err(|e| shape_err!("{e}"))?;
    let depth = if sixteen { BitDepth::Sixteen } else { BitDepth::Eight };
    Ok((ImageSample::new(pixels, colorspace), depth))
}

/// Writes `pixels` (clamped to `[0, 1]`) as a 1- or 3-channel PNG.
pub fn save_image(path: &Path, pixels: &Array3<f32>, depth: BitDepth) -> Result<()> {
    let (h, w, c) = pixels.dim();
    let px = pixels.as_standard_layout();
    let flat = px.as_slice().expect("standard layout");
    let (w32, h32) = (w as u32, h as u32);
    let q8 = |v: &f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let q16 = |v: &f32| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
    let bad = || shape_err!("cannot encode {h}x{w}x{c}");
    match (c, depth) {
        (1, BitDepth::Eight) => ImageBuffer::<Luma<u8>, _>::from_raw(w32, h32, flat.iter().map(q8).collect::<Vec<_>>())
            .ok_or_else(bad)?
            .save(path)?,
        (1, BitDepth::Sixteen) => ImageBuffer::<Luma<u16>, _>::from_raw(w32, h32, flat.iter().map(q16).collect::<Vec<_>>())
            .ok_or_else(bad)?
            .save(path)?,
        (3, BitDepth::Eight) => ImageBuffer::<Rgb<u8>, _>::from_raw(w32, h32, flat.iter().map(q8).collect::<Vec<_>>())
            .ok_or_else(bad)?
            .save(path)?,
        (3, BitDepth::Sixteen) => ImageBuffer::<Rgb<u16>, _>::from_raw(w32, h32, flat.iter().map(q16).collect::<Vec<_>>())
            .ok_or_else(bad)?
            .save(path)?,
        _ => return Err(bad()),
    }
    Ok(())
}

/// A dataset file as listed by the manifest or the directory scan.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub name: String,
    pub path: PathBuf,
    pub colorspace: ColorSpace,
    pub clean: Option<PathBuf>,
}

impl DatasetItem {
    pub fn load(&self) -> Result<ImageSample> {
        let sample = load_image(&self.path, self.colorspace)?;
        match &self.clean {
            Some(c) => sample.with_clean(load_image(c, self.colorspace)?.pixels),
            None => Ok(sample),
        }
    }
}

/// Lists the images of a dataset directory.
pub fn list_dataset(dir: &Path, default_colorspace: ColorSpace) -> Result<Vec<DatasetItem>> {
    if !dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("dataset directory {} not found", dir.display()),
        )));
    }
    let manifest_path = dir.join(MANIFEST_NAME);
    if manifest_path.is_file() {
        let manifest: DatasetManifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
        return Ok(manifest
            .images
            .into_iter()
            .map(|e| DatasetItem {
                name: e.file.clone(),
                path: dir.join(&e.file),
                colorspace: e.colorspace.unwrap_or(default_colorspace),
                clean: e.clean.map(|c| dir.join(c)),
            })
            .collect());
    }
    let mut names: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    Ok(names
        .into_iter()
        .map(|name| DatasetItem {
            path: dir.join(&name),
            name,
            colorspace: default_colorspace,
            clean: None,
        })
        .collect())
}

/// Loads every listed image, failing on the first unreadable one.
pub fn load_dataset(dir: &Path, default_colorspace: ColorSpace) -> Result<Vec<(String, ImageSample)>> {
    list_dataset(dir, default_colorspace)?
        .into_iter()
        .map(|item| {
            let s = item.load()?;
            s.validate()?;
            Ok((item.name, s))
        })
        .collect()
}
