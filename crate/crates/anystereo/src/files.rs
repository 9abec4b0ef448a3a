//! Path-level helpers that pick a codec from the file extension.

use std::fs;
use std::path::Path;

use anystereo_core::{DisparityMap, Image};

use crate::error::{Error, Result};
use crate::pfm::{read_pfm_disparity, read_pfm_image, write_pfm_disparity, write_pfm_image};
use crate::png_io::{read_kitti_disparity, read_png_image, write_kitti_disparity, write_png_image};

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn unsupported(path: &Path) -> Error {
    Error::Invalid(format!(
        "{}: unsupported extension (expected .png or .pfm)",
        path.display()
    ))
}

/// Loads a `.png` (8/16-bit) or `.pfm` image.
pub fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    match extension(path).as_str() {
        "png" => read_png_image(&bytes),
        "pfm" => read_pfm_image(&bytes),
        _ => Err(unsupported(path)),
    }
}

/// Saves an image; PNG output is 16-bit.
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let bytes = match extension(path).as_str() {
        "png" => write_png_image(img, true)?,
        "pfm" => write_pfm_image(img)?,
        _ => return Err(unsupported(path)),
    };
    Ok(fs::write(path, bytes)?)
}

/// Loads a `.pfm` or KITTI `.png` disparity map.
pub fn load_disparity(path: &Path) -> Result<DisparityMap> {
    let bytes = fs::read(path)?;
    match extension(path).as_str() {
        "png" => read_kitti_disparity(&bytes),
        "pfm" => read_pfm_disparity(&bytes),
        _ => Err(unsupported(path)),
    }
}

pub fn save_disparity(path: &Path, map: &DisparityMap) -> Result<()> {
    let bytes = match extension(path).as_str() {
        "png" => write_kitti_disparity(map)?,
        "pfm" => write_pfm_disparity(map)?,
        _ => return Err(unsupported(path)),
    };
    Ok(fs::write(path, bytes)?)
}
