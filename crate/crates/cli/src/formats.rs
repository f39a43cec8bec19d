//! On-disk formats: PNG rasters, detection lists, JSON documents.
//!
//! Every writer goes through a temporary file in the destination directory
//! and renames it into place, so readers never see a partial file.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};
use serde::{Deserialize, Serialize};
use tils_core::{Detection, PipelineConfig, Raster, Resolution};

use crate::error::{CliError, Result};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn encode_png(path: &Path, w: usize, h: usize, data: &[u8], color: ExtendedColorType) -> Result<()> {
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf)
        .write_image(data, w as u32, h as u32, color)
        .map_err(|e| CliError::image(path, e))?;
    write_atomic(path, &buf)
}

fn decode_png(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| CliError::image(path, e))
}

/// Grayscale image scaled to [0, 1]. Colour images are converted to luma.
pub fn read_gray_png(path: &Path, res: Resolution) -> Result<Raster<f64>> {
    let img = decode_png(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px: Vec<f64> = match img {
        DynamicImage::ImageLuma16(g) => g.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect(),
        other => other.into_luma8().into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
    };
    Ok(Raster::from_vec(w, h, res, px)?)
}

/// Binary mask: any non-zero luma is foreground.
pub fn read_mask_png(path: &Path, res: Resolution) -> Result<Raster<u8>> {
    let img = decode_png(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = img.into_luma8().into_raw().into_iter().map(|v| u8::from(v != 0)).collect();
    Ok(Raster::from_vec(w, h, res, px)?)
}

/// 8-bit grayscale; values are clamped to [0, 1] and rounded.
pub fn write_gray_png(raster: &Raster<f64>, path: &Path) -> Result<()> {
    let data: Vec<u8> = raster
        .pixels()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    encode_png(path, raster.width(), raster.height(), &data, ExtendedColorType::L8)
}

/// Foreground 255, background 0.
pub fn write_mask_png(mask: &Raster<u8>, path: &Path) -> Result<()> {
    let data: Vec<u8> = mask.pixels().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    encode_png(path, mask.width(), mask.height(), &data, ExtendedColorType::L8)
}

pub fn write_rgb_png(w: usize, h: usize, rgb: &[u8], path: &Path) -> Result<()> {
    encode_png(path, w, h, rgb, ExtendedColorType::Rgb8)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRecord {
    pub x_um: f64,
    pub y_um: f64,
    pub confidence: f64,
}

/// `{"points": [...]}`, optionally with the slide area used for FROC.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionsFile {
    pub points: Vec<PointRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area_mm2: Option<f64>,
}

impl DetectionsFile {
    pub fn from_detections(dets: &[Detection<f64>]) -> Self {
        DetectionsFile {
            points: dets
                .iter()
                .map(|d| PointRecord {
                    x_um: d.x,
                    y_um: d.y,
                    confidence: d.confidence,
                })
                .collect(),
            area_mm2: None,
        }
    }

    pub fn detections(&self) -> Vec<Detection<f64>> {
        self.points
            .iter()
            .map(|p| Detection::new(p.x_um, p.y_um, p.confidence))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: DetectionsFile = read_json(path)?;
        for (i, p) in file.points.iter().enumerate() {
            if !(p.x_um.is_finite() && p.y_um.is_finite() && p.confidence.is_finite()) {
                return Err(CliError::Usage(format!("{}: point {i} is not finite", path.display())));
            }
        }
        Ok(file)
    }
}

pub fn save_detections(dets: &[Detection<f64>], path: &Path) -> Result<()> {
    write_json(&DetectionsFile::from_detections(dets), path)
}

pub fn load_detections(path: &Path) -> Result<Vec<Detection<f64>>> {
    Ok(DetectionsFile::load(path)?.detections())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, &e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Parse and validate a pipeline configuration.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let cfg: PipelineConfig = read_json(path)?;
    cfg.validate()?;
    Ok(cfg)
}
