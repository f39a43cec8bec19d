//! Slide manifests and the PNG tile store.
//!
//! A slide is a directory of grayscale PNG tiles named
//! `L{level}_X{col}_Y{row}.png` plus a JSON manifest:
//!
//! ```json
//! {
//!   "slide_id": "s01",
//!   "base_mpp": 0.5,
//!   "width": 40000,
//!   "height": 30000,
//!   "tile_dir": "tiles",
//!   "levels": [
//!     {"level": 0, "downsample": 1, "tile_size": 512},
//!     {"level": 1, "downsample": 2, "tile_size": 512}
//!   ],
//!   "masks": {"tumour": {"path": "tumour.png", "mpp": 1.0}},
//!   "gt_detections": "gt.json"
//! }
//! ```
//!
//! Paths are relative to the manifest. Level `l` is `ceil(width / downsample)`
//! pixels wide at `base_mpp * downsample` microns per pixel.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tils_core::{Raster, RasterSource, Resolution};

use crate::error::{CliError, Result};
use crate::formats::{read_gray_png, read_mask_png};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub level: u32,
    pub downsample: u32,
    pub tile_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRef {
    pub path: PathBuf,
    pub mpp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlideManifest {
    pub slide_id: String,
    pub base_mpp: f64,
    pub width: usize,
    pub height: usize,
    pub tile_dir: PathBuf,
    pub levels: Vec<LevelSpec>,
    /// Class masks by name (`tumour`, `stroma`, `til`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub masks: BTreeMap<String, MaskRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_detections: Option<PathBuf>,
}

impl SlideManifest {
    pub fn level_dims(&self, spec: &LevelSpec) -> (usize, usize) {
        let d = spec.downsample as usize;
        (self.width.div_ceil(d), self.height.div_ceil(d))
    }

    pub fn level_mpp(&self, spec: &LevelSpec) -> f64 {
        self.base_mpp * f64::from(spec.downsample)
    }

    /// Extent in mm² of the base level.
    pub fn area_mm2(&self) -> f64 {
        self.width as f64 * self.height as f64 * self.base_mpp * self.base_mpp / 1e6
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Manifest(msg));
        if !(self.base_mpp.is_finite() && self.base_mpp > 0.0) {
            return bad(format!("base_mpp must be positive, got {}", self.base_mpp));
        }
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive".into());
        }
        if self.levels.is_empty() {
            return bad("no levels".into());
        }
        let mut seen = Vec::new();
        for l in &self.levels {
            if l.downsample == 0 || l.tile_size == 0 {
                return bad(format!("level {}: downsample and tile_size must be positive", l.level));
            }
            if seen.contains(&l.level) {
                return bad(format!("level {} listed twice", l.level));
            }
            seen.push(l.level);
        }
        for (name, m) in &self.masks {
            if !(m.mpp.is_finite() && m.mpp > 0.0) {
                return bad(format!("mask {name}: mpp must be positive"));
            }
        }
        Ok(())
    }

    /// Expected mask size at `mpp`.
    fn dims_at(&self, mpp: f64) -> (usize, usize) {
        let f = self.base_mpp / mpp;
        (
            (self.width as f64 * f).ceil() as usize,
            (self.height as f64 * f).ceil() as usize,
        )
    }
}

/// An opened slide: manifest plus the directory it lives in.
#[derive(Debug)]
pub struct Slide {
    pub manifest: SlideManifest,
    pub dir: PathBuf,
}

impl Slide {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path)
            .map_err(|e| CliError::io(manifest_path, e))?;
        let manifest: SlideManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::json(manifest_path, &e))?;
        manifest.validate()?;
        let dir = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        let slide = Slide { manifest, dir };
        for name in slide.manifest.masks.keys() {
            let path = slide.dir.join(&slide.manifest.masks[name].path);
            if !path.is_file() {
                return Err(CliError::Manifest(format!(
                    "mask {name}: {} does not exist",
                    path.display()
                )));
            }
        }
        if let Some(gt) = &slide.manifest.gt_detections {
            let path = slide.dir.join(gt);
            if !path.is_file() {
                return Err(CliError::Manifest(format!(
                    "gt_detections: {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(slide)
    }

    /// The level stored at `mpp`.
    pub fn level_at(&self, mpp: f64) -> Result<SlideLevel> {
        let m = &self.manifest;
        let spec = m
            .levels
            .iter()
            .find(|l| (m.level_mpp(l) - mpp).abs() <= 1e-6 * mpp)
            .ok_or_else(|| {
                let have: Vec<String> = m.levels.iter().map(|l| m.level_mpp(l).to_string()).collect();
                CliError::Manifest(format!(
                    "no level at {mpp} mpp (levels at {} mpp)",
                    have.join(", ")
                ))
            })?;
        let (width, height) = m.level_dims(spec);
        Ok(SlideLevel {
            tile_dir: self.dir.join(&m.tile_dir),
            level: spec.level,
            tile_size: spec.tile_size,
            width,
            height,
            resolution: Resolution::new(m.level_mpp(spec))?,
            cache: Mutex::new(HashMap::new()),
        })
    }

    /// A named class mask, resampled to `mpp` if stored at another level.
    pub fn mask(&self, name: &str, mpp: f64) -> Result<Option<Raster<u8>>> {
        let Some(r) = self.manifest.masks.get(name) else {
            return Ok(None);
        };
        let path = self.dir.join(&r.path);
        let raw = read_mask_png(&path, Resolution::new(r.mpp)?)?;
        if raw.dims() != self.manifest.dims_at(r.mpp) {
            return Err(CliError::Manifest(format!(
                "mask {name} is {}x{}, slide at {} mpp is {}x{}",
                raw.width(),
                raw.height(),
                r.mpp,
                self.manifest.dims_at(r.mpp).0,
                self.manifest.dims_at(r.mpp).1
            )));
        }
        let target = Resolution::new(mpp)?;
        let out = tils_core::resample_mask(&raw, target)?;
        // ceil-sized levels can differ by a pixel after resampling
        let (w, h) = self.manifest.dims_at(mpp);
        Ok(Some(out.window(0, 0, w, h)))
    }

    pub fn gt_path(&self) -> Option<PathBuf> {
        self.manifest.gt_detections.as_ref().map(|p| self.dir.join(p))
    }
}

type TileCache = Mutex<HashMap<(usize, usize), Arc<Raster<f64>>>>;

/// Upper bound on decoded tiles kept per level.
const CACHE_TILES: usize = 512;

/// One pyramid level, read lazily tile by tile. Safe to share across threads.
#[derive(Debug)]
pub struct SlideLevel {
    tile_dir: PathBuf,
    level: u32,
    tile_size: usize,
    width: usize,
    height: usize,
    resolution: Resolution,
    cache: TileCache,
}

pub fn tile_name(level: u32, col: usize, row: usize) -> String {
    format!("L{level}_X{col}_Y{row}.png")
}

impl SlideLevel {
    fn tile(&self, col: usize, row: usize) -> Result<Arc<Raster<f64>>> {
        if let Some(t) = self.cache.lock().expect("tile cache").get(&(col, row)) {
            return Ok(t.clone());
        }
        let name = tile_name(self.level, col, row);
        let path = self.tile_dir.join(&name);
        if !path.is_file() {
            return Err(CliError::MissingTile(path));
        }
        let img = read_gray_png(&path, self.resolution)?;
        let ts = self.tile_size;
        let want = (
            ts.min(self.width - col * ts),
            ts.min(self.height - row * ts),
        );
        // edge tiles may be stored cropped or full-size
        if img.dims() != want && img.dims() != (ts, ts) {
            return Err(CliError::Manifest(format!(
                "tile {name} is {}x{}, expected {}x{}",
                img.width(),
                img.height(),
                want.0,
                want.1
            )));
        }
        let tile = Arc::new(img.with_origin(((col * ts) as i64, (row * ts) as i64)));
        let mut cache = self.cache.lock().expect("tile cache");
        if cache.len() >= CACHE_TILES {
            cache.clear();
        }
        cache.insert((col, row), tile.clone());
        Ok(tile)
    }
}

impl RasterSource<f64> for SlideLevel {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn resolution(&self) -> Resolution {
        self.resolution
    }

    fn read_window(&self, x: i64, y: i64, w: usize, h: usize) -> tils_core::Result<Raster<f64>> {
        let mut out = Raster::new(w, h, self.resolution).with_origin((x, y));
        let ts = self.tile_size as i64;
        let x0 = x.max(0);
        let y0 = y.max(0);
        let x1 = (x + w as i64).min(self.width as i64);
        let y1 = (y + h as i64).min(self.height as i64);
        if x0 >= x1 || y0 >= y1 {
            return Ok(out);
        }
        for row in (y0 / ts)..=((y1 - 1) / ts) {
            for col in (x0 / ts)..=((x1 - 1) / ts) {
                let tile = self
                    .tile(col as usize, row as usize)
                    .map_err(|e| tils_core::Error::Source(e.to_string()))?;
                let (tx, ty) = tile.origin();
                let cx0 = x0.max(tx);
                let cx1 = x1.min(tx + ts).min(tx + tile.width() as i64);
                let cy0 = y0.max(ty);
                let cy1 = y1.min(ty + ts).min(ty + tile.height() as i64);
                for gy in cy0..cy1 {
                    let src = &tile.row((gy - ty) as usize)[(cx0 - tx) as usize..(cx1 - tx) as usize];
                    let start = (gy - y) as usize * w + (cx0 - x) as usize;
                    out.pixels_mut()[start..start + src.len()].copy_from_slice(src);
                }
            }
        }
        Ok(out)
    }
}

/// Write `raster` (values in [0, 1]) as level `level` of a tile store.
pub fn write_level(raster: &Raster<f64>, tile_dir: &Path, level: u32, tile_size: usize) -> Result<()> {
    fs::create_dir_all(tile_dir).map_err(|e| CliError::io(tile_dir, e))?;
    let (w, h) = raster.dims();
    for row in 0..h.div_ceil(tile_size) {
        for col in 0..w.div_ceil(tile_size) {
            let (x, y) = (col * tile_size, row * tile_size);
            let tw = tile_size.min(w - x);
            let th = tile_size.min(h - y);
            let tile = raster.window(x as i64, y as i64, tw, th);
            crate::formats::write_gray_png(&tile, &tile_dir.join(tile_name(level, col, row)))?;
        }
    }
    Ok(())
}
