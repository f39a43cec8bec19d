#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tils_cli::formats::{write_json, write_mask_png, DetectionsFile, PointRecord};
use tils_cli::manifest::{write_level, LevelSpec, MaskRef, SlideManifest};
use tils_core::{Raster, Resolution};
use tils_testkit::fixtures::ScoringSlide;

pub const TILE: usize = 512;

/// Store a slide with levels at 0.5 and 1.0 mpp, tumour and stroma masks at
/// 1.0 mpp and ground-truth TIL points. Returns the manifest path.
pub fn write_slide(
    dir: &Path,
    id: &str,
    seg_image: &Raster<f64>,
    det_image: &Raster<f64>,
    tumour: &Raster<u8>,
    stroma: &Raster<u8>,
    tils_um: &[(f64, f64)],
) -> PathBuf {
    let tiles = dir.join("tiles");
    write_level(det_image, &tiles, 0, TILE).unwrap();
    write_level(seg_image, &tiles, 1, TILE).unwrap();
    write_mask_png(tumour, &dir.join("tumour_gt.png")).unwrap();
    write_mask_png(stroma, &dir.join("stroma_gt.png")).unwrap();
    let gt = DetectionsFile {
        points: tils_um
            .iter()
            .map(|&(x, y)| PointRecord { x_um: x, y_um: y, confidence: 1.0 })
            .collect(),
        area_mm2: None,
    };
    write_json(&gt, &dir.join("gt.json")).unwrap();
    let mut masks = BTreeMap::new();
    masks.insert("tumour".to_string(), MaskRef { path: "tumour_gt.png".into(), mpp: 1.0 });
    masks.insert("stroma".to_string(), MaskRef { path: "stroma_gt.png".into(), mpp: 1.0 });
    let manifest = SlideManifest {
        slide_id: id.into(),
        base_mpp: 0.5,
        width: det_image.width(),
        height: det_image.height(),
        tile_dir: "tiles".into(),
        levels: vec![
            LevelSpec { level: 0, downsample: 1, tile_size: TILE },
            LevelSpec { level: 1, downsample: 2, tile_size: TILE },
        ],
        masks,
        gt_detections: Some("gt.json".into()),
    };
    let path = dir.join("manifest.json");
    write_json(&manifest, &path).unwrap();
    path
}

pub fn write_scoring_slide(dir: &Path, fx: &ScoringSlide) -> PathBuf {
    write_slide(
        dir,
        "scoring",
        &fx.image(Resolution::SEG_LEVEL),
        &fx.image(Resolution::DET_LEVEL),
        &fx.tumour,
        &fx.stroma,
        &fx.tils_um,
    )
}

/// A slide with no tissue and no TILs.
pub fn write_background_slide(dir: &Path, side_um: usize) -> PathBuf {
    let seg = Resolution::SEG_LEVEL;
    let det = Resolution::DET_LEVEL;
    let empty = Raster::<u8>::new(side_um, side_um, seg);
    write_slide(
        dir,
        "background",
        &Raster::filled(side_um, side_um, seg, 0.9),
        &Raster::filled(2 * side_um, 2 * side_um, det, 0.9),
        &empty,
        &empty,
        &[],
    )
}

pub fn tils(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tils"))
        .args(args)
        .output()
        .expect("run tils")
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}
