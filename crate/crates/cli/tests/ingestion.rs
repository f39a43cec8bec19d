//! Tile store reads and file formats.

mod common;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tempfile::tempdir;

use tils_cli::formats::{
    load_config, load_detections, read_gray_png, read_mask_png, save_detections, write_json,
    write_mask_png, DetectionsFile,
};
use tils_cli::manifest::{tile_name, write_level, LevelSpec, Slide, SlideManifest};
use tils_cli::CliError;
use tils_core::{BackendKind, Detection, PipelineConfig, Raster, RasterSource, Resolution};
use tils_testkit::gen;

const RES: Resolution = Resolution::DET_LEVEL;

/// Values that survive 8-bit quantisation exactly.
fn quantised(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Raster<f64> {
    Raster::from_fn(w, h, RES, |_, _| f64::from(rng.gen::<u8>()) / 255.0)
}

fn store(dir: &Path, img: &Raster<f64>, tile: usize) -> Slide {
    write_level(img, &dir.join("tiles"), 0, tile).unwrap();
    let m = SlideManifest {
        slide_id: "t".into(),
        base_mpp: RES.mpp,
        width: img.width(),
        height: img.height(),
        tile_dir: "tiles".into(),
        levels: vec![LevelSpec { level: 0, downsample: 1, tile_size: tile }],
        masks: Default::default(),
        gt_detections: None,
    };
    write_json(&m, &dir.join("manifest.json")).unwrap();
    Slide::open(&dir.join("manifest.json")).unwrap()
}

#[test]
fn single_tile_full_read() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = quantised(&mut rng, 37, 21);
    let slide = store(dir.path(), &img, 64);
    let level = slide.level_at(RES.mpp).unwrap();
    let got = level.read_window(0, 0, 37, 21).unwrap();
    assert_eq!(got.pixels(), img.pixels());
}

#[test]
fn read_outside_bounds_is_zero() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = quantised(&mut rng, 40, 40);
    let slide = store(dir.path(), &img, 16);
    let level = slide.level_at(RES.mpp).unwrap();
    for (x, y) in [(-100, 0), (40, 0), (0, 40), (500, -500)] {
        let w = level.read_window(x, y, 20, 20).unwrap();
        assert!(w.pixels().iter().all(|&v| v == 0.0));
        assert_eq!(w.origin(), (x, y));
    }
}

#[test]
fn windows_match_dense_array() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..20 {
        let dir = tempdir().unwrap();
        let (w, h) = (rng.gen_range(20..150), rng.gen_range(20..150));
        let tile = rng.gen_range(8..48);
        let img = quantised(&mut rng, w, h);
        let slide = store(dir.path(), &img, tile);
        let level = slide.level_at(RES.mpp).unwrap();
        assert_eq!(RasterSource::<f64>::dims(&level), (w, h));
        for _ in 0..30 {
            let x = rng.gen_range(-30..w as i64 + 10);
            let y = rng.gen_range(-30..h as i64 + 10);
            let (ww, wh) = (rng.gen_range(1..2 * tile), rng.gen_range(1..2 * tile));
            let got = level.read_window(x, y, ww, wh).unwrap();
            for j in 0..wh {
                for i in 0..ww {
                    let want = img.get_or_zero(x + i as i64, y + j as i64);
                    assert_eq!(got.get(i, j), want, "case {case} window ({x},{y}) {ww}x{wh}");
                }
            }
        }
        // a window straddling the corner shared by four tiles
        let c = tile as i64;
        if (c as usize) < w && (c as usize) < h {
            let got = level.read_window(c - 3, c - 3, 6, 6).unwrap();
            assert_eq!(got, img.window(c - 3, c - 3, 6, 6));
        }
    }
}

#[test]
fn concurrent_reads_agree() {
    use rayon::prelude::*;
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let img = quantised(&mut rng, 120, 90);
    let slide = store(dir.path(), &img, 16);
    let level = slide.level_at(RES.mpp).unwrap();
    let ok = (0..200i64).into_par_iter().all(|k| {
        let (x, y) = (k % 100 - 10, (k * 7) % 80 - 5);
        level.read_window(x, y, 25, 19).unwrap() == img.window(x, y, 25, 19)
    });
    assert!(ok);
}

#[test]
fn missing_tile_is_named() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = quantised(&mut rng, 64, 64);
    let slide = store(dir.path(), &img, 32);
    let gone = tile_name(0, 1, 1);
    fs::remove_file(dir.path().join("tiles").join(&gone)).unwrap();
    let level = slide.level_at(RES.mpp).unwrap();
    assert!(level.read_window(0, 0, 32, 32).is_ok());
    let err = level.read_window(20, 20, 30, 30).unwrap_err().to_string();
    assert!(err.contains(&gone), "{err}");
}

#[test]
fn manifest_errors() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let img = quantised(&mut rng, 64, 64);
    let slide = store(dir.path(), &img, 32);
    let path = dir.path().join("manifest.json");

    // no level at the requested resolution
    assert!(matches!(slide.level_at(2.0), Err(CliError::Manifest(_))));

    // a mask whose size disagrees with the slide
    let mut m = slide.manifest.clone();
    write_mask_png(&Raster::<u8>::new(10, 10, Resolution::SEG_LEVEL), &dir.path().join("t.png")).unwrap();
    m.masks.insert("tumour".into(), tils_cli::manifest::MaskRef { path: "t.png".into(), mpp: 1.0 });
    write_json(&m, &path).unwrap();
    let s = Slide::open(&path).unwrap();
    assert!(matches!(s.mask("tumour", 1.0), Err(CliError::Manifest(_))));

    // a referenced file that does not exist
    m.masks.get_mut("tumour").unwrap().path = "nope.png".into();
    write_json(&m, &path).unwrap();
    assert!(matches!(Slide::open(&path), Err(CliError::Manifest(_))));

    // non-positive mpp and unknown keys
    let mut v = serde_json::to_value(&slide.manifest).unwrap();
    v["base_mpp"] = json!(0.0);
    write_json(&v, &path).unwrap();
    assert!(matches!(Slide::open(&path), Err(CliError::Manifest(_))));
    let mut v = serde_json::to_value(&slide.manifest).unwrap();
    v["extra"] = json!(1);
    write_json(&v, &path).unwrap();
    assert!(matches!(Slide::open(&path), Err(CliError::Parse { .. })));
}

#[test]
fn mask_resampling_from_manifest() {
    let dir = tempdir().unwrap();
    let img = Raster::<f64>::new(40, 30, RES);
    let slide = store(dir.path(), &img, 16);
    let mut m = slide.manifest.clone();
    let tumour = Raster::from_fn(20, 15, Resolution::SEG_LEVEL, |x, y| u8::from(x < 7 && y > 4));
    write_mask_png(&tumour, &dir.path().join("t.png")).unwrap();
    m.masks.insert("tumour".into(), tils_cli::manifest::MaskRef { path: "t.png".into(), mpp: 1.0 });
    let path = dir.path().join("manifest.json");
    write_json(&m, &path).unwrap();
    let s = Slide::open(&path).unwrap();
    assert_eq!(s.mask("tumour", 1.0).unwrap().unwrap(), tumour);
    let fine = s.mask("tumour", 0.5).unwrap().unwrap();
    assert_eq!(fine.dims(), (40, 30));
    for y in 0..30 {
        for x in 0..40 {
            assert_eq!(fine.get(x, y), tumour.get(x / 2, y / 2));
        }
    }
    assert!(s.mask("stroma", 1.0).unwrap().is_none());
}

#[test]
fn png_round_trips() {
    let dir = tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let img = quantised(&mut rng, 33, 17);
    let p = dir.path().join("g.png");
    tils_cli::formats::write_gray_png(&img, &p).unwrap();
    assert_eq!(read_gray_png(&p, RES).unwrap(), img);
    let mask = gen::random_mask(&mut rng, 29, 31, 0.4);
    let p = dir.path().join("m.png");
    write_mask_png(&mask, &p).unwrap();
    assert_eq!(read_mask_png(&p, Resolution::SEG_LEVEL).unwrap(), mask);
}

#[test]
fn empty_detections_file() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("d.json");
    save_detections(&[], &p).unwrap();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
    assert_eq!(v, json!({"points": []}));
    assert!(load_detections(&p).unwrap().is_empty());
}

#[test]
fn detections_round_trip() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("d.json");
    let one = [Detection::new(12.345678, 0.125, 0.73)];
    save_detections(&one, &p).unwrap();
    let back = load_detections(&p).unwrap();
    assert!((back[0].x - one[0].x).abs() <= 1e-6 && (back[0].y - one[0].y).abs() <= 1e-6);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let many: Vec<Detection<f64>> = (0..1000)
        .map(|_| Detection::new(rng.gen_range(0.0..1e5), rng.gen_range(0.0..1e5), rng.gen()))
        .collect();
    save_detections(&many, &p).unwrap();
    let back = load_detections(&p).unwrap();
    assert_eq!(back.len(), many.len());
    for (a, b) in many.iter().zip(&back) {
        assert!((a.x - b.x).abs() <= 1e-6);
        assert!((a.y - b.y).abs() <= 1e-6);
        assert_eq!(a.confidence, b.confidence);
    }
}

#[test]
fn malformed_detections_report_line() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("d.json");
    fs::write(&p, "{\n  \"points\": [\n    {\"x_um\": 1.0, \"y_um\": oops}\n  ]\n}\n").unwrap();
    match DetectionsFile::load(&p) {
        Err(e @ CliError::Parse { line: 3, .. }) => assert!(e.to_string().contains("d.json:3:")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn config_round_trip_and_rejection() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("c.json");
    let mut cfg = PipelineConfig {
        backend: BackendKind::Luminance,
        workers: 3,
        ..Default::default()
    };
    cfg.bulk.max_edge_um = 123.5;
    cfg.eval.froc_targets = vec![1.0, 2.5];
    write_json(&cfg, &p).unwrap();
    let back = load_config(&p).unwrap();
    assert_eq!(back, cfg);
    write_json(&back, &p).unwrap();
    assert_eq!(load_config(&p).unwrap(), cfg);

    fs::write(&p, r#"{"det": {"nms_radius": 4}}"#).unwrap();
    assert!(matches!(load_config(&p), Err(CliError::Parse { .. })));
    fs::write(&p, r#"{"det": {"threshold": 2.0}}"#).unwrap();
    assert!(matches!(load_config(&p), Err(CliError::Core(_))));
}

#[test]
fn readme_lists_the_default_config() {
    let readme = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let section = &readme[readme.find("### Configuration").unwrap()..];
    let start = section.find("```json\n").unwrap() + 8;
    let end = start + section[start..].find("```").unwrap();
    let cfg: PipelineConfig = serde_json::from_str(&section[start..end]).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}
