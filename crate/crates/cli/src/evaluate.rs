//! Evaluation of pipeline outputs against ground truth.
//!
//! `pred` and `gt` are either one slide directory each, or directories with
//! one subdirectory per slide. Per-slide files:
//!
//! | task        | file                          |
//! |-------------|-------------------------------|
//! | `dice`      | `tumour.png`, `stroma.png`    |
//! | `detection` | `detections.json`             |
//! | `tils`      | `result.json` (`tils_score`)  |
//!
//! Slides are evaluated in parallel and reported in name order.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Map, Value};
use tils_core::scalar::exact_mean;
use tils_core::{
    dice, f1_precision_recall, froc, match_detections, pearson, PipelineConfig, Resolution,
};

use crate::error::{CliError, Result};
use crate::formats::{read_json, read_mask_png, DetectionsFile};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Dice,
    Detection,
    Tils,
}

impl Task {
    fn key_file(self) -> &'static str {
        match self {
            Task::Dice => "tumour.png",
            Task::Detection => "detections.json",
            Task::Tils => "result.json",
        }
    }

    fn name(self) -> &'static str {
        match self {
            Task::Dice => "dice",
            Task::Detection => "detection",
            Task::Tils => "tils",
        }
    }
}

/// `(slide name, pred dir, gt dir)` in name order.
fn pair_slides(pred: &Path, gt: &Path, key: &str) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if gt.join(key).is_file() {
        let name = gt
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "slide".into());
        return Ok(vec![(name, pred.to_path_buf(), gt.to_path_buf())]);
    }
    let entries = fs::read_dir(gt).map_err(|e| CliError::io(gt, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(gt, e))?;
        let dir = entry.path();
        if dir.is_dir() && dir.join(key).is_file() {
            let name = entry.file_name().to_string_lossy().into_owned();
            out.push((name.clone(), pred.join(&name), dir));
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("no slides with {key} under {}", gt.display())));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn dice_slide(pred: &Path, gt: &Path) -> Result<Value> {
    let res = Resolution::SEG_LEVEL;
    let mut per_class = Map::new();
    let mut both = Vec::new();
    for class in ["tumour", "stroma"] {
        let file = format!("{class}.png");
        let p = read_mask_png(&pred.join(&file), res)?;
        let g = read_mask_png(&gt.join(&file), res)?;
        let d: f64 = dice(&p, &g).map_err(|e| CliError::Usage(format!("{class}: {e}")))?;
        both.push(d);
        per_class.insert(class.into(), json!(d));
    }
    per_class.insert("mean".into(), json!((both[0] + both[1]) / 2.0));
    Ok(Value::Object(per_class))
}

fn detection_slide(pred: &Path, gt: &Path, cfg: &PipelineConfig, area: Option<f64>) -> Result<Value> {
    let preds = DetectionsFile::load(&pred.join("detections.json"))?.detections();
    let gt_file = DetectionsFile::load(&gt.join("detections.json"))?;
    let gts: Vec<(f64, f64)> = gt_file.points.iter().map(|p| (p.x_um, p.y_um)).collect();
    let r = cfg.eval.hit_radius_um;
    let m = match_detections(&preds, &gts, r)?;
    let (f1, recall, precision) = f1_precision_recall(&m);
    let area = gt_file.area_mm2.or(area).ok_or_else(|| {
        CliError::Usage(format!(
            "{}: no area_mm2 in ground truth and no --manifest given",
            gt.display()
        ))
    })?;
    let curve = froc(&preds, &gts, r, area, &cfg.eval.froc_targets)?;
    Ok(json!({
        "tp": m.tp,
        "fp": m.fp,
        "fn": m.fn_,
        "f1": f1,
        "recall": recall,
        "precision": precision,
        "area_mm2": area,
        "froc": curve.score,
        "froc_at_targets": curve.at_targets,
    }))
}

fn tils_slide(pred: &Path, gt: &Path) -> Result<Value> {
    let score = |dir: &Path| -> Result<f64> {
        let path = dir.join("result.json");
        let v: Value = read_json(&path)?;
        v.get("tils_score")
            .and_then(Value::as_f64)
            .ok_or_else(|| CliError::Usage(format!("{}: no numeric tils_score", path.display())))
    };
    Ok(json!({"pred": score(pred)?, "gt": score(gt)?}))
}

fn field(slides: &[(String, Value)], key: &str) -> Vec<f64> {
    slides.iter().filter_map(|(_, v)| v[key].as_f64()).collect()
}

fn aggregate(task: Task, slides: &[(String, Value)]) -> Value {
    match task {
        Task::Dice => {
            let col = |class: &str| -> Vec<f64> {
                slides.iter().filter_map(|(_, v)| v[class].as_f64()).collect()
            };
            json!({
                "tumour": exact_mean(&col("tumour")),
                "stroma": exact_mean(&col("stroma")),
                "mean": exact_mean(&col("mean")),
            })
        }
        Task::Detection => {
            let sum = |k: &str| slides.iter().filter_map(|(_, v)| v[k].as_u64()).sum::<u64>() as usize;
            let m = tils_core::MatchResult::<f64> {
                tp: sum("tp"),
                fp: sum("fp"),
                fn_: sum("fn"),
                pairs: Vec::new(),
            };
            let (f1, recall, precision) = f1_precision_recall(&m);
            json!({
                "tp": m.tp,
                "fp": m.fp,
                "fn": m.fn_,
                "f1": f1,
                "recall": recall,
                "precision": precision,
                "froc": exact_mean(&field(slides, "froc")),
            })
        }
        Task::Tils => {
            let xs = field(slides, "pred");
            let ys = field(slides, "gt");
            let mae = exact_mean(&xs.iter().zip(&ys).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>());
            match pearson(&xs, &ys) {
                Ok(r) => json!({"pearson": r, "mae": mae}),
                Err(e) => {
                    log::warn!("pearson: {e}");
                    json!({"pearson": null, "pearson_error": e.to_string(), "mae": mae})
                }
            }
        }
    }
}

/// Evaluation report: `{"task", "slides": {name: {...}}, "aggregate": {...}}`.
pub fn evaluate(
    task: Task,
    pred: &Path,
    gt: &Path,
    cfg: &PipelineConfig,
    area_mm2: Option<f64>,
) -> Result<Value> {
    let slides = pair_slides(pred, gt, task.key_file())?;
    let results: Vec<(String, Value)> = slides
        .par_iter()
        .map(|(name, p, g)| {
            let v = match task {
                Task::Dice => dice_slide(p, g),
                Task::Detection => detection_slide(p, g, cfg, area_mm2),
                Task::Tils => tils_slide(p, g),
            };
            v.map(|v| (name.clone(), v))
        })
        .collect::<Result<_>>()?;
    let agg = aggregate(task, &results);
    let per_slide: Map<String, Value> = results.into_iter().collect();
    Ok(json!({
        "task": task.name(),
        "slides": per_slide,
        "aggregate": agg,
    }))
}
