//! One function per subcommand. Each reads its inputs, writes its outputs
//! under `out`, and returns what the binary prints.

use std::path::{Path, PathBuf};

use tils_core::{
    detect_tils, resample, resample_mask, run_segmentation, score_wsi, tumour_associated_stroma,
    tumour_bulk, Detection, PipelineConfig, Raster, RasterSource, Resolution, ScoredSlide,
    TilsResult,
};

use crate::backends::{detection_ensemble, segmentation_ensemble};
use crate::error::{CliError, Result};
use crate::evaluate::{evaluate, Task};
use crate::formats::{load_config, load_detections, read_mask_png, save_detections, write_json, write_mask_png};
use crate::manifest::Slide;
use crate::render::{render_overlay, OverlayLayers};

pub const TUMOUR_PNG: &str = "tumour.png";
pub const STROMA_PNG: &str = "stroma.png";
pub const BULK_PNG: &str = "bulk.png";
pub const TAS_PNG: &str = "tas.png";
pub const DETECTIONS_JSON: &str = "detections.json";
pub const RESULT_JSON: &str = "result.json";
pub const OVERLAY_PNG: &str = "overlay.png";
pub const EVALUATION_JSON: &str = "evaluation.json";

/// Configuration from `path`, or the defaults.
pub fn config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn seg_res(cfg: &PipelineConfig) -> Result<Resolution> {
    Ok(Resolution::new(cfg.seg.mpp)?)
}

fn read_masks(dir: &Path, res: Resolution, names: &[&str]) -> Result<Vec<Raster<u8>>> {
    names.iter().map(|n| read_mask_png(&dir.join(n), res)).collect()
}

pub fn segment(manifest: &Path, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let slide = Slide::open(manifest)?;
    let level = slide.level_at(cfg.seg.mpp)?;
    let ensemble = segmentation_ensemble(&slide, cfg)?;
    let masks = run_segmentation(&level, &ensemble, cfg)?;
    write_mask_png(&masks.tumour, &out.join(TUMOUR_PNG))?;
    write_mask_png(&masks.stroma, &out.join(STROMA_PNG))
}

pub fn detect(manifest: &Path, cfg: &PipelineConfig, out: &Path, roi: Option<&Path>) -> Result<usize> {
    let slide = Slide::open(manifest)?;
    let level = slide.level_at(cfg.det.mpp)?;
    let ensemble = detection_ensemble(&slide, cfg)?;
    let roi = roi.map(|p| read_mask_png(p, seg_res(cfg)?)).transpose()?;
    let dets = detect_tils(&level, &ensemble, cfg, roi.as_ref())?;
    save_detections(&dets, &out.join(DETECTIONS_JSON))?;
    Ok(dets.len())
}

/// Bulk and TAS from `tumour.png` and `stroma.png` in `masks` (default `out`).
pub fn bulk(manifest: &Path, cfg: &PipelineConfig, out: &Path, masks: Option<&Path>) -> Result<()> {
    // the manifest is checked even though only the masks are read
    Slide::open(manifest)?;
    let dir = masks.unwrap_or(out);
    let m = read_masks(dir, seg_res(cfg)?, &[TUMOUR_PNG, STROMA_PNG])?;
    let bulk = tumour_bulk(&m[0], &cfg.bulk)?;
    let tas = tumour_associated_stroma(&bulk, &m[1])?;
    write_mask_png(&bulk, &out.join(BULK_PNG))?;
    write_mask_png(&tas, &out.join(TAS_PNG))
}

pub fn run_pipeline(slide: &Slide, cfg: &PipelineConfig) -> Result<ScoredSlide<f64>> {
    let seg_level = slide.level_at(cfg.seg.mpp)?;
    let det_level = slide.level_at(cfg.det.mpp)?;
    let seg = segmentation_ensemble(slide, cfg)?;
    let det = detection_ensemble(slide, cfg)?;
    Ok(score_wsi(&seg_level, &det_level, &seg, &det, cfg)?)
}

fn write_scored(s: &ScoredSlide<f64>, out: &Path) -> Result<()> {
    write_mask_png(&s.masks.tumour, &out.join(TUMOUR_PNG))?;
    write_mask_png(&s.masks.stroma, &out.join(STROMA_PNG))?;
    write_mask_png(&s.bulk, &out.join(BULK_PNG))?;
    write_mask_png(&s.tas, &out.join(TAS_PNG))?;
    save_detections(&s.detections, &out.join(DETECTIONS_JSON))?;
    write_json(&s.result, &out.join(RESULT_JSON))
}

/// Full pipeline; writes every intermediate and returns the score.
pub fn score(manifest: &Path, cfg: &PipelineConfig, out: &Path) -> Result<TilsResult<f64>> {
    let slide = Slide::open(manifest)?;
    let scored = run_pipeline(&slide, cfg)?;
    write_scored(&scored, out)?;
    Ok(scored.result)
}

pub struct EvaluateArgs<'a> {
    pub task: Task,
    pub pred: &'a Path,
    pub gt: &'a Path,
    pub manifest: Option<&'a Path>,
}

pub fn evaluate_cmd(args: &EvaluateArgs, cfg: &PipelineConfig, out: &Path) -> Result<serde_json::Value> {
    let area = args
        .manifest
        .map(|m| Slide::open(m).map(|s| s.manifest.area_mm2()))
        .transpose()?;
    let report = evaluate(args.task, args.pred, args.gt, cfg, area)?;
    write_json(&report, &out.join(EVALUATION_JSON))?;
    Ok(report)
}

/// Overlay of pipeline outputs, read from `from` or computed afresh.
pub fn render(manifest: &Path, cfg: &PipelineConfig, out: &Path, from: Option<&Path>) -> Result<PathBuf> {
    let slide = Slide::open(manifest)?;
    let res = seg_res(cfg)?;
    let (masks, dets): (Vec<Raster<u8>>, Vec<Detection<f64>>) = match from {
        Some(dir) => (
            read_masks(dir, res, &[TUMOUR_PNG, STROMA_PNG, BULK_PNG, TAS_PNG])?,
            load_detections(&dir.join(DETECTIONS_JSON))?,
        ),
        None => {
            let s = run_pipeline(&slide, cfg)?;
            (vec![s.masks.tumour, s.masks.stroma, s.bulk, s.tas], s.detections)
        }
    };
    let level = slide.level_at(cfg.seg.mpp)?;
    let (w, h) = RasterSource::<f64>::dims(&level);
    for m in &masks {
        if m.dims() != (w, h) {
            return Err(CliError::Usage(format!(
                "mask is {}x{}, segmentation level is {w}x{h}",
                m.width(),
                m.height()
            )));
        }
    }
    let full = level.read_window(0, 0, w, h)?;
    let k = cfg.render.downsample;
    let thumb_res = Resolution::new(cfg.seg.mpp * k as f64)?;
    let (thumb, masks) = if k == 1 {
        (full, masks)
    } else {
        let masks = masks
            .iter()
            .map(|m| resample_mask(m, thumb_res))
            .collect::<tils_core::Result<Vec<_>>>()?;
        (resample(&full, thumb_res)?, masks)
    };
    let layers = OverlayLayers {
        tumour: &masks[0],
        stroma: &masks[1],
        bulk: &masks[2],
        tas: &masks[3],
    };
    let path = out.join(OVERLAY_PNG);
    render_overlay(&thumb, &layers, &dets, cfg.render.circle_radius_px, &path)?;
    Ok(path)
}
