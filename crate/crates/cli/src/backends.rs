//! Building backend ensembles from the configuration.

use std::sync::Arc;

use tils_core::{
    dilate_gt_points, BackendKind, Ensemble, ExternalBackend, Flavor, LuminanceBackend,
    PassthroughBackend, PipelineConfig, Resolution, SegmentationBackend,
};

use crate::error::{CliError, Result};
use crate::formats::load_detections;
use crate::manifest::Slide;

type Backend = Arc<dyn SegmentationBackend<f64>>;

fn external(commands: &[Vec<String>], flavor: Flavor, patch: usize) -> Result<Ensemble<f64>> {
    let members = commands
        .iter()
        .map(|argv| {
            ExternalBackend::spawn(argv, flavor, (patch, patch))
                .map(|b| Arc::new(b) as Backend)
                .map_err(|e| CliError::Usage(format!("cannot start backend `{}`: {e}", argv.join(" "))))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble::new(members)?)
}

pub fn segmentation_ensemble(slide: &Slide, cfg: &PipelineConfig) -> Result<Ensemble<f64>> {
    let k = cfg.ensemble.seg_members;
    let backend: Backend = match cfg.backend {
        BackendKind::External => return external(&cfg.external.seg, Flavor::Segmentation, cfg.seg.patch),
        BackendKind::Luminance => Arc::new(LuminanceBackend::new(Flavor::Segmentation)),
        BackendKind::Passthrough => {
            let need = |name: &str| {
                slide.mask(name, cfg.seg.mpp)?.ok_or_else(|| {
                    CliError::Manifest(format!("passthrough backend needs a `{name}` mask"))
                })
            };
            let tumour = need("tumour")?;
            let stroma = need("stroma")?;
            Arc::new(PassthroughBackend::segmentation(tumour.cast(), stroma.cast())?)
        }
    };
    Ok(Ensemble::replicate(backend, k)?)
}

pub fn detection_ensemble(slide: &Slide, cfg: &PipelineConfig) -> Result<Ensemble<f64>> {
    let k = cfg.ensemble.det_members;
    let backend: Backend = match cfg.backend {
        BackendKind::External => return external(&cfg.external.det, Flavor::Detection, cfg.det.patch),
        BackendKind::Luminance => Arc::new(LuminanceBackend::new(Flavor::Detection)),
        BackendKind::Passthrough => {
            let mpp = cfg.det.mpp;
            let til = match (slide.mask("til", mpp)?, slide.gt_path()) {
                (Some(m), _) => m,
                (None, Some(gt)) => {
                    let level = slide.level_at(mpp)?;
                    let dims = tils_core::RasterSource::<f64>::dims(&level);
                    let points: Vec<(usize, usize)> = load_detections(&gt)?
                        .iter()
                        .filter(|d| d.x >= 0.0 && d.y >= 0.0)
                        .map(|d| ((d.x / mpp) as usize, (d.y / mpp) as usize))
                        .filter(|&(x, y)| x < dims.0 && y < dims.1)
                        .collect();
                    dilate_gt_points(&points, cfg.det.gt_dilate_radius_px, dims, Resolution::new(mpp)?)?
                }
                (None, None) => {
                    return Err(CliError::Manifest(
                        "passthrough backend needs a `til` mask or gt_detections".into(),
                    ))
                }
            };
            Arc::new(PassthroughBackend::detection(til.cast()))
        }
    };
    Ok(Ensemble::replicate(backend, k)?)
}
