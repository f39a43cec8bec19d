//! Whole-slide TILs scoring.
//!
//! The pipeline segments tumour and stroma, grows the tumour into a tumour
//! bulk, keeps the stroma inside it, detects TILs there and reports
//! `T = N * A_TIL / A_TAS * 100` as an integer in `[0, 100]`.
//!
//! Everything numeric is generic over the scalar: rasters over [`Pixel`]
//! (`u8` masks, `f32`/`f64` probability maps), geometry and metrics over
//! [`Real`]. The aliases below name the usual instantiations.

// `!(x > 0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backend;
pub mod bulk;
pub mod config;
pub mod delaunay;
pub mod detection;
pub mod error;
pub mod metrics;
pub mod morphology;
pub mod raster;
pub mod scalar;
pub mod tiling;

pub use backend::{
    ensemble_average, run_detection, run_segmentation, threshold, ClassProbs, Ensemble,
    ExternalBackend, Flavor, LuminanceBackend, PassthroughBackend, SegClass, SegMasks,
    SegmentationBackend,
};
pub use bulk::{
    count_tils_in_mask, detect_tils, score_wsi, tils_score, tumour_associated_stroma,
    tumour_bulk, BulkParams, ScoredSlide, TilsResult,
};
pub use config::{BackendKind, PipelineConfig};
pub use detection::{
    components_to_detections, connected_components, dilate_gt_points, nms, Component,
    Connectivity, Detection,
};
pub use error::{Error, Result};
pub use metrics::{
    dice, f1_precision_recall, froc, match_detections, mean_tumour_stroma_dice, pearson,
    FrocCurve, MatchResult,
};
pub use morphology::{morph, MorphOp};
pub use raster::{central_crop, resample, resample_mask, Raster, RasterSource, Resolution};
pub use scalar::{Pixel, Real};
pub use tiling::{extract_patch, plan_tiles, stitch, StitchMode, TileCoord, TilePlan};

/// Binary mask.
pub type Mask = Raster<u8>;
/// Single-precision probability map.
pub type ProbMap32 = Raster<f32>;
/// Double-precision probability map.
pub type ProbMap64 = Raster<f64>;
pub type Detection32 = Detection<f32>;
pub type Detection64 = Detection<f64>;
pub type TilsResult64 = TilsResult<f64>;
pub type Ensemble64 = Ensemble<f64>;
