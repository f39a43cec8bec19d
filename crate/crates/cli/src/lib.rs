//! File formats, tile-store ingestion, overlays and the `tils` commands.

pub mod backends;
pub mod commands;
pub mod error;
pub mod evaluate;
pub mod formats;
pub mod manifest;
pub mod render;

pub use error::{CliError, Result};
pub use formats::{load_config, load_detections, save_detections, DetectionsFile, PointRecord};
pub use manifest::{Slide, SlideLevel, SlideManifest};
pub use render::render_overlay;
