//! Pipeline configuration. Every field has a default; unknown keys are
//! rejected when parsing.

use serde::{Deserialize, Serialize};

use crate::bulk::BulkParams;
use crate::detection::Connectivity;
use crate::error::{Error, Result};
use crate::tiling::StitchMode;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Passthrough,
    Luminance,
    External,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backend: BackendKind,
    pub external: ExternalConfig,
    pub ensemble: EnsembleConfig,
    /// Worker threads; 0 means one per logical core.
    pub workers: usize,
    pub seg: SegConfig,
    pub det: DetConfig,
    pub bulk: BulkParams,
    pub score: ScoreConfig,
    pub eval: EvalConfig,
    pub render: RenderConfig,
}

/// Commands (argv) for the external backend, one per ensemble member.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalConfig {
    pub seg: Vec<Vec<String>>,
    pub det: Vec<Vec<String>>,
}

/// Member counts for the built-in stub backends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub seg_members: usize,
    pub det_members: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        // five cross-validation folds for segmentation, top three for detection
        EnsembleConfig {
            seg_members: 5,
            det_members: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassThresholds {
    pub tumour: f64,
    pub stroma: f64,
}

impl Default for ClassThresholds {
    fn default() -> Self {
        ClassThresholds {
            tumour: 0.5,
            stroma: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegConfig {
    pub mpp: f64,
    pub patch: usize,
    pub stride: usize,
    pub pad: usize,
    /// Central crop kept from each patch output.
    pub crop: usize,
    pub threshold: ClassThresholds,
    pub open_radius_px: usize,
}

impl Default for SegConfig {
    fn default() -> Self {
        SegConfig {
            mpp: 1.0,
            patch: 512,
            stride: 256,
            pad: 128,
            crop: 256,
            threshold: ClassThresholds::default(),
            open_radius_px: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetConfig {
    pub mpp: f64,
    /// Outer tile edge.
    pub tile: usize,
    pub patch: usize,
    pub stride: usize,
    pub stitch: StitchMode,
    pub threshold: f64,
    pub connectivity: Connectivity,
    pub min_area_px: usize,
    pub nms_radius_um: f64,
    /// Radius used when rasterizing ground-truth points into TIL masks.
    pub gt_dilate_radius_px: usize,
}

impl Default for DetConfig {
    fn default() -> Self {
        DetConfig {
            mpp: 0.5,
            tile: 1024,
            patch: 128,
            stride: 100,
            stitch: StitchMode::Average,
            threshold: 0.5,
            connectivity: Connectivity::Eight,
            min_area_px: 4,
            nms_radius_um: 8.0,
            gt_dilate_radius_px: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Area of one TIL in square microns (disk of 16 um diameter).
    pub a_til_um2: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            a_til_um2: std::f64::consts::PI * 8.0 * 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub hit_radius_um: f64,
    /// False positives per mm² at which FROC sensitivity is averaged.
    pub froc_targets: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            hit_radius_um: 8.0,
            froc_targets: vec![10.0, 20.0, 50.0, 100.0, 200.0, 300.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Thumbnail downsample relative to the segmentation level.
    pub downsample: usize,
    pub circle_radius_px: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            downsample: 1,
            circle_radius_px: 3,
        }
    }
}

fn check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid(format!("config: {msg}")))
    }
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.seg;
        check(positive(s.mpp), "seg.mpp must be positive")?;
        check(s.patch > 0 && s.stride > 0, "seg.patch and seg.stride must be positive")?;
        check(s.crop > 0 && s.crop <= s.patch, "seg.crop must be in (0, seg.patch]")?;
        check(s.stride <= s.crop, "seg.stride must not exceed seg.crop")?;
        check(
            s.pad >= (s.patch - s.crop).div_ceil(2),
            "seg.pad must be at least half the cropped margin",
        )?;
        check(unit(s.threshold.tumour), "seg.threshold.tumour must be in [0, 1]")?;
        check(unit(s.threshold.stroma), "seg.threshold.stroma must be in [0, 1]")?;

        let d = &self.det;
        check(positive(d.mpp), "det.mpp must be positive")?;
        check(d.tile > 0, "det.tile must be positive")?;
        check(
            d.patch > 0 && d.stride > 0 && d.stride <= d.patch,
            "det.stride must be in (0, det.patch]",
        )?;
        check(unit(d.threshold), "det.threshold must be in [0, 1]")?;
        check(positive(d.nms_radius_um), "det.nms_radius_um must be positive")?;

        self.bulk.validate()?;
        check(positive(self.score.a_til_um2), "score.a_til_um2 must be positive")?;

        let e = &self.eval;
        check(positive(e.hit_radius_um), "eval.hit_radius_um must be positive")?;
        check(!e.froc_targets.is_empty(), "eval.froc_targets must not be empty")?;
        check(
            e.froc_targets.iter().all(|t| t.is_finite() && *t >= 0.0)
                && e.froc_targets.windows(2).all(|w| w[0] < w[1]),
            "eval.froc_targets must be ascending and non-negative",
        )?;

        check(
            self.ensemble.seg_members >= 1 && self.ensemble.det_members >= 1,
            "ensemble sizes must be at least 1",
        )?;
        if self.backend == BackendKind::External {
            check(
                !self.external.seg.is_empty() && !self.external.det.is_empty(),
                "external backend needs external.seg and external.det commands",
            )?;
            check(
                self.external
                    .seg
                    .iter()
                    .chain(&self.external.det)
                    .all(|argv| !argv.is_empty()),
                "external commands must not be empty",
            )?;
        }
        check(self.render.downsample >= 1, "render.downsample must be at least 1")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn default_a_til_is_disk_of_16um() {
        let a = PipelineConfig::default().score.a_til_um2;
        assert!((a - 201.0619).abs() < 1e-4);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = serde_json::from_str::<PipelineConfig>(r#"{"seg": {"open_radius": 3}}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<PipelineConfig>(r#"{"workerz": 3}"#);
        assert!(err.is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: PipelineConfig =
            serde_json::from_str(r#"{"det": {"nms_radius_um": 6.0}, "backend": "luminance"}"#)
                .unwrap();
        assert_eq!(c.det.nms_radius_um, 6.0);
        assert_eq!(c.det.tile, 1024);
        assert_eq!(c.backend, BackendKind::Luminance);
    }

    #[test]
    fn round_trip() {
        let mut c = PipelineConfig {
            backend: BackendKind::External,
            ..Default::default()
        };
        c.external.seg = vec![vec!["model".into(), "--seg".into()]];
        c.external.det = vec![vec!["model".into()]];
        c.det.connectivity = Connectivity::Four;
        let s = serde_json::to_string(&c).unwrap();
        let back: PipelineConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn out_of_range_rejected() {
        let mut c = PipelineConfig::default();
        c.seg.threshold.tumour = 1.5;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.eval.froc_targets = vec![20.0, 10.0];
        assert!(c.validate().is_err());
        let c = PipelineConfig {
            backend: BackendKind::External,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.seg.pad = 10;
        assert!(c.validate().is_err());
    }
}
