//! Whole-pipeline scoring on constructed slides with passthrough backends.

use std::sync::Arc;

use tils_core::{
    dilate_gt_points, score_wsi, Ensemble, PassthroughBackend, PipelineConfig, Raster,
    Resolution, SegmentationBackend,
};
use tils_testkit::fixtures::ScoringSlide;
use tils_testkit::oracle::score_rational;

struct Slide {
    seg_src: Raster<f64>,
    det_src: Raster<f64>,
    seg: Ensemble<f64>,
    det: Ensemble<f64>,
}

fn passthrough(tumour: &Raster<u8>, stroma: &Raster<u8>, tils: &[(usize, usize)], cfg: &PipelineConfig) -> Slide {
    let seg_res = Resolution::SEG_LEVEL;
    let det_res = Resolution::DET_LEVEL;
    let (w, h) = tumour.dims();
    let til_mask = dilate_gt_points(tils, cfg.det.gt_dilate_radius_px, (2 * w, 2 * h), det_res).unwrap();
    let seg_b: Arc<dyn SegmentationBackend<f64>> =
        Arc::new(PassthroughBackend::segmentation(tumour.cast(), stroma.cast()).unwrap());
    let det_b: Arc<dyn SegmentationBackend<f64>> = Arc::new(PassthroughBackend::detection(til_mask.cast()));
    Slide {
        seg_src: Raster::new(w, h, seg_res),
        det_src: Raster::new(2 * w, 2 * h, det_res),
        seg: Ensemble::replicate(seg_b, cfg.ensemble.seg_members).unwrap(),
        det: Ensemble::replicate(det_b, cfg.ensemble.det_members).unwrap(),
    }
}

#[test]
fn fixture_scores_twenty_for_any_worker_count() {
    let fx = ScoringSlide::new(995);
    let mut cfg = PipelineConfig::default();
    let s = passthrough(&fx.tumour, &fx.stroma, &fx.til_pixels(Resolution::DET_LEVEL), &cfg);
    let want = score_rational(995, 1e6, cfg.score.a_til_um2).unwrap();
    assert_eq!(want, 20);
    let mut first = None;
    for workers in [1, 4, 8] {
        cfg.workers = workers;
        let out = score_wsi(&s.seg_src, &s.det_src, &s.seg, &s.det, &cfg).unwrap();
        assert_eq!(out.result.n_tils, 995);
        assert_eq!(out.result.a_tas_um2, fx.tas_area_um2);
        assert_eq!(out.result.tils_score, want);
        // 512 µm outer tiles: only the column past x = 1536 µm misses the TAS
        assert_eq!(out.detections.len(), fx.tils_um.len() - 1);
        match &first {
            None => first = Some(out.detections.clone()),
            Some(d) => assert_eq!(d, &out.detections),
        }
    }
}

#[test]
fn background_slide_scores_zero() {
    let cfg = PipelineConfig::default();
    let empty = Raster::<u8>::new(700, 600, Resolution::SEG_LEVEL);
    let s = passthrough(&empty, &empty, &[], &cfg);
    let out = score_wsi(&s.seg_src, &s.det_src, &s.seg, &s.det, &cfg).unwrap();
    assert_eq!((out.result.n_tils, out.result.a_tas_um2, out.result.tils_score), (0, 0.0, 0));
}

#[test]
fn stroma_outside_bulk_scores_zero() {
    let cfg = PipelineConfig::default();
    let res = Resolution::SEG_LEVEL;
    let tumour = Raster::from_fn(800, 600, res, |x, y| u8::from((50..300).contains(&x) && (50..300).contains(&y)));
    let stroma = Raster::from_fn(800, 600, res, |x, y| u8::from((450..750).contains(&x) && (50..550).contains(&y)));
    let tils: Vec<(usize, usize)> = (0..40).map(|i| (950 + 10 * i, 300 + 20 * i)).collect();
    let s = passthrough(&tumour, &stroma, &tils, &cfg);
    let out = score_wsi(&s.seg_src, &s.det_src, &s.seg, &s.det, &cfg).unwrap();
    assert_eq!(out.result.a_tas_um2, 0.0);
    assert_eq!(out.result.tils_score, 0);
}
