//! Tumour bulk, tumour-associated stroma and the TILs score.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::backend::{run_detection, run_segmentation, threshold, Ensemble, SegMasks};
use crate::config::PipelineConfig;
use crate::delaunay::triangulate;
use crate::detection::{
    components_to_detections, connected_components, nms, Component, Connectivity, Detection,
};
use crate::error::{Error, Result};
use crate::morphology::{morph_with_border, Border, MorphOp};
use crate::raster::{Raster, RasterSource};
use crate::scalar::{exact_sum, Pixel, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BulkParams {
    pub pre_close_radius: usize,
    pub min_component_area: usize,
    pub boundary_sample_step: usize,
    pub max_edge_um: f64,
    pub post_fill: bool,
}

impl Default for BulkParams {
    fn default() -> Self {
        BulkParams {
            pre_close_radius: 10,
            min_component_area: 500,
            boundary_sample_step: 8,
            max_edge_um: 250.0,
            post_fill: true,
        }
    }
}

impl BulkParams {
    pub fn validate(&self) -> Result<()> {
        if self.pre_close_radius == 0
            || self.min_component_area == 0
            || self.boundary_sample_step == 0
            || !(self.max_edge_um.is_finite() && self.max_edge_um > 0.0)
        {
            return Err(Error::invalid(
                "bulk parameters must all be positive".to_string(),
            ));
        }
        Ok(())
    }
}

const DIRS: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Outer boundary of an 8-connected component by Moore-neighbour tracing,
/// starting from its first pixel in raster order.
pub fn trace_outer_contour<T: Pixel>(mask: &Raster<T>, start: (u32, u32)) -> Vec<(u32, u32)> {
    let fg = |x: i64, y: i64| mask.get_or_zero(x, y) != T::zero();
    let s = (start.0 as i64, start.1 as i64);
    let step = |c: (i64, i64), back: usize| -> Option<((i64, i64), usize)> {
        for k in 1..8 {
            let dir = (back + k) % 8;
            let n = (c.0 + DIRS[dir].0, c.1 + DIRS[dir].1);
            if fg(n.0, n.1) {
                let nb = if dir.is_multiple_of(2) { (dir + 6) % 8 } else { (dir + 5) % 8 };
                return Some((n, nb));
            }
        }
        None
    };
    let mut contour = vec![start];
    // west of the first raster-order pixel is background
    let Some((first, mut back)) = step(s, 4) else {
        return contour;
    };
    let mut cur = first;
    let limit = 4 * mask.len() + 8;
    for _ in 0..limit {
        let (next, nb) = step(cur, back).expect("pixel on a contour has a neighbour");
        if cur == s && next == first {
            break;
        }
        contour.push((cur.0 as u32, cur.1 as u32));
        cur = next;
        back = nb;
    }
    contour
}

/// Pixel centres inside (or on) the counter-clockwise triangle get set.
fn fill_triangle(out: &mut Raster<u8>, a: (i64, i64), b: (i64, i64), c: (i64, i64)) {
    let edge = |p: (i64, i64), q: (i64, i64), x: i64, y: i64| {
        (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0)
    };
    let x0 = a.0.min(b.0).min(c.0).max(0);
    let y0 = a.1.min(b.1).min(c.1).max(0);
    let x1 = a.0.max(b.0).max(c.0).min(out.width() as i64 - 1);
    let y1 = a.1.max(b.1).max(c.1).min(out.height() as i64 - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            if edge(a, b, x, y) >= 0 && edge(b, c, x, y) >= 0 && edge(c, a, x, y) >= 0 {
                out.set(x as usize, y as usize, 1);
            }
        }
    }
}

/// Set every background pixel not 4-connected to the raster border.
pub fn fill_holes(mask: &mut Raster<u8>) {
    let (w, h) = mask.dims();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |x: usize, y: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<_>| {
        if mask.get(x, y) == 0 && !outside[y * w + x] {
            outside[y * w + x] = true;
            queue.push_back((x, y));
        }
    };
    for x in 0..w {
        seed(x, 0, &mut outside, &mut queue);
        if h > 0 {
            seed(x, h - 1, &mut outside, &mut queue);
        }
    }
    for y in 0..h {
        seed(0, y, &mut outside, &mut queue);
        if w > 0 {
            seed(w - 1, y, &mut outside, &mut queue);
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let mut visit = |nx: usize, ny: usize| {
            let i = ny * w + nx;
            if mask.get(nx, ny) == 0 && !outside[i] {
                outside[i] = true;
                queue.push_back((nx, ny));
            }
        };
        if x > 0 {
            visit(x - 1, y);
        }
        if x + 1 < w {
            visit(x + 1, y);
        }
        if y > 0 {
            visit(x, y - 1);
        }
        if y + 1 < h {
            visit(x, y + 1);
        }
    }
    for (px, out) in mask.pixels_mut().iter_mut().zip(outside) {
        if !out {
            *px = 1;
        }
    }
}

/// Closing followed by removal of components below the area floor.
pub fn clean_tumour<T: Pixel>(tumour_mask: &Raster<T>, params: &BulkParams) -> Result<(Raster<u8>, Vec<Component>)> {
    tumour_mask.require_binary("tumour_bulk")?;
    let mask = tumour_mask.map(|v| u8::from(v != T::zero()));
    let closed = morph_with_border(&mask, MorphOp::Close, params.pre_close_radius, Border::Ignore)?;
    let comps: Vec<Component> = connected_components(&closed, Connectivity::Eight)
        .into_iter()
        .filter(|c| c.area() >= params.min_component_area)
        .collect();
    let mut cleaned = closed.map(|_| 0u8);
    for c in &comps {
        for &(x, y) in &c.pixels {
            cleaned.set(x as usize, y as usize, 1);
        }
    }
    Ok((cleaned, comps))
}

/// Tumour bulk: the cleaned tumour plus the concave hull spanned by its
/// boundary.
///
/// Boundary samples taken every `boundary_sample_step` contour pixels are
/// Delaunay-triangulated; triangles whose longest edge is at most
/// `max_edge_um` are filled. Enclosed holes are then filled if `post_fill`.
pub fn tumour_bulk<T: Pixel>(tumour_mask: &Raster<T>, params: &BulkParams) -> Result<Raster<u8>> {
    params.validate()?;
    let (mut bulk, comps) = clean_tumour(tumour_mask, params)?;

    let mut seen = HashSet::new();
    let mut samples: Vec<(i64, i64)> = Vec::new();
    for c in &comps {
        let contour = trace_outer_contour(&bulk, c.pixels[0]);
        for &(x, y) in contour.iter().step_by(params.boundary_sample_step) {
            if seen.insert((x, y)) {
                samples.push((x as i64, y as i64));
            }
        }
    }

    let triangles = if samples.len() >= 3 {
        triangulate(&samples)
    } else {
        Vec::new()
    };
    let mpp = tumour_mask.resolution().mpp;
    let d2 = |a: (i64, i64), b: (i64, i64)| (a.0 - b.0).pow(2) + (a.1 - b.1).pow(2);
    let mut kept = 0;
    for t in &triangles {
        let (a, b, c) = (samples[t[0]], samples[t[1]], samples[t[2]]);
        let longest = d2(a, b).max(d2(b, c)).max(d2(c, a));
        if (longest as f64).sqrt() * mpp <= params.max_edge_um {
            fill_triangle(&mut bulk, a, b, c);
            kept += 1;
        }
    }
    log::debug!(
        "bulk: {} components, {} samples, {}/{} triangles kept",
        comps.len(),
        samples.len(),
        kept,
        triangles.len()
    );
    if params.post_fill {
        fill_holes(&mut bulk);
    }
    Ok(bulk)
}

/// Stroma inside the tumour bulk.
pub fn tumour_associated_stroma(bulk: &Raster<u8>, stroma: &Raster<u8>) -> Result<Raster<u8>> {
    bulk.check_same_shape(stroma, "tumour_associated_stroma")?;
    let mut out = bulk.clone();
    for (o, &s) in out.pixels_mut().iter_mut().zip(stroma.pixels()) {
        *o = u8::from(*o != 0 && s != 0);
    }
    Ok(out)
}

/// Detections whose containing mask pixel is set.
pub fn count_tils_in_mask<F: Real>(detections: &[Detection<F>], mask: &Raster<u8>) -> usize {
    detections
        .iter()
        .filter(|d| {
            mask.locate_um(d.x.as_f64(), d.y.as_f64())
                .is_some_and(|(x, y)| mask.get(x, y) != 0)
        })
        .count()
}

/// `round(n * a_til / a_tas * 100)` clamped to `[0, 100]`, rounding half
/// away from zero. An empty TAS with no TILs scores 0.
pub fn tils_score<F: Real>(n: usize, a_tas: F, a_til: F) -> Result<u32> {
    if !(a_tas >= F::zero()) || !a_tas.is_finite() {
        return Err(Error::invalid(format!("A_TAS must be non-negative, got {a_tas}")));
    }
    if !(a_til > F::zero()) || !a_til.is_finite() {
        return Err(Error::invalid(format!("a_til must be positive, got {a_til}")));
    }
    if a_tas == F::zero() {
        return if n == 0 {
            Ok(0)
        } else {
            Err(Error::Degenerate(format!(
                "{n} TILs counted in an empty tumour-associated stroma"
            )))
        };
    }
    let (a, b) = (a_til.as_f64(), a_tas.as_f64());
    let m = n as f64 * 100.0;
    let raw = m * a / b;
    if raw >= 200.0 {
        return Ok(100);
    }
    // raw is within a few ulps of the true quotient, so the answer is k or
    // k + 1; settle which by the exact sign of m·a − (k + ½)·b.
    let k = raw.floor();
    let half = k + 0.5;
    let (p, q) = (m * a, half * b);
    let sign = exact_sum([p, m.mul_add(a, -p), -q, -half.mul_add(b, -q)]);
    let t = if sign >= 0.0 { k + 1.0 } else { k };
    Ok(t.clamp(0.0, 100.0) as u32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilsResult<F> {
    pub n_tils: usize,
    pub a_tas_um2: F,
    pub a_til_um2: F,
    pub tils_score: u32,
}

/// Every intermediate of a scored slide.
#[derive(Clone, Debug)]
pub struct ScoredSlide<F> {
    pub masks: SegMasks,
    pub bulk: Raster<u8>,
    pub tas: Raster<u8>,
    /// Post-NMS detections, anywhere on the slide.
    pub detections: Vec<Detection<F>>,
    pub result: TilsResult<F>,
}

/// Run the whole pipeline on one slide.
///
/// `seg_source` and `det_source` are the same slide at the segmentation and
/// detection levels.
pub fn score_wsi<F: Real>(
    seg_source: &dyn RasterSource<F>,
    det_source: &dyn RasterSource<F>,
    seg_ensemble: &Ensemble<F>,
    det_ensemble: &Ensemble<F>,
    cfg: &PipelineConfig,
) -> Result<ScoredSlide<F>> {
    cfg.validate()?;
    let masks = run_segmentation(seg_source, seg_ensemble, cfg).map_err(|e| e.in_stage("segmentation"))?;
    let bulk = tumour_bulk(&masks.tumour, &cfg.bulk).map_err(|e| e.in_stage("tumour bulk"))?;
    let tas = tumour_associated_stroma(&bulk, &masks.stroma).map_err(|e| e.in_stage("tumour-associated stroma"))?;
    let detections = detect_tils(det_source, det_ensemble, cfg, Some(&tas))?;
    let n = count_tils_in_mask(&detections, &tas);
    let a_tas = tas.count_nonzero() as f64 * tas.resolution().pixel_area_um2();
    let a_til = cfg.score.a_til_um2;
    let score = tils_score(n, F::of(a_tas), F::of(a_til)).map_err(|e| e.in_stage("score"))?;
    log::info!("scored: N={n} A_TAS={a_tas} um2 T={score}");
    Ok(ScoredSlide {
        masks,
        bulk,
        tas,
        detections,
        result: TilsResult {
            n_tils: n,
            a_tas_um2: F::of(a_tas),
            a_til_um2: F::of(a_til),
            tils_score: score,
        },
    })
}

/// Detection map → threshold → components → detections → NMS.
pub fn detect_tils<F: Real>(
    det_source: &dyn RasterSource<F>,
    det_ensemble: &Ensemble<F>,
    cfg: &PipelineConfig,
    roi: Option<&Raster<u8>>,
) -> Result<Vec<Detection<F>>> {
    let d = &cfg.det;
    let prob = run_detection(det_source, det_ensemble, cfg, roi).map_err(|e| e.in_stage("detection"))?;
    let mask = threshold(&prob, d.threshold).map_err(|e| e.in_stage("detection"))?;
    let comps = connected_components(&mask, d.connectivity);
    let dets = components_to_detections(&comps, &prob, d.min_area_px);
    nms(&dets, F::of(d.nms_radius_um)).map_err(|e| e.in_stage("nms"))
}
