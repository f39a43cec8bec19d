//! Segmentation and detection evaluation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::detection::{confidence_order, Detection};
use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scalar::{exact_mean, Pixel, Real};

/// `2|P∩G| / (|P| + |G|)`; two empty masks score 1.
pub fn dice<T: Pixel, F: Real>(pred: &Raster<T>, gt: &Raster<T>) -> Result<F> {
    pred.check_same_shape(gt, "dice")?;
    pred.require_binary("dice prediction")?;
    gt.require_binary("dice ground truth")?;
    let (mut inter, mut np, mut ng) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.pixels().iter().zip(gt.pixels()) {
        let (p, g) = (p != T::zero(), g != T::zero());
        inter += usize::from(p && g);
        np += usize::from(p);
        ng += usize::from(g);
    }
    if np + ng == 0 {
        return Ok(F::one());
    }
    Ok(F::of_usize(2 * inter) / F::of_usize(np + ng))
}

pub fn mean_of_dice<F: Real>(dice_tumour: F, dice_stroma: F) -> F {
    (dice_tumour + dice_stroma) / F::of(2.0)
}

/// Mean of the tumour-vs-background and stroma-vs-background Dice scores.
pub fn mean_tumour_stroma_dice<T: Pixel, F: Real>(
    pred_tumour: &Raster<T>,
    gt_tumour: &Raster<T>,
    pred_stroma: &Raster<T>,
    gt_stroma: &Raster<T>,
) -> Result<F> {
    let t: F = dice(pred_tumour, gt_tumour)?;
    let s: F = dice(pred_stroma, gt_stroma)?;
    Ok(mean_of_dice(t, s))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult<F> {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(prediction index, ground-truth index, distance in microns)`
    pub pairs: Vec<(usize, usize, F)>,
}

/// Predictions in confidence order (ties by `(y, x)`) each claim the nearest
/// unclaimed ground-truth point within `hit_radius`.
pub fn match_detections<F: Real>(
    preds: &[Detection<F>],
    gts: &[(F, F)],
    hit_radius: F,
) -> Result<MatchResult<F>> {
    if !(hit_radius > F::zero()) {
        return Err(Error::invalid("hit radius must be positive"));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| confidence_order(&preds[a], &preds[b]).then(a.cmp(&b)));

    let cell = |x: F, y: F| -> (i64, i64) {
        (
            (x / hit_radius).floor().to_i64().unwrap_or(0),
            (y / hit_radius).floor().to_i64().unwrap_or(0),
        )
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (j, &(x, y)) in gts.iter().enumerate() {
        grid.entry(cell(x, y)).or_default().push(j);
    }

    let r2 = hit_radius * hit_radius;
    let mut claimed = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for i in order {
        let p = &preds[i];
        let (cx, cy) = cell(p.x, p.y);
        let mut best: Option<(F, usize)> = None;
        for gy in cy - 1..=cy + 1 {
            for gx in cx - 1..=cx + 1 {
                for &j in grid.get(&(gx, gy)).into_iter().flatten() {
                    if claimed[j] {
                        continue;
                    }
                    let (dx, dy) = (p.x - gts[j].0, p.y - gts[j].1);
                    let d2 = dx * dx + dy * dy;
                    if d2 <= r2 && best.is_none_or(|(bd, bj)| d2 < bd || (d2 == bd && j < bj)) {
                        best = Some((d2, j));
                    }
                }
            }
        }
        if let Some((d2, j)) = best {
            claimed[j] = true;
            pairs.push((i, j, d2.sqrt()));
        }
    }
    let tp = pairs.len();
    Ok(MatchResult {
        tp,
        fp: preds.len() - tp,
        fn_: gts.len() - tp,
        pairs,
    })
}

/// `(f1, recall, precision)` with empty denominators giving 0.
pub fn f1_precision_recall<F: Real>(m: &MatchResult<F>) -> (F, F, F) {
    let ratio = |a: usize, b: usize| {
        if b == 0 {
            F::zero()
        } else {
            F::of_usize(a) / F::of_usize(b)
        }
    };
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    (f1_score(precision, recall), recall, precision)
}

/// Harmonic mean of precision and recall.
pub fn f1_score<F: Real>(precision: F, recall: F) -> F {
    if precision + recall == F::zero() {
        F::zero()
    } else {
        F::of(2.0) * precision * recall / (precision + recall)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrocPoint<F> {
    /// Lowest confidence admitted at this operating point.
    pub threshold: F,
    pub fp_per_mm2: F,
    pub sensitivity: F,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrocCurve<F> {
    /// Ordered from strictest to loosest threshold; starts at the empty
    /// operating point (no detections admitted).
    pub points: Vec<FrocPoint<F>>,
    /// Sensitivity read at each target.
    pub at_targets: Vec<(F, F)>,
    pub score: F,
}

/// Free-response ROC over all distinct confidence thresholds.
///
/// Each target's sensitivity is taken from the loosest operating point whose
/// false-positive rate does not exceed it; the score is their mean.
pub fn froc<F: Real>(
    preds: &[Detection<F>],
    gts: &[(F, F)],
    hit_radius: F,
    area_mm2: F,
    targets: &[F],
) -> Result<FrocCurve<F>> {
    if gts.is_empty() {
        return Err(Error::UndefinedSensitivity);
    }
    if !(area_mm2 > F::zero()) {
        return Err(Error::invalid("FROC area must be positive"));
    }
    if targets.is_empty() || targets.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("FROC targets must be non-empty and ascending"));
    }
    // Greedy confidence-ordered matching is prefix-stable, so one matching
    // answers every threshold.
    let m = match_detections(preds, gts, hit_radius)?;
    let mut hit = vec![false; preds.len()];
    for &(i, _, _) in &m.pairs {
        hit[i] = true;
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| confidence_order(&preds[a], &preds[b]).then(a.cmp(&b)));

    let n_gt = F::of_usize(gts.len());
    let mut points = vec![FrocPoint {
        threshold: F::infinity(),
        fp_per_mm2: F::zero(),
        sensitivity: F::zero(),
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let c = preds[order[k]].confidence;
        while k < order.len() && preds[order[k]].confidence == c {
            if hit[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(FrocPoint {
            threshold: c,
            fp_per_mm2: F::of_usize(fp) / area_mm2,
            sensitivity: F::of_usize(tp) / n_gt,
        });
    }
    let at_targets: Vec<(F, F)> = targets
        .iter()
        .map(|&t| {
            let s = points
                .iter()
                .filter(|p| p.fp_per_mm2 <= t)
                .map(|p| p.sensitivity)
                .fold(F::zero(), F::max);
            (t, s)
        })
        .collect();
    let score = at_targets.iter().map(|&(_, s)| s).sum::<F>() / F::of_usize(targets.len());
    Ok(FrocCurve {
        points,
        at_targets,
        score,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson<F: Real>(xs: &[F], ys: &[F]) -> Result<F> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!(
            "pearson: length mismatch {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least two samples".into()));
    }
    // Correctly rounded means keep constant inputs at exactly zero variance.
    let mx = exact_mean(xs);
    let my = exact_mean(ys);
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == F::zero() || syy == F::zero() {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-F::one()).min(F::one()))
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Resolution;

    fn d(x: f64, y: f64, c: f64) -> Detection<f64> {
        Detection::new(x, y, c)
    }

    #[test]
    fn dice_cases() {
        let r = Resolution::SEG_LEVEL;
        let full = Raster::<u8>::filled(10, 10, r, 1);
        let left = Raster::<u8>::from_fn(10, 10, r, |x, _| u8::from(x < 5));
        let right = left.map(|v| 1 - v);
        let empty = Raster::<u8>::new(10, 10, r);
        assert_eq!(dice::<u8, f64>(&left, &left).unwrap(), 1.0);
        assert_eq!(dice::<u8, f64>(&left, &right).unwrap(), 0.0);
        assert!((dice::<u8, f64>(&left, &full).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dice::<u8, f64>(&empty, &empty).unwrap(), 1.0);
        assert!(dice::<u8, f64>(&left, &Raster::new(5, 10, r)).is_err());
    }

    #[test]
    fn mean_dice_table_row() {
        let m = mean_of_dice(0.748f64, 0.735);
        assert!((m - 0.7415).abs() < 1e-12);
        assert_eq!(mean_of_dice(1.0f64, 0.0), 0.5);
    }

    #[test]
    fn f1_cases() {
        let m = MatchResult::<f64> { tp: 10, fp: 0, fn_: 0, pairs: vec![] };
        assert_eq!(f1_precision_recall(&m), (1.0, 1.0, 1.0));
        let z = MatchResult::<f64> { tp: 0, fp: 3, fn_: 2, pairs: vec![] };
        assert_eq!(f1_precision_recall(&z), (0.0, 0.0, 0.0));
        assert!((f1_score(0.642f64, 0.774) - 0.70186).abs() < 1e-4);
    }

    #[test]
    fn matching_exact_and_far() {
        let gts = [(1.0, 1.0), (20.0, 20.0)];
        let preds = [d(1.0, 1.0, 0.5), d(20.0, 20.0, 0.9)];
        let m = match_detections(&preds, &gts, 8.0).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (2, 0, 0));
        let m = match_detections(&[d(17.0, 1.0, 0.5)], &[(1.0, 1.0)], 8.0).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (0, 1, 1));
    }

    #[test]
    fn higher_confidence_claims_first() {
        let gts = [(0.0, 0.0)];
        let preds = [d(1.0, 0.0, 0.2), d(3.0, 0.0, 0.8)];
        let m = match_detections(&preds, &gts, 8.0).unwrap();
        assert_eq!(m.pairs, vec![(1, 0, 3.0)]);
    }

    #[test]
    fn froc_perfect_and_empty() {
        let gts = [(0.0, 0.0), (50.0, 50.0)];
        let preds = [d(0.0, 0.0, 1.0), d(50.0, 50.0, 1.0)];
        let targets = [1.0, 2.0, 3.0];
        assert_eq!(froc(&preds, &gts, 8.0, 1.0, &targets).unwrap().score, 1.0);
        assert_eq!(froc(&[], &gts, 8.0, 1.0, &targets).unwrap().score, 0.0);
        assert!(matches!(
            froc(&preds, &[], 8.0, 1.0, &targets),
            Err(Error::UndefinedSensitivity)
        ));
    }

    #[test]
    fn pearson_cases() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let lin: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((pearson(&xs, &lin).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!((pearson(&xs, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(pearson(&xs, &[1.0; 4]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }
}
