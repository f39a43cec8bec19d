use std::cmp::Ordering;
use std::collections::VecDeque;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use tils_core::morphology::Border;
use tils_core::{Detection, MorphOp, Raster, StitchMode, TileCoord};

fn in_disk(dx: i64, dy: i64, r: usize) -> bool {
    dx * dx + dy * dy <= (r * r) as i64
}

fn erode_scan(m: &Raster<u8>, r: usize, border: Border) -> Raster<u8> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let r_i = r as i64;
    Raster::from_fn(m.width(), m.height(), m.resolution(), |x, y| {
        for dy in -r_i..=r_i {
            for dx in -r_i..=r_i {
                if !in_disk(dx, dy, r) {
                    continue;
                }
                let (sx, sy) = (x as i64 + dx, y as i64 + dy);
                let inside = sx >= 0 && sy >= 0 && sx < w && sy < h;
                if !inside {
                    if border == Border::Zero {
                        return 0;
                    }
                    continue;
                }
                if m.get(sx as usize, sy as usize) == 0 {
                    return 0;
                }
            }
        }
        1
    })
}

fn dilate_scan(m: &Raster<u8>, r: usize) -> Raster<u8> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let r_i = r as i64;
    Raster::from_fn(m.width(), m.height(), m.resolution(), |x, y| {
        for dy in -r_i..=r_i {
            for dx in -r_i..=r_i {
                let (sx, sy) = (x as i64 + dx, y as i64 + dy);
                if in_disk(dx, dy, r)
                    && sx >= 0
                    && sy >= 0
                    && sx < w
                    && sy < h
                    && m.get(sx as usize, sy as usize) != 0
                {
                    return 1;
                }
            }
        }
        0
    })
}

/// Per-pixel min/max over the disk `dx² + dy² <= r²`.
pub fn morph_scan(m: &Raster<u8>, op: MorphOp, r: usize, border: Border) -> Raster<u8> {
    match op {
        MorphOp::Erode => erode_scan(m, r, border),
        MorphOp::Dilate => dilate_scan(m, r),
        MorphOp::Open => dilate_scan(&erode_scan(m, r, border), r),
        MorphOp::Close => erode_scan(&dilate_scan(m, r), r, border),
    }
}

/// Components by breadth-first flood fill, each as a sorted pixel list,
/// listed in order of their first pixel.
pub fn flood_components(m: &Raster<u8>, eight: bool) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = m.dims();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) == 0 || seen[y * w + x] {
                continue;
            }
            let mut comp = Vec::new();
            let mut q = VecDeque::from([(x, y)]);
            seen[y * w + x] = true;
            while let Some((cx, cy)) = q.pop_front() {
                comp.push((cx as u32, cy as u32));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                            continue;
                        }
                        let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as usize, ny as usize);
                        if m.get(nx, ny) != 0 && !seen[ny * w + nx] {
                            seen[ny * w + nx] = true;
                            q.push_back((nx, ny));
                        }
                    }
                }
            }
            comp.sort_by_key(|&(px, py)| (py, px));
            out.push(comp);
        }
    }
    out
}

fn visit_order(a: &Detection<f64>, b: &Detection<f64>) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
}

fn d2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1)
}

/// Greedy NMS by pairwise scan against the kept set.
pub fn nms_quadratic(dets: &[Detection<f64>], radius: f64) -> Vec<Detection<f64>> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(visit_order);
    let mut kept: Vec<Detection<f64>> = Vec::new();
    for d in sorted {
        if kept
            .iter()
            .all(|k| d2((k.x, k.y), (d.x, d.y)) > radius * radius)
        {
            kept.push(d);
        }
    }
    kept
}

pub fn dice_count(p: &Raster<u8>, g: &Raster<u8>) -> f64 {
    let (mut inter, mut np, mut ng) = (0u64, 0u64, 0u64);
    for (&a, &b) in p.pixels().iter().zip(g.pixels()) {
        np += u64::from(a != 0);
        ng += u64::from(b != 0);
        inter += u64::from(a != 0 && b != 0);
    }
    if np + ng == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (np + ng) as f64
    }
}

/// Dense sum/count (or max) accumulation of placed patches.
pub fn dense_stitch(
    patches: &[(TileCoord, Raster<f64>)],
    w: usize,
    h: usize,
    origin: (i64, i64),
    mode: StitchMode,
) -> Vec<f64> {
    let mut sum = vec![0.0f64; w * h];
    let mut count = vec![0u32; w * h];
    let mut max = vec![f64::NEG_INFINITY; w * h];
    for (_, p) in patches {
        for py in 0..p.height() {
            for px in 0..p.width() {
                let x = p.origin().0 + px as i64 - origin.0;
                let y = p.origin().1 + py as i64 - origin.1;
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let i = y as usize * w + x as usize;
                let v = p.get(px, py);
                sum[i] += v;
                count[i] += 1;
                max[i] = max[i].max(v);
            }
        }
    }
    (0..w * h)
        .map(|i| match (count[i], mode) {
            (0, _) => 0.0,
            (c, StitchMode::Average) => sum[i] / f64::from(c),
            (_, StitchMode::Max) => max[i],
        })
        .collect()
}

/// `(tp, fp, fn)` of greedy confidence-ordered matching by linear scan.
pub fn match_exhaustive(
    preds: &[Detection<f64>],
    gts: &[(f64, f64)],
    hit_radius: f64,
) -> (usize, usize, usize) {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| visit_order(&preds[a], &preds[b]).then(a.cmp(&b)));
    let mut claimed = vec![false; gts.len()];
    let mut tp = 0;
    for i in order {
        let p = (preds[i].x, preds[i].y);
        let mut best: Option<(f64, usize)> = None;
        for (j, &g) in gts.iter().enumerate() {
            let d = d2(p, g);
            if claimed[j] || d > hit_radius * hit_radius {
                continue;
            }
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            claimed[j] = true;
            tp += 1;
        }
    }
    (tp, preds.len() - tp, gts.len() - tp)
}

/// FROC score by re-matching at every distinct confidence threshold.
pub fn froc_sweep(
    preds: &[Detection<f64>],
    gts: &[(f64, f64)],
    hit_radius: f64,
    area_mm2: f64,
    targets: &[f64],
) -> f64 {
    let mut thresholds: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut points = vec![(0.0, 0.0)];
    for t in thresholds {
        let admitted: Vec<Detection<f64>> =
            preds.iter().copied().filter(|p| p.confidence >= t).collect();
        let (tp, fp, _) = match_exhaustive(&admitted, gts, hit_radius);
        points.push((fp as f64 / area_mm2, tp as f64 / gts.len() as f64));
    }
    let mut total = 0.0;
    for &target in targets {
        let mut best = 0.0f64;
        for &(fp, sens) in &points {
            if fp <= target {
                best = best.max(sens);
            }
        }
        total += best;
    }
    total / targets.len() as f64
}

/// The TILs score in exact rational arithmetic on the exact values of the inputs.
pub fn score_rational(n: usize, a_tas: f64, a_til: f64) -> Option<u32> {
    if a_tas == 0.0 {
        return (n == 0).then_some(0);
    }
    let a_tas = BigRational::from_float(a_tas)?;
    let a_til = BigRational::from_float(a_til)?;
    let raw = BigRational::from_integer(BigInt::from(n)) * a_til
        * BigRational::from_integer(BigInt::from(100))
        / a_tas;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    debug_assert!(!raw.is_negative());
    let rounded = (raw + half).floor();
    let hundred = BigRational::from_integer(BigInt::from(100));
    let t = if rounded > hundred { hundred } else { rounded };
    let t = if t < BigRational::zero() { BigRational::zero() } else { t };
    t.to_integer().to_u32()
}

/// Convex hull of the set pixel centres, rasterized (boundary inclusive).
pub fn convex_hull_mask(m: &Raster<u8>) -> Raster<u8> {
    let mut pts: Vec<(i64, i64)> = Vec::new();
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(x, y) != 0 {
                pts.push((x as i64, y as i64));
            }
        }
    }
    let hull = monotone_chain(pts);
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    Raster::from_fn(m.width(), m.height(), m.resolution(), |x, y| {
        let p = (x as i64, y as i64);
        let inside = match hull.len() {
            0 => false,
            1 => hull[0] == p,
            2 => {
                cross(hull[0], hull[1], p) == 0
                    && p.0 >= hull[0].0.min(hull[1].0)
                    && p.0 <= hull[0].0.max(hull[1].0)
                    && p.1 >= hull[0].1.min(hull[1].1)
                    && p.1 <= hull[0].1.max(hull[1].1)
            }
            n => (0..n).all(|i| cross(hull[i], hull[(i + 1) % n], p) >= 0),
        };
        u8::from(inside)
    })
}

/// Counter-clockwise hull (y down, so "counter-clockwise" in the usual
/// orientation-sign sense), collinear points dropped.
pub fn monotone_chain(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (i64, i64), a: (i64, i64), b: (i64, i64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// 3×3 dilation.
pub fn dilate_square(m: &Raster<u8>) -> Raster<u8> {
    Raster::from_fn(m.width(), m.height(), m.resolution(), |x, y| {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if m.get_or_zero(x as i64 + dx, y as i64 + dy) != 0 {
                    return 1;
                }
            }
        }
        0
    })
}

/// `a ⊆ b` pixelwise.
pub fn subset(a: &Raster<u8>, b: &Raster<u8>) -> bool {
    a.pixels().iter().zip(b.pixels()).all(|(&x, &y)| x == 0 || y != 0)
}
