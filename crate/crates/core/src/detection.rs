//! From TIL probability maps to point detections.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;
use crate::scalar::{Pixel, Real};

/// One candidate TIL, in base-frame microns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection<F> {
    pub x: F,
    pub y: F,
    pub confidence: F,
}

impl<F: Real> Detection<F> {
    pub fn new(x: F, y: F, confidence: F) -> Self {
        Detection { x, y, confidence }
    }

    pub fn dist2(&self, other: &Self) -> F {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Descending confidence, then ascending `(y, x)`.
pub fn confidence_order<F: Real>(a: &Detection<F>, b: &Detection<F>) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then(a.y.partial_cmp(&b.y).unwrap_or(Ordering::Equal))
        .then(a.x.partial_cmp(&b.x).unwrap_or(Ordering::Equal))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            _ => Err(format!("connectivity must be 4 or 8, got {v}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// A maximal connected set of foreground pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    /// Member pixels in raster order.
    pub pixels: Vec<(u32, u32)>,
    /// Mean of member pixel centres, in local pixel units.
    pub centroid: (f64, f64),
    /// `(min_x, min_y, max_x, max_y)`, inclusive.
    pub bbox: (u32, u32, u32, u32),
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let (ra, rb) = (find(parent, a), find(parent, b));
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

/// Two-pass union-find labelling. Components come back sorted by
/// `(min_y, min_x)` of their bounding boxes, ties by first pixel.
pub fn connected_components<T: Pixel>(mask: &Raster<T>, conn: Connectivity) -> Vec<Component> {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    // label 0 is background; provisional labels start at 1
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) == T::zero() {
                continue;
            }
            let mut neighbours = [0u32; 4];
            let mut n = 0;
            let mut push = |l: u32| {
                if l != 0 {
                    neighbours[n] = l;
                    n += 1;
                }
            };
            if x > 0 {
                push(labels[y * w + x - 1]);
            }
            if y > 0 {
                push(labels[(y - 1) * w + x]);
                if conn == Connectivity::Eight {
                    if x > 0 {
                        push(labels[(y - 1) * w + x - 1]);
                    }
                    if x + 1 < w {
                        push(labels[(y - 1) * w + x + 1]);
                    }
                }
            }
            let label = if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let mut l = neighbours[0];
                for &other in &neighbours[1..n] {
                    l = union(&mut parent, l, other);
                }
                find(&mut parent, l)
            };
            labels[y * w + x] = label;
        }
    }

    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut comps: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if l == 0 {
                continue;
            }
            let root = find(&mut parent, l);
            let k = *index.entry(root).or_insert_with(|| {
                comps.push(Component {
                    pixels: Vec::new(),
                    centroid: (0.0, 0.0),
                    bbox: (x as u32, y as u32, x as u32, y as u32),
                });
                comps.len() - 1
            });
            let c = &mut comps[k];
            c.pixels.push((x as u32, y as u32));
            let b = &mut c.bbox;
            b.0 = b.0.min(x as u32);
            b.1 = b.1.min(y as u32);
            b.2 = b.2.max(x as u32);
            b.3 = b.3.max(y as u32);
        }
    }
    for c in &mut comps {
        let n = c.pixels.len() as f64;
        let (sx, sy) = c
            .pixels
            .iter()
            .fold((0u64, 0u64), |(sx, sy), &(x, y)| (sx + x as u64, sy + y as u64));
        c.centroid = (sx as f64 / n, sy as f64 / n);
    }
    comps.sort_by_key(|c| (c.bbox.1, c.bbox.0, c.pixels[0].1, c.pixels[0].0));
    comps
}

/// Drop components smaller than `min_area`; the rest become detections at
/// their centroid with confidence equal to their mean probability.
pub fn components_to_detections<F: Real>(
    components: &[Component],
    prob: &Raster<F>,
    min_area: usize,
) -> Vec<Detection<F>> {
    let mpp = prob.resolution().mpp;
    let (ox, oy) = prob.origin();
    components
        .iter()
        .filter(|c| c.area() >= min_area.max(1))
        .map(|c| {
            let vals: Vec<F> = c
                .pixels
                .iter()
                .map(|&(x, y)| prob.get(x as usize, y as usize))
                .collect();
            let conf = crate::scalar::exact_mean(&vals);
            let x = (ox as f64 + c.centroid.0 + 0.5) * mpp;
            let y = (oy as f64 + c.centroid.1 + 0.5) * mpp;
            Detection::new(F::of(x), F::of(y), conf.max(F::zero()).min(F::one()))
        })
        .collect()
}

/// Greedy non-maxima suppression.
///
/// Visits detections by descending confidence (ties by `(y, x)`), keeps each
/// one not yet suppressed and suppresses everything within `radius` of it.
/// The kept detections are returned in visiting order.
pub fn nms<F: Real>(detections: &[Detection<F>], radius: F) -> Result<Vec<Detection<F>>> {
    if !(radius > F::zero()) {
        return Err(Error::invalid("nms radius must be positive"));
    }
    let mut sorted = detections.to_vec();
    sorted.sort_by(confidence_order);

    // Uniform grid with cell size = radius; neighbours lie in the 3x3 block.
    let cell = |d: &Detection<F>| -> (i64, i64) {
        (
            (d.x / radius).floor().to_i64().unwrap_or(0),
            (d.y / radius).floor().to_i64().unwrap_or(0),
        )
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, d) in sorted.iter().enumerate() {
        grid.entry(cell(d)).or_default().push(i);
    }
    let r2 = radius * radius;
    let mut suppressed = vec![false; sorted.len()];
    let mut kept = Vec::new();
    for i in 0..sorted.len() {
        if suppressed[i] {
            continue;
        }
        let d = sorted[i];
        kept.push(d);
        let (cx, cy) = cell(&d);
        for gy in cy - 1..=cy + 1 {
            for gx in cx - 1..=cx + 1 {
                if let Some(members) = grid.get(&(gx, gy)) {
                    for &j in members {
                        if j > i && !suppressed[j] && sorted[j].dist2(&d) <= r2 {
                            suppressed[j] = true;
                        }
                    }
                }
            }
        }
    }
    Ok(kept)
}

/// Union of discrete disks around pixel-coordinate points.
pub fn dilate_gt_points(
    points: &[(usize, usize)],
    radius: usize,
    shape: (usize, usize),
    resolution: crate::raster::Resolution,
) -> Result<Raster<u8>> {
    let (w, h) = shape;
    let mut out = Raster::<u8>::new(w, h, resolution);
    let spans = crate::morphology::disk_spans(radius);
    for &(px, py) in points {
        if px >= w || py >= h {
            return Err(Error::invalid(format!(
                "point ({px}, {py}) outside {w}x{h} raster"
            )));
        }
        for (i, &half) in spans.iter().enumerate() {
            let y = py as i64 + i as i64 - radius as i64;
            if y < 0 || y >= h as i64 {
                continue;
            }
            let x0 = px.saturating_sub(half);
            let x1 = (px + half + 1).min(w);
            let row = y as usize * w;
            out.pixels_mut()[row + x0..row + x1].fill(1);
        }
    }
    Ok(out)
}
