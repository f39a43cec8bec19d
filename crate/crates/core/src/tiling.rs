//! Tile planning over a zero-padded canvas, patch extraction and stitching.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Raster, Resolution};
use crate::scalar::{Pixel, Real};

/// Top-left corner and size of a patch, in padded-canvas pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileCoord {
    pub y: usize,
    pub x: usize,
    pub w: usize,
    pub h: usize,
}

impl TileCoord {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        TileCoord { x, y, w, h }
    }
}

impl fmt::Display for TileCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}) {}x{}", self.x, self.y, self.w, self.h)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TilePlan {
    /// Unpadded raster size.
    pub width: usize,
    pub height: usize,
    pub canvas_w: usize,
    pub canvas_h: usize,
    pub patch: usize,
    pub stride: usize,
    pub pad: usize,
    /// Origin of the planned raster; stitched output lands here.
    #[serde(default)]
    pub origin: (i64, i64),
    pub coords: Vec<TileCoord>,
}

/// Positions along one axis: multiples of `stride`, the last one clamped to
/// `canvas - patch` so the far edge is always covered.
fn axis_positions(canvas: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = canvas.saturating_sub(patch);
    let mut out = Vec::new();
    let mut p = 0;
    loop {
        if p >= last {
            out.push(last);
            break;
        }
        out.push(p);
        p += stride;
    }
    out
}

pub fn plan_tiles(
    width: usize,
    height: usize,
    patch: usize,
    stride: usize,
    pad: usize,
) -> Result<TilePlan> {
    if patch == 0 || stride == 0 {
        return Err(Error::invalid("patch and stride must be positive"));
    }
    if stride > patch {
        return Err(Error::CoverageViolation { patch, stride });
    }
    let canvas_w = width + 2 * pad;
    let canvas_h = height + 2 * pad;
    let xs = axis_positions(canvas_w, patch, stride);
    let ys = axis_positions(canvas_h, patch, stride);
    let mut coords = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            coords.push(TileCoord::new(x, y, patch, patch));
        }
    }
    Ok(TilePlan {
        width,
        height,
        canvas_w,
        canvas_h,
        patch,
        stride,
        pad,
        origin: (0, 0),
        coords,
    })
}

impl TilePlan {
    /// Plan over an existing raster, inheriting its origin.
    pub fn for_raster<T: Pixel>(
        raster: &Raster<T>,
        patch: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let mut plan = plan_tiles(raster.width(), raster.height(), patch, stride, pad)?;
        plan.origin = raster.origin();
        Ok(plan)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Where a tile's top-left pixel falls in the raster's local frame.
    pub fn local_offset(&self, coord: &TileCoord) -> (i64, i64) {
        (
            coord.x as i64 - self.pad as i64,
            coord.y as i64 - self.pad as i64,
        )
    }
}

/// Read the patch for `coord`; pixels in the pad border or past the raster
/// edge are zero. The patch origin places it physically.
pub fn extract_patch<T: Pixel>(raster: &Raster<T>, coord: &TileCoord, pad: usize) -> Raster<T> {
    raster.window(
        coord.x as i64 - pad as i64,
        coord.y as i64 - pad as i64,
        coord.w,
        coord.h,
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StitchMode {
    #[default]
    Average,
    Max,
}

/// Combine per-tile outputs into a raster covering the plan's unpadded extent.
///
/// Each patch is placed by its own origin, so centrally cropped outputs can
/// be stitched directly. Every planned tile must be present.
pub fn stitch<F: Real>(
    patches: &[(TileCoord, Raster<F>)],
    plan: &TilePlan,
    mode: StitchMode,
) -> Result<Raster<F>> {
    let present: HashSet<&TileCoord> = patches.iter().map(|(c, _)| c).collect();
    let planned: HashSet<&TileCoord> = plan.coords.iter().collect();
    if let Some(missing) = plan.coords.iter().find(|c| !present.contains(c)) {
        return Err(Error::IncompleteCoverage(*missing));
    }
    if let Some((extra, _)) = patches.iter().find(|(c, _)| !planned.contains(c)) {
        return Err(Error::invalid(format!("patch for unplanned tile {extra}")));
    }
    let resolution = patches
        .first()
        .map(|(_, r)| r.resolution())
        .unwrap_or(Resolution::SEG_LEVEL);
    stitch_subset(patches, plan.width, plan.height, plan.origin, resolution, mode)
}

/// Stitch without requiring full coverage; uncovered pixels stay zero.
pub fn stitch_subset<F: Real>(
    patches: &[(TileCoord, Raster<F>)],
    width: usize,
    height: usize,
    origin: (i64, i64),
    resolution: Resolution,
    mode: StitchMode,
) -> Result<Raster<F>> {
    // Fixed accumulation order, whatever order the patches arrived in.
    let mut order: Vec<usize> = (0..patches.len()).collect();
    order.sort_by_key(|&i| {
        let (c, r) = &patches[i];
        (*c, r.origin(), r.dims())
    });
    let mut out = Raster::<F>::new(width, height, resolution).with_origin(origin);
    let mut count = vec![0u32; width * height];
    for i in order {
        let (_, patch) = &patches[i];
        let dx = patch.origin().0 - origin.0;
        let dy = patch.origin().1 - origin.1;
        let (pw, ph) = patch.dims();
        let x0 = dx.max(0);
        let x1 = (dx + pw as i64).min(width as i64);
        let y0 = dy.max(0);
        let y1 = (dy + ph as i64).min(height as i64);
        if x0 >= x1 || y0 >= y1 {
            continue;
        }
        let acc = out.pixels_mut();
        for oy in y0..y1 {
            let py = (oy - dy) as usize;
            for ox in x0..x1 {
                let v = patch.get((ox - dx) as usize, py);
                let idx = oy as usize * width + ox as usize;
                let n = &mut count[idx];
                *n += 1;
                acc[idx] = match mode {
                    // Running mean: exact whenever all contributions agree.
                    StitchMode::Average => {
                        let m = acc[idx];
                        m + (v - m) / F::of(f64::from(*n))
                    }
                    StitchMode::Max => {
                        if *n == 1 || v > acc[idx] {
                            v
                        } else {
                            acc[idx]
                        }
                    }
                };
            }
        }
    }
    Ok(out)
}
