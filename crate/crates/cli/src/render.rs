//! Overlay rendering: thumbnail, shaded TAS, class contours, detection rings.

use std::path::Path;

use tils_core::{Detection, Raster};

use crate::error::{CliError, Result};
use crate::formats::write_rgb_png;

pub const TAS_SHADE: [u8; 3] = [255, 200, 0];
pub const STROMA: [u8; 3] = [30, 160, 60];
pub const TUMOUR: [u8; 3] = [220, 30, 30];
pub const BULK: [u8; 3] = [40, 80, 230];
pub const DETECTION: [u8; 3] = [0, 220, 220];

/// Masks drawn over the thumbnail; all share its frame.
pub struct OverlayLayers<'a> {
    pub tumour: &'a Raster<u8>,
    pub stroma: &'a Raster<u8>,
    pub bulk: &'a Raster<u8>,
    pub tas: &'a Raster<u8>,
}

/// Pixels at rounded distance `r` from the origin.
pub fn ring_offsets(r: usize) -> Vec<(i64, i64)> {
    let r = r as i64;
    let mut out = Vec::new();
    for dy in -r - 1..=r + 1 {
        for dx in -r - 1..=r + 1 {
            let d2 = dx * dx + dy * dy;
            if d2 > r * r - r && d2 <= r * r + r {
                out.push((dx, dy));
            }
        }
    }
    out
}

fn is_edge(m: &Raster<u8>, x: usize, y: usize) -> bool {
    if m.get(x, y) == 0 {
        return false;
    }
    let (x, y) = (x as i64, y as i64);
    [(-1, 0), (1, 0), (0, -1), (0, 1)]
        .iter()
        .any(|&(dx, dy)| m.get_or_zero(x + dx, y + dy) == 0)
}

/// RGB pixels of the overlay, row-major.
pub fn compose(
    thumb: &Raster<f64>,
    layers: &OverlayLayers,
    dets: &[Detection<f64>],
    circle_radius: usize,
) -> Result<Vec<u8>> {
    let (w, h) = thumb.dims();
    for (name, m) in [
        ("tumour", layers.tumour),
        ("stroma", layers.stroma),
        ("bulk", layers.bulk),
        ("tas", layers.tas),
    ] {
        if m.dims() != (w, h) {
            return Err(CliError::Usage(format!(
                "{name} mask is {}x{}, thumbnail is {w}x{h}",
                m.width(),
                m.height()
            )));
        }
    }
    let mut rgb = Vec::with_capacity(w * h * 3);
    for &v in thumb.pixels() {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        rgb.extend_from_slice(&[g, g, g]);
    }
    let mut put = |x: usize, y: usize, c: [u8; 3]| rgb[(y * w + x) * 3..][..3].copy_from_slice(&c);
    for y in 0..h {
        for x in 0..w {
            if layers.tas.get(x, y) != 0 {
                let g = (thumb.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u16;
                let blend = |c: u8| (g + u16::from(c)).div_ceil(2) as u8;
                put(x, y, TAS_SHADE.map(blend));
            }
        }
    }
    for (mask, colour) in [(layers.stroma, STROMA), (layers.tumour, TUMOUR), (layers.bulk, BULK)] {
        for y in 0..h {
            for x in 0..w {
                if is_edge(mask, x, y) {
                    put(x, y, colour);
                }
            }
        }
    }
    let mpp = thumb.resolution().mpp;
    let ring = ring_offsets(circle_radius);
    for d in dets {
        let cx = (d.x / mpp).floor() as i64;
        let cy = (d.y / mpp).floor() as i64;
        for &(dx, dy) in &ring {
            let (x, y) = (cx + dx, cy + dy);
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                put(x as usize, y as usize, DETECTION);
            }
        }
    }
    Ok(rgb)
}

pub fn render_overlay(
    thumb: &Raster<f64>,
    layers: &OverlayLayers,
    dets: &[Detection<f64>],
    circle_radius: usize,
    path: &Path,
) -> Result<()> {
    let rgb = compose(thumb, layers, dets, circle_radius)?;
    write_rgb_png(thumb.width(), thumb.height(), &rgb, path)
}
