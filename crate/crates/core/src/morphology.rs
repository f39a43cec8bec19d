//! Binary morphology with a discrete disk structuring element.
//!
//! The disk of radius `r` is `{(dx, dy) : dx² + dy² <= r²}`. Each disk row is a
//! horizontal span, so erosion/dilation reduce to span queries against
//! per-row prefix counts: `O(w * h * (2r + 1))`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::Raster;
use crate::scalar::Pixel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
    Open,
    Close,
}

/// How pixels outside the raster are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Border {
    /// Exterior is background: erosion eats in from the edges.
    #[default]
    Zero,
    /// Exterior never changes the result: erosion only looks at in-bounds
    /// pixels and dilation never grows from outside.
    Ignore,
}

/// Half-widths of the disk rows, indexed by `dy + r`.
pub fn disk_spans(radius: usize) -> Vec<usize> {
    let r2 = radius * radius;
    (0..=2 * radius)
        .map(|i| {
            let dy = i.abs_diff(radius);
            let rem = r2 - dy * dy;
            let mut w = (rem as f64).sqrt() as usize;
            while (w + 1) * (w + 1) <= rem {
                w += 1;
            }
            while w * w > rem {
                w -= 1;
            }
            w
        })
        .collect()
}

pub fn morph<T: Pixel>(mask: &Raster<T>, op: MorphOp, radius: usize) -> Result<Raster<T>> {
    morph_with_border(mask, op, radius, Border::Zero)
}

pub fn morph_with_border<T: Pixel>(
    mask: &Raster<T>,
    op: MorphOp,
    radius: usize,
    border: Border,
) -> Result<Raster<T>> {
    mask.require_binary("morph")?;
    if radius == 0 {
        return Ok(mask.clone());
    }
    let out = match op {
        MorphOp::Erode => erode(mask, radius, border),
        MorphOp::Dilate => dilate(mask, radius),
        MorphOp::Open => dilate(&erode(mask, radius, border), radius),
        MorphOp::Close => erode(&dilate(mask, radius), radius, border),
    };
    Ok(out)
}

/// Row-wise inclusive prefix counts of set pixels, `w + 1` entries per row.
fn prefix_counts<T: Pixel>(mask: &Raster<T>) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut pre = vec![0u32; (w + 1) * h];
    for y in 0..h {
        let row = mask.row(y);
        let base = y * (w + 1);
        for x in 0..w {
            pre[base + x + 1] = pre[base + x] + u32::from(row[x] != T::zero());
        }
    }
    pre
}

fn dilate<T: Pixel>(mask: &Raster<T>, radius: usize) -> Raster<T> {
    let (w, h) = mask.dims();
    let spans = disk_spans(radius);
    let pre = prefix_counts(mask);
    let mut out = mask.map(|_| T::zero());
    let px = out.pixels_mut();
    for y in 0..h {
        for (i, &half) in spans.iter().enumerate() {
            let sy = y as i64 + i as i64 - radius as i64;
            if sy < 0 || sy >= h as i64 {
                continue;
            }
            let base = sy as usize * (w + 1);
            let row_pre = &pre[base..base + w + 1];
            if row_pre[w] == 0 {
                continue;
            }
            for x in 0..w {
                let lo = x.saturating_sub(half);
                let hi = (x + half + 1).min(w);
                if row_pre[hi] > row_pre[lo] {
                    px[y * w + x] = T::one();
                }
            }
        }
    }
    out
}

fn erode<T: Pixel>(mask: &Raster<T>, radius: usize, border: Border) -> Raster<T> {
    let (w, h) = mask.dims();
    let spans = disk_spans(radius);
    let pre = prefix_counts(mask);
    let mut out = mask.map(|_| T::zero());
    let px = out.pixels_mut();
    for y in 0..h {
        'pixel: for x in 0..w {
            if mask.get(x, y) == T::zero() {
                continue;
            }
            for (i, &half) in spans.iter().enumerate() {
                let sy = y as i64 + i as i64 - radius as i64;
                let lo = x as i64 - half as i64;
                let hi = x as i64 + half as i64 + 1;
                if sy < 0 || sy >= h as i64 {
                    match border {
                        Border::Zero => continue 'pixel,
                        Border::Ignore => continue,
                    }
                }
                let (clo, chi) = (lo.max(0) as usize, hi.min(w as i64) as usize);
                if border == Border::Zero && (clo as i64 != lo || chi as i64 != hi) {
                    continue 'pixel;
                }
                let base = sy as usize * (w + 1);
                if (pre[base + chi] - pre[base + clo]) as usize != chi - clo {
                    continue 'pixel;
                }
            }
            px[y * w + x] = T::one();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Resolution;

    fn mask(w: usize, h: usize, on: &[(usize, usize)]) -> Raster<u8> {
        let mut m = Raster::new(w, h, Resolution::SEG_LEVEL);
        for &(x, y) in on {
            m.set(x, y, 1);
        }
        m
    }

    #[test]
    fn disk_sizes() {
        assert_eq!(disk_spans(0), vec![0]);
        assert_eq!(disk_spans(1), vec![0, 1, 0]);
        let area: usize = disk_spans(3).iter().map(|h| 2 * h + 1).sum();
        assert_eq!(area, 29);
    }

    #[test]
    fn empty_open_is_empty() {
        let m = mask(10, 10, &[]);
        assert_eq!(morph(&m, MorphOp::Open, 2).unwrap().count_nonzero(), 0);
    }

    #[test]
    fn single_pixel_opened_away() {
        let m = mask(10, 10, &[(4, 4)]);
        assert_eq!(morph(&m, MorphOp::Open, 1).unwrap().count_nonzero(), 0);
    }

    #[test]
    fn radius_zero_identity() {
        let m = mask(6, 5, &[(1, 1), (4, 3)]);
        for op in [MorphOp::Erode, MorphOp::Dilate, MorphOp::Open, MorphOp::Close] {
            assert_eq!(morph(&m, op, 0).unwrap(), m);
        }
    }

    #[test]
    fn dilate_point_gives_disk() {
        let m = mask(9, 9, &[(4, 4)]);
        let d = morph(&m, MorphOp::Dilate, 3).unwrap();
        assert_eq!(d.count_nonzero(), 29);
    }

    #[test]
    fn non_binary_rejected() {
        let m = Raster::<f32>::filled(3, 3, Resolution::SEG_LEVEL, 0.5);
        assert!(morph(&m, MorphOp::Open, 1).is_err());
    }

    #[test]
    fn border_modes() {
        let m = Raster::<u8>::filled(8, 8, Resolution::SEG_LEVEL, 1);
        let zero = morph_with_border(&m, MorphOp::Erode, 1, Border::Zero).unwrap();
        assert_eq!(zero.count_nonzero(), 36);
        let keep = morph_with_border(&m, MorphOp::Open, 3, Border::Ignore).unwrap();
        assert_eq!(keep, m);
    }
}
