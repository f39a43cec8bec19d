use tils_core::{Raster, Resolution};

/// Two `side`-pixel squares on one row, `gap` background pixels apart,
/// with a `margin` border.
pub fn two_squares(side: usize, gap: usize, margin: usize) -> Raster<u8> {
    let w = 2 * margin + 2 * side + gap;
    let h = 2 * margin + side;
    Raster::from_fn(w, h, Resolution::SEG_LEVEL, |x, y| {
        let row = (margin..margin + side).contains(&y);
        let left = (margin..margin + side).contains(&x);
        let right = (margin + side + gap..margin + 2 * side + gap).contains(&x);
        u8::from(row && (left || right))
    })
}

/// A synthetic slide with known TILs arithmetic.
///
/// A tumour ring encloses a 1000 × 1000 µm stroma square, so after hole
/// filling the bulk covers the square and the tumour-associated stroma is
/// exactly 1 mm². TILs sit on a 30 µm grid inside the square; a few more
/// lie in the tumour ring and in the background and must not be counted.
pub struct ScoringSlide {
    /// Side length in µm.
    pub extent_um: usize,
    pub tumour: Raster<u8>,
    pub stroma: Raster<u8>,
    /// Every planted TIL centre in µm.
    pub tils_um: Vec<(f64, f64)>,
    /// TILs inside the stroma square.
    pub tils_in_tas: usize,
    pub tas_area_um2: f64,
}

impl ScoringSlide {
    pub const STROMA_START: usize = 300;
    pub const STROMA_SIDE: usize = 1000;
    pub const RING: usize = 207;

    pub fn new(n_in_tas: usize) -> Self {
        let extent = 1600;
        let s0 = Self::STROMA_START;
        let s1 = s0 + Self::STROMA_SIDE;
        let (t0, t1) = (s0 - Self::RING, s1 + Self::RING);
        let seg = Resolution::SEG_LEVEL;
        let stroma = Raster::from_fn(extent, extent, seg, |x, y| {
            u8::from((s0..s1).contains(&x) && (s0..s1).contains(&y))
        });
        let tumour = Raster::from_fn(extent, extent, seg, |x, y| {
            let outer = (t0..t1).contains(&x) && (t0..t1).contains(&y);
            u8::from(outer && stroma.get(x, y) == 0)
        });
        // Grid points sit on 20x pixel corners, so each TIL disk centres on a
        // pixel and its centroid maps back to the planted point plus 0.25 µm.
        let mut tils_um = Vec::new();
        'grid: for j in 0..32 {
            for i in 0..32 {
                if tils_um.len() == n_in_tas {
                    break 'grid;
                }
                tils_um.push(((s0 + 20 + 30 * i) as f64, (s0 + 20 + 30 * j) as f64));
            }
        }
        assert_eq!(tils_um.len(), n_in_tas, "at most 1024 TILs fit the grid");
        // in the ring
        tils_um.extend([(150.0, 800.0), (800.0, 150.0), (1450.0, 1450.0)]);
        // in the background
        tils_um.extend([(40.0, 40.0), (1560.0, 900.0)]);
        ScoringSlide {
            extent_um: extent,
            tumour,
            stroma,
            tils_um,
            tils_in_tas: n_in_tas,
            tas_area_um2: (Self::STROMA_SIDE * Self::STROMA_SIDE) as f64,
        }
    }

    /// Pixel coordinates of the TILs at `res`.
    pub fn til_pixels(&self, res: Resolution) -> Vec<(usize, usize)> {
        self.tils_um
            .iter()
            .map(|&(x, y)| ((x / res.mpp) as usize, (y / res.mpp) as usize))
            .collect()
    }

    /// Grayscale rendering at `res` in [0, 1]: background light, stroma
    /// mid, tumour darker, TILs darkest.
    pub fn image(&self, res: Resolution) -> Raster<f64> {
        let scale = Resolution::SEG_LEVEL.mpp / res.mpp;
        let n = (self.extent_um as f64 * scale).round() as usize;
        let mut img = Raster::from_fn(n, n, res, |x, y| {
            let sx = (x as f64 / scale) as usize;
            let sy = (y as f64 / scale) as usize;
            if self.tumour.get(sx, sy) != 0 {
                0.3
            } else if self.stroma.get(sx, sy) != 0 {
                0.6
            } else {
                0.9
            }
        });
        let r = (1.5 / res.mpp).round() as i64;
        for (px, py) in self.til_pixels(res) {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy <= r * r {
                        let (x, y) = (px as i64 + dx, py as i64 + dy);
                        if x >= 0 && y >= 0 && (x as usize) < n && (y as usize) < n {
                            img.set(x as usize, y as usize, 0.1);
                        }
                    }
                }
            }
        }
        img
    }
}
