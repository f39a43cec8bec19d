use rand::Rng;

use tils_core::{Detection, Raster, Resolution};

/// Independent Bernoulli pixels.
pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, p: f64) -> Raster<u8> {
    Raster::from_fn(w, h, Resolution::SEG_LEVEL, |_, _| u8::from(rng.gen_bool(p)))
}

/// Union of random disks and rectangles, plus some isolated speckle.
pub fn random_blobs(rng: &mut impl Rng, w: usize, h: usize) -> Raster<u8> {
    let mut m = Raster::<u8>::new(w, h, Resolution::SEG_LEVEL);
    for _ in 0..rng.gen_range(1..6) {
        let cx = rng.gen_range(0..w) as i64;
        let cy = rng.gen_range(0..h) as i64;
        if rng.gen_bool(0.6) {
            let r = rng.gen_range(4..(w.min(h) / 4).max(5)) as i64;
            for y in (cy - r).max(0)..(cy + r + 1).min(h as i64) {
                for x in (cx - r).max(0)..(cx + r + 1).min(w as i64) {
                    if (x - cx).pow(2) + (y - cy).pow(2) <= r * r {
                        m.set(x as usize, y as usize, 1);
                    }
                }
            }
        } else {
            let rw = rng.gen_range(6..(w / 3).max(7));
            let rh = rng.gen_range(6..(h / 3).max(7));
            for y in cy as usize..(cy as usize + rh).min(h) {
                for x in cx as usize..(cx as usize + rw).min(w) {
                    m.set(x, y, 1);
                }
            }
        }
    }
    for _ in 0..rng.gen_range(0..8) {
        m.set(rng.gen_range(0..w), rng.gen_range(0..h), 1);
    }
    m
}

/// Detections in `[0, extent)²` µm. Confidences are drawn from a small set
/// so ties occur; coordinates are snapped to a 0.25 µm grid so that exact
/// distance ties occur too.
pub fn random_detections(rng: &mut impl Rng, n: usize, extent: f64) -> Vec<Detection<f64>> {
    (0..n)
        .map(|_| {
            let snap = |v: f64| (v * 4.0).round() / 4.0;
            Detection::new(
                snap(rng.gen_range(0.0..extent)),
                snap(rng.gen_range(0.0..extent)),
                f64::from(rng.gen_range(1..=10u8)) / 10.0,
            )
        })
        .collect()
}

pub fn random_points(rng: &mut impl Rng, n: usize, extent: f64) -> Vec<(f64, f64)> {
    random_detections(rng, n, extent)
        .into_iter()
        .map(|d| (d.x, d.y))
        .collect()
}
