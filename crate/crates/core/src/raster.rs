//! Row-major single-channel rasters with physical placement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{exact_mean, Pixel, Real};

/// Microns per pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub mpp: f64,
}

impl Resolution {
    /// 10x, used for tissue segmentation.
    pub const SEG_LEVEL: Resolution = Resolution { mpp: 1.0 };
    /// 20x, used for TIL detection.
    pub const DET_LEVEL: Resolution = Resolution { mpp: 0.5 };

    pub fn new(mpp: f64) -> Result<Self> {
        if !(mpp.is_finite() && mpp > 0.0) {
            return Err(Error::invalid(format!("mpp must be positive, got {mpp}")));
        }
        Ok(Resolution { mpp })
    }

    /// Pixel area in square microns.
    pub fn pixel_area_um2(self) -> f64 {
        self.mpp * self.mpp
    }
}

/// A 2-D grid with a physical frame.
///
/// Pixel `(x, y)` covers the physical square starting at
/// `((origin.0 + x) * mpp, (origin.1 + y) * mpp)` microns; its centre is half a
/// pixel further. The origin is expressed in pixels of the raster's own
/// resolution and may be negative for patches that overhang a padded border.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    origin: (i64, i64),
    resolution: Resolution,
    data: Vec<T>,
}

impl<T: Pixel> Raster<T> {
    pub fn new(width: usize, height: usize, resolution: Resolution) -> Self {
        Self::filled(width, height, resolution, T::zero())
    }

    pub fn filled(width: usize, height: usize, resolution: Resolution, value: T) -> Self {
        Raster {
            width,
            height,
            origin: (0, 0),
            resolution,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        resolution: Resolution,
        data: Vec<T>,
    ) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{}x{} raster needs {} pixels, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            origin: (0, 0),
            resolution,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        resolution: Resolution,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster {
            width,
            height,
            origin: (0, 0),
            resolution,
            data,
        }
    }

    pub fn with_origin(mut self, origin: (i64, i64)) -> Self {
        self.origin = origin;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn pixels(&self) -> &[T] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Bounds-checked read in local pixel coordinates; outside reads as zero.
    #[inline]
    pub fn get_or_zero(&self, x: i64, y: i64) -> T {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            T::zero()
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Same frame, different contents.
    pub fn map<U: Pixel>(&self, f: impl Fn(T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            origin: self.origin,
            resolution: self.resolution,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_same_shape<U>(&self, other: &Raster<U>, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: shape mismatch {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|v| v.is_binary())
    }

    pub fn require_binary(&self, what: &str) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::invalid(format!("{what}: raster is not a binary mask")))
        }
    }

    /// Number of non-zero pixels.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|v| **v != T::zero()).count()
    }

    /// Physical centre of local pixel `(x, y)` in microns.
    pub fn pixel_center_um(&self, x: usize, y: usize) -> (f64, f64) {
        let mpp = self.resolution.mpp;
        (
            (self.origin.0 as f64 + x as f64 + 0.5) * mpp,
            (self.origin.1 as f64 + y as f64 + 0.5) * mpp,
        )
    }

    /// Local pixel containing the physical point, if any.
    pub fn locate_um(&self, x_um: f64, y_um: f64) -> Option<(usize, usize)> {
        let mpp = self.resolution.mpp;
        let gx = (x_um / mpp).floor() as i64 - self.origin.0;
        let gy = (y_um / mpp).floor() as i64 - self.origin.1;
        if gx < 0 || gy < 0 || gx >= self.width as i64 || gy >= self.height as i64 {
            None
        } else {
            Some((gx as usize, gy as usize))
        }
    }

    /// Copy of the window at local `(x, y)`; reads outside the raster are zero.
    /// The window's origin keeps it in place physically.
    pub fn window(&self, x: i64, y: i64, w: usize, h: usize) -> Raster<T> {
        let mut out = Raster::new(w, h, self.resolution)
            .with_origin((self.origin.0 + x, self.origin.1 + y));
        let x0 = x.max(0);
        let x1 = (x + w as i64).min(self.width as i64);
        if x1 <= x0 {
            return out;
        }
        let (sx0, sx1) = (x0 as usize, x1 as usize);
        let dx0 = (x0 - x) as usize;
        for oy in 0..h {
            let sy = y + oy as i64;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            let src = &self.row(sy as usize)[sx0..sx1];
            let dst_start = oy * w + dx0;
            out.data[dst_start..dst_start + src.len()].copy_from_slice(src);
        }
        out
    }

    /// Convert pixel type, e.g. a `u8` mask into an `f64` probability map.
    pub fn cast<U: Pixel>(&self) -> Raster<U> {
        self.map(|v| <U as num_traits::NumCast>::from(v).unwrap_or_else(U::zero))
    }
}

impl<F: Real> Raster<F> {
    /// All pixels lie in [0, 1].
    pub fn is_probability(&self) -> bool {
        self.data
            .iter()
            .all(|v| *v >= F::zero() && *v <= F::one())
    }
}

/// Anything that can serve zero-filled windows at a single resolution, such
/// as an in-memory raster or one level of a tiled slide.
///
/// Implementations must tolerate concurrent reads.
pub trait RasterSource<T>: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn resolution(&self) -> Resolution;
    /// Window with top-left at level pixel `(x, y)`; its origin is `(x, y)`.
    fn read_window(&self, x: i64, y: i64, w: usize, h: usize) -> Result<Raster<T>>;
}

impl<T: Pixel> RasterSource<T> for Raster<T> {
    fn dims(&self) -> (usize, usize) {
        Raster::dims(self)
    }

    fn resolution(&self) -> Resolution {
        self.resolution
    }

    fn read_window(&self, x: i64, y: i64, w: usize, h: usize) -> Result<Raster<T>> {
        Ok(self.window(x - self.origin.0, y - self.origin.1, w, h))
    }
}

/// Centered sub-window of the requested size.
///
/// When the margin is odd the extra pixel is dropped from the right/bottom.
pub fn central_crop<T: Pixel>(raster: &Raster<T>, out_w: usize, out_h: usize) -> Result<Raster<T>> {
    if out_w > raster.width || out_h > raster.height {
        return Err(Error::invalid(format!(
            "cannot crop {}x{} to larger {}x{}",
            raster.width, raster.height, out_w, out_h
        )));
    }
    let left = (raster.width - out_w) / 2;
    let top = (raster.height - out_h) / 2;
    Ok(raster.window(left as i64, top as i64, out_w, out_h))
}

/// Resample a continuous-valued raster to another resolution.
///
/// Downscaling box-averages each target pixel's footprint; upscaling is
/// nearest neighbour. The scale factor must be an integer in either direction.
pub fn resample<T: Pixel>(raster: &Raster<T>, target: Resolution) -> Result<Raster<T>> {
    resample_impl(raster, target, false)
}

/// Resample a binary mask: box average thresholded at 0.5 when downscaling,
/// nearest neighbour when upscaling.
pub fn resample_mask<T: Pixel>(mask: &Raster<T>, target: Resolution) -> Result<Raster<T>> {
    mask.require_binary("resample_mask")?;
    resample_impl(mask, target, true)
}

fn resample_impl<T: Pixel>(raster: &Raster<T>, target: Resolution, is_mask: bool) -> Result<Raster<T>> {
    Resolution::new(target.mpp)?;
    Resolution::new(raster.resolution.mpp)?;
    let ratio = target.mpp / raster.resolution.mpp;
    if (ratio - 1.0).abs() < 1e-9 {
        return Ok(Raster {
            resolution: target,
            ..raster.clone()
        });
    }
    if ratio > 1.0 {
        let k = integer_factor(ratio)?;
        let w = raster.width.div_ceil(k);
        let h = raster.height.div_ceil(k);
        let origin = (
            raster.origin.0.div_euclid(k as i64),
            raster.origin.1.div_euclid(k as i64),
        );
        let mut out = Raster::new(w, h, target).with_origin(origin);
        let mut footprint = Vec::with_capacity(k * k);
        for ty in 0..h {
            for tx in 0..w {
                footprint.clear();
                for sy in ty * k..((ty + 1) * k).min(raster.height) {
                    for sx in tx * k..((tx + 1) * k).min(raster.width) {
                        footprint.push(raster.get(sx, sy).to_f64().unwrap_or(0.0));
                    }
                }
                let mean: f64 = exact_mean(&footprint);
                let v = if is_mask {
                    if mean >= 0.5 {
                        T::one()
                    } else {
                        T::zero()
                    }
                } else {
                    <T as num_traits::NumCast>::from(mean).unwrap_or_else(T::zero)
                };
                out.set(tx, ty, v);
            }
        }
        Ok(out)
    } else {
        let k = integer_factor(1.0 / ratio)?;
        let w = raster.width * k;
        let h = raster.height * k;
        let origin = (raster.origin.0 * k as i64, raster.origin.1 * k as i64);
        Ok(Raster::from_fn(w, h, target, |x, y| raster.get(x / k, y / k)).with_origin(origin))
    }
}

fn integer_factor(r: f64) -> Result<usize> {
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-6 * r {
        return Err(Error::invalid(format!(
            "resample factor {r} is not an integer ratio"
        )));
    }
    Ok(k as usize)
}
