//! Scalar traits the rest of the crate is generic over.
//!
//! [`Pixel`] covers anything a [`Raster`](crate::Raster) can hold (`u8` masks,
//! `f32`/`f64` probability maps); [`Real`] is the floating-point subset used
//! for probabilities, physical coordinates and metrics.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, Num, NumCast, ToPrimitive};

/// A raster pixel value.
pub trait Pixel:
    Num + NumCast + Copy + PartialOrd + Default + Debug + Send + Sync + 'static
{
    /// True for exactly zero or one.
    fn is_binary(self) -> bool {
        self == Self::zero() || self == Self::one()
    }
}

impl<T> Pixel for T where
    T: Num + NumCast + Copy + PartialOrd + Default + Debug + Send + Sync + 'static
{
}

/// floating point: f32 or f64
pub trait Real: Pixel + Float + FromPrimitive + ToPrimitive + Display + Sum {
    /// Lossless-enough conversion from an `f64` constant.
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 constant representable")
    }

    fn of_usize(v: usize) -> Self {
        <Self as NumCast>::from(v).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite float")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Correctly rounded sum of `values` (Shewchuk's partials algorithm).
///
/// The result is independent of the order of `values`, which is what makes
/// ensemble averages and stitched maps bit-reproducible.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::with_capacity(4);
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the partials (non-overlapping, increasing magnitude) to nearest.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Order-independent arithmetic mean.
///
/// The quotient is corrected by the exact residual, so `k` copies of `v`
/// average to exactly `v` and repeating the whole input changes nothing.
pub fn exact_mean<F: Real>(values: &[F]) -> F {
    debug_assert!(!values.is_empty());
    if values.iter().all(|&v| v == values[0]) {
        return values[0];
    }
    let vals = || values.iter().map(|v| v.as_f64());
    let n = values.len() as f64;
    let q = exact_sum(vals()) / n;
    let p = q * n;
    let e = q.mul_add(n, -p);
    let r = exact_sum(vals().chain([-p, -e]));
    F::of(q + r / n)
}
