//! Floating-point abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the optimizers are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant. Never fails for the supported types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(k: usize) -> Self {
        Self::from_usize(k).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Small dense vector kernels over slices. Every reduction runs in index order.
pub mod vec {
    use super::Scalar;

    #[inline]
    pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = S::zero();
        for (&x, &y) in a.iter().zip(b) {
            acc += x * y;
        }
        acc
    }

    #[inline]
    pub fn norm_sq<S: Scalar>(a: &[S]) -> S {
        dot(a, a)
    }

    #[inline]
    pub fn norm<S: Scalar>(a: &[S]) -> S {
        norm_sq(a).sqrt()
    }

    /// `y += alpha * x`
    #[inline]
    pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
        debug_assert_eq!(x.len(), y.len());
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi += alpha * xi;
        }
    }

    /// `x - alpha * dir` as a new vector.
    #[inline]
    pub fn step<S: Scalar>(x: &[S], alpha: S, dir: &[S]) -> Vec<S> {
        x.iter()
            .zip(dir)
            .map(|(&xi, &gi)| xi - alpha * gi)
            .collect()
    }

    #[inline]
    pub fn sub<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
        a.iter().zip(b).map(|(&x, &y)| x - y).collect()
    }

    #[inline]
    pub fn dist_sq<S: Scalar>(a: &[S], b: &[S]) -> S {
        let mut acc = S::zero();
        for (&x, &y) in a.iter().zip(b) {
            let d = x - y;
            acc += d * d;
        }
        acc
    }

    #[inline]
    pub fn all_finite<S: Scalar>(a: &[S]) -> bool {
        a.iter().all(|v| v.is_finite())
    }
}

/// Ceiling that ignores representation error just above an integer, so
/// `ceil(1.1 * 10)` is 11 and not 12.
#[inline]
pub(crate) fn tolerant_ceil(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}
