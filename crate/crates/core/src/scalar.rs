//! Floating-point abstraction shared by every numerical kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type the screening kernels are generic over (`f32` or `f64`).
///
/// The tolerance hooks let single precision use thresholds it can actually
/// resolve; the `f64` values are the ones the algorithms are specified with.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative pivot tolerance for rank detection in orthogonalization.
    fn rank_tolerance() -> Self;
    /// Threshold below which `1 - a_j` (or a residual norm) counts as degenerate.
    fn degeneracy_tolerance() -> Self;
    /// Floor applied to a zero residual sum of squares before taking its log.
    fn rss_floor() -> Self;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 literal")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn rank_tolerance() -> Self {
        1e-10
    }
    fn degeneracy_tolerance() -> Self {
        1e-10
    }
    fn rss_floor() -> Self {
        1e-300
    }
}

impl Scalar for f32 {
    fn rank_tolerance() -> Self {
        1e-5
    }
    fn degeneracy_tolerance() -> Self {
        1e-5
    }
    fn rss_floor() -> Self {
        1e-37
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

/// `y <- y + alpha * x`
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}
