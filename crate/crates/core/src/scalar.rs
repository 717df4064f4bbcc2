//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the estimators, bounds and geometry are generic over.
///
/// Implemented for `f32` and `f64`; the crate root exposes `f64` aliases for
/// the common case.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + FromStr
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable in scalar")
    }

    /// Converts a count into `Self`.
    #[inline]
    fn count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable in scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Squared Euclidean distance between two equal-length slices.
#[inline]
pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| {
            let d = x - y;
            acc + d * d
        })
}

/// Euclidean distance between two equal-length slices.
#[inline]
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    squared_distance(a, b).sqrt()
}
