//! Scalar abstraction: the cost arithmetic is written once, over any
//! `num-traits` float.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar used for all costs, distances and potentials.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Lossless-enough conversion from an `f64` literal (panics only on NaN
/// targets, which no builtin float produces).
pub fn from_f64<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant not representable in scalar type")
}

/// Request counts enter cost sums multiplied by distances.
pub fn from_count<T: Scalar>(c: u64) -> T {
    T::from_u64(c).expect("count not representable in scalar type")
}

/// Absolute comparison tolerance: 1e-9 at double precision, widened for
/// scalar types whose epsilon cannot resolve that.
pub fn tolerance<T: Scalar>() -> T {
    let base = from_f64::<T>(1e-9);
    let eps_floor = T::epsilon() * from_f64::<T>(100.0);
    if eps_floor > base {
        eps_floor
    } else {
        base
    }
}

/// Comparison slack for sums of the given magnitude: the absolute
/// [`tolerance`], widened where the scalar's precision cannot resolve it at
/// that scale. At double precision and desk-scale magnitudes this is the
/// plain absolute tolerance.
pub fn tolerance_at<T: Scalar>(magnitude: T) -> T {
    let abs = tolerance::<T>();
    let rel = T::epsilon() * from_f64::<T>(1024.0) * magnitude.abs();
    if rel > abs {
        rel
    } else {
        abs
    }
}

/// `[x]^+`, the positive part.
#[inline]
pub fn pos<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}
