use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the numerical core is generic over: `f32` or `f64`.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Display + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Literal conversion from `f64`.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    nalgebra::convert(x)
}

#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn is_nan<T: Scalar>(x: T) -> bool {
    to_f64(x).is_nan()
}

/// Whether `x` is a finite number (not NaN, not infinite).
#[inline]
pub fn is_finite<T: Scalar>(x: T) -> bool {
    to_f64(x).is_finite()
}
