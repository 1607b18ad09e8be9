//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate (resampling, quaternion rotation, feature
//! math, the network, evaluation statistics) is generic over [`Real`] so the
//! same code runs in `f32` for training and `f64` for high-precision checks.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn from_f64c(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant not representable")
    }

    fn to_f64c(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for lifting an `f64` constant into a generic scalar.
#[inline]
pub fn real<F: Real>(v: f64) -> F {
    F::from_f64c(v)
}
