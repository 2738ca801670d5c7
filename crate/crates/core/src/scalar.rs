//! Floating-point scalar abstraction shared by the generic numerical code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::RealField;
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar usable by the tensor algebra, filters, metrics and the
/// deterministic baselines. Implemented for `f32` and `f64`.
pub trait Real:
    RealField + Float + FromPrimitive + ToPrimitive + Copy + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literal constants.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant representable")
    }

    /// Conversion from a count.
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    /// Widening conversion to `f64`.
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}
