//! Numeric abstractions shared by the grid, fusion and learning code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, Num};

/// Field-like scalar used by the evidential algebra.
///
/// Only ring operations and division are required, which lets the belief-mass
/// code run on exact rationals as well as floats.
pub trait Scalar: Copy + PartialOrd + Debug + Num {
    /// Absolute tolerance used when checking that masses form a simplex.
    fn tolerance() -> Self;
}

impl Scalar for f32 {
    fn tolerance() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn tolerance() -> Self {
        1e-9
    }
}

/// Floating point scalar (f32 or f64) used by grids, metrics and networks.
pub trait Real:
    Scalar + Float + FloatConst + FromPrimitive + Sum + Default + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Scalar + Float + FloatConst + FromPrimitive + Sum + Default + Display + Send + Sync + 'static
{
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in scalar type")
}
