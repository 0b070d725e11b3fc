//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real field the engine computes in. Implemented for `f32` and `f64`.
pub trait Scalar: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `usize` to scalar.
    #[inline]
    fn of(n: usize) -> Self {
        Self::from_usize(n).expect("integer not representable")
    }

    /// Tolerance used where an algorithm needs "numerically zero": 1e-12 in
    /// double precision, proportionally looser for `f32`.
    #[inline]
    fn tiny() -> Self {
        Self::epsilon().sqrt() * Self::epsilon().sqrt() * Self::lit(4.5e3)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
