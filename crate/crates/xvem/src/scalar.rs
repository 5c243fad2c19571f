//! Scalar abstraction: every numerical kernel in this crate is generic over
//! the floating-point type through the [`Real`] trait.

use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt;

/// Floating-point scalar usable throughout the library (f32 or f64).
pub trait Real:
    nalgebra::RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
{
    /// Lossy conversion from `f64`, used for tabulated constants.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable")
    }

    /// Conversion to `f64` for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
