//! Scalar abstraction for the analytic parts of the crate (fluid model,
//! size distributions, statistics). The packet simulator itself runs on
//! integer time and `f64` windows.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal out of range")
    }

    /// Relative tolerance for comparisons that should be exact up to rounding.
    fn rel_eps() -> Self;
}

impl Scalar for f32 {
    fn rel_eps() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn rel_eps() -> Self {
        1e-12
    }
}
