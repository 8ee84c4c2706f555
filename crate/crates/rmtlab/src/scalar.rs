//! Scalar abstraction for the numeric core.
//!
//! The linear-algebra, spectral and contour layers are generic over a
//! floating-point scalar; concrete aliases at the crate root fix `f64`
//! for the sampling and Monte Carlo layers.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;

/// Floating-point scalar: f32 or f64.
pub trait Scalar:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from f64 literals and counts.
    fn from_f64_lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    fn from_usize_lit(x: usize) -> Self {
        Self::from_usize(x).expect("usize conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex number over the generic scalar.
pub type Cplx<S> = Complex<S>;
