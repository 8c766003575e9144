//! Floating point scalar abstraction.
//!
//! The closed-form layer (parameters, adiabatic-elimination constants,
//! input-output coefficients, dressed-state formulas) is written against
//! [`Scalar`] so it can be evaluated in `f32` or `f64`. The truncated
//! Hilbert space solver is `f64` only.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};
use serde::Serialize;

/// Gathers the traits needed by the generic numerics.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + Debug
    + Display
    + Default
    + Serialize
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` literal into `Self`.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Machine epsilon scaled for "numerically zero" checks.
    fn tiny() -> Self;
}

impl Scalar for f32 {
    fn tiny() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    fn tiny() -> Self {
        1e-12
    }
}

pub(crate) fn cplx<T: Scalar>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

pub(crate) fn real<T: Scalar>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

pub(crate) fn imag_unit<T: Scalar>() -> Complex<T> {
    Complex::new(T::zero(), T::one())
}
