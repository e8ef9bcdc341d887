//! Scalar abstraction for the simplex core: `f64` for speed, exact
//! rationals for oracle duty.

use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait LpScalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Lifts an `f64` into the scalar. Exact for rationals (dyadic
    /// expansion), identity for floats. Panics on non-finite input.
    fn from_f64(x: f64) -> Self;

    fn to_f64(&self) -> f64;

    /// Magnitudes at or below this are treated as zero by the pivoting
    /// rules. Exact scalars return zero.
    fn pivot_tol() -> Self;

    fn abs_val(&self) -> Self;
}

impl LpScalar for f64 {
    fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "LP coefficients must be finite");
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn pivot_tol() -> Self {
        1e-9
    }

    fn abs_val(&self) -> Self {
        self.abs()
    }
}

impl LpScalar for BigRational {
    fn from_f64(x: f64) -> Self {
        BigRational::from_f64(x).expect("LP coefficients must be finite")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn pivot_tol() -> Self {
        BigRational::zero()
    }

    fn abs_val(&self) -> Self {
        Signed::abs(self)
    }
}
