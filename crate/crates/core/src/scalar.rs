//! Scalar abstractions.
//!
//! [`Field`] is the minimum needed for moment bookkeeping and the simplex:
//! exact ring/field arithmetic plus an ordering. It is implemented for `f32`,
//! `f64` and [`BigRational`], so the feasibility LP and the Farkas check can
//! run in exact arithmetic. [`Real`] adds the transcendental functions used by
//! correlations, Cholesky factors and the special functions.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Ordered field with conversions from primitive numbers.
pub trait Field:
    Clone + PartialOrd + Debug + Num + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Absolute tolerance used for sign tests in pivoting and feasibility
    /// decisions, before scaling by problem magnitude. Zero for exact types.
    fn feasibility_tol() -> Self;

    /// Tolerance for pivot elements in the simplex method.
    fn pivot_tol() -> Self;

    /// Converts a float literal; panics only for non-finite input.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    /// `self > 0`. Unlike `Signed::is_positive`, false for `+0.0`.
    fn gt_zero(&self) -> bool {
        *self > Self::zero()
    }

    /// `self < 0`. Unlike `Signed::is_negative`, false for `-0.0`.
    fn lt_zero(&self) -> bool {
        *self < Self::zero()
    }

    fn approx_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }

    fn min_of(a: Self, b: Self) -> Self {
        if a <= b {
            a
        } else {
            b
        }
    }
}

/// Floating point scalar (`f32` or `f64`).
pub trait Real:
    Field
    + Float
    + FloatConst
    + Copy
    + Default
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Complementary error function.
    fn erfc(self) -> Self;

    /// Natural logarithm of the gamma function for positive arguments.
    fn ln_gamma(self) -> Self;

    /// Relative accuracy targeted by iterative special-function routines.
    fn special_tol() -> Self;
}

impl Field for f64 {
    fn feasibility_tol() -> Self {
        1e-9
    }
    fn pivot_tol() -> Self {
        1e-11
    }
}

impl Field for f32 {
    fn feasibility_tol() -> Self {
        1e-4
    }
    fn pivot_tol() -> Self {
        1e-6
    }
}

impl Field for BigRational {
    fn feasibility_tol() -> Self {
        BigRational::zero()
    }
    fn pivot_tol() -> Self {
        BigRational::zero()
    }
    fn lit(x: f64) -> Self {
        BigRational::from_float(x).expect("finite literal")
    }
    fn from_count(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
}

impl Real for f64 {
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
    fn ln_gamma(self) -> Self {
        libm::lgamma(self)
    }
    fn special_tol() -> Self {
        1e-14
    }
}

impl Real for f32 {
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
    fn ln_gamma(self) -> Self {
        libm::lgammaf(self)
    }
    fn special_tol() -> Self {
        1e-6
    }
}

/// Exact rational image of a finite float.
pub fn rationalize(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}
