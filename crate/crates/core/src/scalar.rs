//! Scalar abstraction for the deterministic numerics.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the mechanism algebra, quadrature, ODE solvers and
/// closed forms are written against (`f32` or `f64`).
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion of an `f64` literal.
    #[inline]
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }

    /// Smallest tolerance worth asking for at this precision.
    #[inline]
    fn tol_floor() -> Self {
        Self::epsilon() * Self::c(64.0)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
