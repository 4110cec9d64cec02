//! Scalar abstraction shared by the deterministic dynamics and the log-densities.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar the SIR dynamics and log-densities are generic over.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Natural log of the gamma function for positive arguments.
    fn ln_gamma(self) -> Self;

    /// Converts an `f64` literal. Panics only if the type cannot represent finite f64 values.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy conversion used at reporting boundaries.
    fn as_f64(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn ln_gamma(self) -> f64 {
        libm::lgamma(self)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn ln_gamma(self) -> f32 {
        libm::lgammaf(self)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}
