//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar used for coordinates, weights and field values.
///
/// Implemented for `f32` and `f64`. Random draws are always made in `f64`
/// and rounded, so a given seed produces the same stream for both widths.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Absolute slack used for unit-norm, probability-sum and overlap clamping checks.
    fn tolerance() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let z: f64 = rng.sample(StandardNormal);
        Self::lit(z)
    }

    fn uniform01<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::lit(rng.random::<f64>())
    }
}

impl Real for f64 {
    #[inline]
    fn tolerance() -> Self {
        1e-12
    }
}

impl Real for f32 {
    #[inline]
    fn tolerance() -> Self {
        1e-5
    }
}

/// Numerically stable `log Σ exp(values_i)`; `-inf` for an empty slice.
pub fn log_sum_exp<T: Real>(values: &[T]) -> T {
    let max = values.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}
