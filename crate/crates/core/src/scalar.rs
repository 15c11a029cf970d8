//! Scalar abstraction for the numeric core.
//!
//! Kernel algebra, the bit posteriors, and the code sampler are written
//! against [`Real`] rather than a concrete float so the same code runs in
//! `f32` and `f64`. The pipeline (training, file formats, CLI) instantiates
//! everything at `f64`; see the type aliases at the crate root.

use std::fmt::{Debug, Display};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar usable by the numeric core.
///
/// Extends [`num_traits::Float`] with the complementary error function,
/// which the standard library does not provide and on which every probit
/// quantity in this crate is built.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Complementary error function `erfc(x) = 1 - erf(x)`.
    fn erfc(self) -> Self;

    /// Lossy conversion from `f64`, for constants and configuration values.
    ///
    /// Panics if the value is not representable at all (it never is for
    /// finite inputs into `f32`/`f64`, which merely round).
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant must convert")
    }
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        // The f32-native erfcf loses relative accuracy in the far tail;
        // routing through f64 keeps the deep-tail log-probabilities usable.
        libm::erfc(self as f64) as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfc_reference_values() {
        // erfc(0) = 1, erfc(+inf) -> 0, erfc(-x) = 2 - erfc(x).
        assert_eq!(Real::erfc(0.0f64), 1.0);
        assert!((Real::erfc(1.0f64) - 0.157_299_207_050_285_13).abs() < 1e-15);
        let x = 0.7f64;
        assert!((Real::erfc(-x) - (2.0 - Real::erfc(x))).abs() < 1e-15);
    }

    #[test]
    fn f32_tail_goes_through_f64() {
        // erfcf underflows near 10; the f64 route keeps a usable value.
        let v = Real::erfc(10.0f32);
        assert!(v > 0.0 && v < 1e-40);
    }

    #[test]
    fn cast_rounds() {
        assert_eq!(f32::cast(0.5), 0.5f32);
        assert_eq!(f64::cast(1e-8), 1e-8);
    }
}
