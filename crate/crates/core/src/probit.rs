//! Stable standard-normal CDF machinery.
//!
//! Everything probabilistic in this crate reduces to `Φ`, `log Φ`, and the
//! hazard-like ratio `φ/Φ`. Each has a well-known naive form that loses all
//! precision in one of the tails, so the three functions below pick their
//! evaluation branch by argument range:
//!
//! * `ndtr`: complementary-error-function identity, accurate everywhere.
//! * `ln_ndtr`: erfc-based in the bulk, asymptotic tail expansion below
//!   `z = -8`, and `ln(1 - Φ(-z))` symmetry in the far upper tail.
//! * `pdf_over_cdf`: direct division down to `z = -5`, log-space below.
//!
//! The branch boundaries are part of the crate's reproducibility contract:
//! results must be identical across runs and worker counts, so no branch is
//! ever chosen adaptively.

use crate::scalar::Real;

/// Lower tail below which `ln_ndtr` switches to the asymptotic expansion.
const LN_NDTR_TAIL: f64 = -8.0;

/// Upper tail at and above which `ln_ndtr` uses `ln(1 - Φ(-z))` to avoid
/// the `Φ(z) -> 1` rounding plateau.
const LN_NDTR_UPPER: f64 = 6.0;

/// Threshold below which `pdf_over_cdf` evaluates in log space.
const RATIO_LOG_SPACE: f64 = -5.0;

/// Standard normal density `φ(z)`.
#[inline]
pub fn norm_pdf<R: Real>(z: R) -> R {
    let half = R::cast(0.5);
    (-half * z * z).exp() / (R::TAU()).sqrt()
}

/// Log of the standard normal density, `ln φ(z)`.
#[inline]
pub fn ln_norm_pdf<R: Real>(z: R) -> R {
    let half = R::cast(0.5);
    -half * z * z - half * R::TAU().ln()
}

/// Standard normal CDF `Φ(z) = 0.5·erfc(-z/√2)`.
#[inline]
pub fn ndtr<R: Real>(z: R) -> R {
    R::cast(0.5) * (-z * R::FRAC_1_SQRT_2()).erfc()
}

/// `ln Φ(z)`, accurate over at least `z ∈ [-30, 30]`.
///
/// In the deep lower tail `Φ` is evaluated through the divergent asymptotic
/// series `Φ(z) = φ(z)/(-z)·(1 - z⁻² + 3z⁻⁴ - 15z⁻⁶ + …)`, truncated where
/// its terms stop improving double precision.
pub fn ln_ndtr<R: Real>(z: R) -> R {
    if z < R::cast(LN_NDTR_TAIL) {
        // ln Φ(z) = ln φ(z) - ln(-z) + ln(series); 12 terms leave a relative
        // truncation error below 1e-10 at z = -8 and far less deeper in.
        let z2 = z * z;
        let mut term = R::one();
        let mut series = R::one();
        for k in 1..=12u32 {
            term = -term * R::cast((2 * k - 1) as f64) / z2;
            series += term;
        }
        ln_norm_pdf(z) - (-z).ln() + series.ln()
    } else if z >= R::cast(LN_NDTR_UPPER) {
        // Φ(z) rounds to 1 beyond z ≈ 8; ln(1 - Φ(-z)) keeps the tiny
        // log-probability. Φ(-z) is exact here because -z is in the bulk.
        (-ndtr(-z)).ln_1p()
    } else {
        ndtr(z).ln()
    }
}

/// The ratio `φ(z)/Φ(z)` (inverse Mills ratio of the lower tail).
///
/// Grows like `-z` as `z -> -∞`; the naive quotient underflows/overflows
/// there, so the lower tail goes through `exp(ln φ - ln Φ)`.
pub fn pdf_over_cdf<R: Real>(z: R) -> R {
    if z < R::cast(RATIO_LOG_SPACE) {
        (ln_norm_pdf(z) - ln_ndtr(z)).exp()
    } else {
        norm_pdf(z) / ndtr(z)
    }
}
