//! Supervised learning-to-hash with sparse Gaussian process bit posteriors.
//!
//! The crate trains an `m`-bit binary hash function from a feature matrix
//! and pairwise same-class/different-class labels. Each bit is a Gaussian
//! process classifier over the features (sparse, through a fixed set of
//! inducing points); the bits are tied together by a pairwise likelihood
//! that rewards code agreement between similar items. Inference alternates
//! a moment-matching sweep per bit with a single-site resampling sweep over
//! the code matrix. The trained model is a tiny linear-in-kernel-space
//! object: `bit_j(x) = sign(k̄(x)ᵀ·w_j)`.
//!
//! Module map:
//!
//! * [`kernel`] — squared-exponential kernel, Gram matrices, robust
//!   Cholesky with an escalating jitter ladder.
//! * [`gp`] — sparse per-bit posterior: site parameters, cavity/moment
//!   updates, rank-`r` posterior refresh, prediction, weight extraction.
//! * [`codes`] — code matrix with cached code inner products, pairwise
//!   similarity log-likelihood, single-entry resampling sweeps.
//! * [`trainer`] — the alternating training loop and its report.
//! * [`hash`] — packed binary codes, Hamming search, model/code files.
//! * [`eval`] — retrieval metrics (mAP, precision within radius, PR curve).
//! * [`data`] — feature/label datasets, normalization, synthetic clusters.
//! * [`probit`] — numerically stable `Φ`, `ln Φ`, `φ/Φ`.
//! * [`oracles`] — slow reference implementations used to verify the fast
//!   paths in tests; kept independent of the code they check.
//!
//! The numeric core is generic over the scalar type via [`scalar::Real`]
//! (implemented for `f32` and `f64`); the aliases below fix the pipeline's
//! concrete `f64` types, which is what the on-disk formats store.

// Validation guards are written as negated comparisons on purpose:
// `!(x > 0)` is true for NaN, so the guard rejects it, where `x <= 0`
// would silently let NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bytes;
pub mod codes;
pub mod data;
pub mod error;
pub mod eval;
pub mod gp;
pub mod hash;
pub mod kernel;
pub mod oracles;
pub mod probit;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Pipeline-precision kernel configuration.
pub type KernelConfig = kernel::KernelConfig<f64>;
/// Pipeline-precision Cholesky factor.
pub type CholFactor = kernel::CholFactor<f64>;
/// Pipeline-precision sparse prior shared by all bit posteriors.
pub type FitcPrior = gp::FitcPrior<f64>;
/// Pipeline-precision per-bit posterior.
pub type BitPosterior = gp::BitPosterior<f64>;
/// Pipeline-precision similarity constraint set.
pub type SimilaritySet = codes::SimilaritySet<f64>;
/// Pipeline-precision hash model.
pub type HashModel = hash::HashModel<f64>;
