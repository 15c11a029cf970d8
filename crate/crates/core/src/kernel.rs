//! Squared-exponential kernel, Gram matrices, and robust Cholesky
//! factorization.
//!
//! Two reproducibility rules shape this module:
//!
//! 1. Every dot product and squared distance is computed by the same
//!    sequential fold, so a kernel value is bit-identical whether it is
//!    produced one pair at a time or inside a batch Gram matrix. Encoding a
//!    query must match batch-encoding it exactly.
//! 2. Factorization failure is handled by an escalating jitter ladder with
//!    fixed rungs rather than anything adaptive, so a run either fails
//!    reproducibly or succeeds with a recorded amount of added jitter.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default diagonal jitter used when a config does not override it.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Squared-exponential kernel parameters.
///
/// `k(a, b) = signal_std² · exp(-‖a - b‖² / (2·length_scale²))`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig<R> {
    /// Signal standard deviation `σ_f` (so `k(x, x) = σ_f²`).
    pub signal_std: R,
    /// Length scale `ℓ` of the exponential.
    pub length_scale: R,
    /// Base diagonal jitter for factorizations; the ladder in
    /// [`robust_factorize`] escalates from this value.
    pub jitter: R,
}

impl<R: Real> KernelConfig<R> {
    /// Config with the default jitter. Errors unless `σ_f > 0` and `ℓ > 0`.
    pub fn new(signal_std: R, length_scale: R) -> Result<Self> {
        Self::with_jitter(signal_std, length_scale, R::cast(DEFAULT_JITTER))
    }

    /// Config with explicit jitter (`jitter ≥ 0`).
    pub fn with_jitter(signal_std: R, length_scale: R, jitter: R) -> Result<Self> {
        let cfg = KernelConfig { signal_std, length_scale, jitter };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Re-check the invariants (useful after deserialization).
    pub fn validate(&self) -> Result<()> {
        if !(self.signal_std > R::zero()) || !self.signal_std.is_finite() {
            return Err(Error::usage(format!(
                "kernel signal_std must be positive and finite, got {}",
                self.signal_std
            )));
        }
        if !(self.length_scale > R::zero()) || !self.length_scale.is_finite() {
            return Err(Error::usage(format!(
                "kernel length_scale must be positive and finite, got {}",
                self.length_scale
            )));
        }
        if self.jitter < R::zero() || !self.jitter.is_finite() {
            return Err(Error::usage(format!(
                "kernel jitter must be nonnegative and finite, got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    /// Prior variance at any point, `k(x, x) = σ_f²`.
    #[inline]
    pub fn prior_var(&self) -> R {
        self.signal_std * self.signal_std
    }
}

/// Sequential-fold dot product. All kernel arithmetic funnels through this
/// so scalar and batch paths agree bitwise.
#[inline]
pub(crate) fn seq_dot<R: Real>(a: ArrayView1<R>, b: ArrayView1<R>) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = R::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Squared distance via the expanded form `‖a‖² + ‖b‖² - 2aᵀb`, clamped to
/// zero from below (the expansion can go slightly negative for near-equal
/// points).
#[inline]
fn sq_dist_from_norms<R: Real>(na: R, nb: R, ab: R) -> R {
    let two = R::cast(2.0);
    let d2 = na + nb - two * ab;
    if d2 < R::zero() {
        R::zero()
    } else {
        d2
    }
}

#[inline]
fn kernel_from_sq_dist<R: Real>(d2: R, cfg: &KernelConfig<R>) -> R {
    let two = R::cast(2.0);
    let ell2 = cfg.length_scale * cfg.length_scale;
    cfg.prior_var() * (-d2 / (two * ell2)).exp()
}

/// Kernel value for one pair of points. Errors on dimension mismatch.
pub fn kernel_eval<R: Real>(a: ArrayView1<R>, b: ArrayView1<R>, cfg: &KernelConfig<R>) -> Result<R> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "kernel_eval: dimension mismatch, {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = seq_dot(a, a);
    let nb = seq_dot(b, b);
    let ab = seq_dot(a, b);
    Ok(kernel_from_sq_dist(sq_dist_from_norms(na, nb, ab), cfg))
}

/// Cross Gram matrix `K[i, j] = k(a_i, b_j)` between the rows of `a` and the
/// rows of `b`. Row norms are computed once per input with the same fold as
/// [`kernel_eval`], so entries equal the pairwise scalar calls bitwise.
pub fn gram_matrix<R: Real>(
    a: ArrayView2<R>,
    b: ArrayView2<R>,
    cfg: &KernelConfig<R>,
) -> Result<Array2<R>> {
    if a.ncols() != b.ncols() {
        return Err(Error::usage(format!(
            "gram_matrix: dimension mismatch, {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let na: Vec<R> = a.rows().into_iter().map(|r| seq_dot(r, r)).collect();
    let nb: Vec<R> = b.rows().into_iter().map(|r| seq_dot(r, r)).collect();
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    for (i, ra) in a.rows().into_iter().enumerate() {
        for (j, rb) in b.rows().into_iter().enumerate() {
            let ab = seq_dot(ra, rb);
            out[(i, j)] = kernel_from_sq_dist(sq_dist_from_norms(na[i], nb[j], ab), cfg);
        }
    }
    Ok(out)
}

/// Lower-triangular Cholesky factor plus the diagonal jitter that was added
/// to obtain it.
#[derive(Clone, Debug)]
pub struct CholFactor<R> {
    lower: Array2<R>,
    added_jitter: R,
}

impl<R: Real> CholFactor<R> {
    /// The lower-triangular factor `L` with `L·Lᵀ = M + c·I`.
    pub fn lower(&self) -> ArrayView2<'_, R> {
        self.lower.view()
    }

    /// The jitter `c` that was added to the diagonal (0 when none was needed).
    pub fn added_jitter(&self) -> R {
        self.added_jitter
    }

    /// Matrix order.
    pub fn order(&self) -> usize {
        self.lower.nrows()
    }

    /// Solve `L·y = rhs` by forward substitution.
    pub fn solve_l(&self, rhs: ArrayView1<R>) -> Array1<R> {
        let n = self.order();
        debug_assert_eq!(rhs.len(), n);
        let mut y = rhs.to_owned();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lower[(i, j)] * y[j];
            }
            y[i] = acc / self.lower[(i, i)];
        }
        y
    }

    /// Solve `Lᵀ·y = rhs` by back substitution.
    pub fn solve_lt(&self, rhs: ArrayView1<R>) -> Array1<R> {
        let n = self.order();
        debug_assert_eq!(rhs.len(), n);
        let mut y = rhs.to_owned();
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in (i + 1)..n {
                acc -= self.lower[(j, i)] * y[j];
            }
            y[i] = acc / self.lower[(i, i)];
        }
        y
    }

    /// Solve `(L·Lᵀ)·y = rhs`.
    pub fn solve(&self, rhs: ArrayView1<R>) -> Array1<R> {
        self.solve_lt(self.solve_l(rhs).view())
    }

    /// Dense inverse `(L·Lᵀ)⁻¹`, built column by column.
    pub fn inverse(&self) -> Array2<R> {
        let n = self.order();
        let mut inv = Array2::zeros((n, n));
        let mut e = Array1::zeros(n);
        for col in 0..n {
            e.fill(R::zero());
            e[col] = R::one();
            let x = self.solve(e.view());
            inv.column_mut(col).assign(&x);
        }
        inv
    }
}

/// Attempt a plain Cholesky in place; `None` if a pivot is nonpositive or
/// non-finite.
fn try_cholesky<R: Real>(m: ArrayView2<R>, shift: R) -> Option<Array2<R>> {
    let n = m.nrows();
    let mut l = Array2::<R>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = m[(i, j)];
            if i == j {
                acc += shift;
            }
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(acc > R::zero()) || !acc.is_finite() {
                    return None;
                }
                l[(i, j)] = acc.sqrt();
            } else {
                l[(i, j)] = acc / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Factor a symmetric matrix, escalating diagonal jitter on failure.
///
/// Tries `c ∈ {0, jitter, 10·jitter, 100·jitter, 1000·jitter}` in order and
/// returns the factor for the first `c` that yields a valid Cholesky of
/// `M + c·I`, together with that `c`. Exhausting the ladder is a numerical
/// error that reports the matrix order and the largest jitter tried.
pub fn robust_factorize<R: Real>(m: ArrayView2<R>, jitter: R) -> Result<CholFactor<R>> {
    if m.nrows() != m.ncols() {
        return Err(Error::usage(format!(
            "robust_factorize: matrix must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if jitter < R::zero() {
        return Err(Error::usage(format!("robust_factorize: jitter must be nonnegative, got {jitter}")));
    }
    let mut rungs = vec![R::zero()];
    if jitter > R::zero() {
        for scale in [1.0, 10.0, 100.0, 1000.0] {
            rungs.push(jitter * R::cast(scale));
        }
    }
    for &c in &rungs {
        if let Some(lower) = try_cholesky(m, c) {
            return Ok(CholFactor { lower, added_jitter: c });
        }
    }
    Err(Error::Numerical(format!(
        "cholesky failed for {n}x{n} matrix even with jitter {max}; matrix is not positive definite within the jitter ladder",
        n = m.nrows(),
        max = *rungs.last().expect("ladder is never empty"),
    )))
}
