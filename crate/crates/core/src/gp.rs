//! Sparse per-bit Gaussian process posterior.
//!
//! Each hash bit carries a binary GP classifier over the features. The
//! latent function is approximated through `r` inducing points: the prior
//! is `N(0, Q + diag(D))` with `Q = K_fu·K_uu⁻¹·K_uf` and `D` the diagonal
//! remainder `diag(K_ff - Q)`, so one factorization of the small `r×r`
//! matrix serves every bit. Per-point evidence enters through Gaussian
//! *sites* in natural parameters `(τ̃, ν̃)`; moment matching against the
//! probit likelihood updates one site at a time, and a rank-`r` refresh
//! restores globally consistent marginals afterwards.
//!
//! Internally the posterior lives in whitened inducing coordinates: with
//! `K_uu = L·Lᵀ` and `ψ_i = L⁻¹·k_ui`, a site with precision `τ̃_i` acts on
//! the inducing weights as an observation of `ψ_iᵀw` with effective
//! precision `t_i = τ̃_i/(1 + τ̃_i·D_i)`. The `r×r` system
//! `M = I + Ψᵀ·diag(t)·Ψ` then yields every marginal in `O(n·r²)`:
//!
//! ```text
//! mean_i = (ψ_iᵀ·m_w + D_i·ν̃_i) / (1 + τ̃_i·D_i)
//! var_i  = ψ_iᵀ·M⁻¹·ψ_i / (1 + τ̃_i·D_i)² + D_i / (1 + τ̃_i·D_i)
//! ```
//!
//! Both expressions stay exact when `τ̃_i = 0` (no site) or `D_i = 0`
//! (inducing set equals the data), which the naive Woodbury route through
//! `D⁻¹` does not.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, kernel_eval, robust_factorize, CholFactor, KernelConfig};
use crate::probit::{ln_ndtr, ndtr, pdf_over_cdf};
use crate::scalar::Real;

/// Shared sparse prior: everything about the kernel and inducing geometry
/// that is common to all bit posteriors.
#[derive(Clone, Debug)]
pub struct FitcPrior<R> {
    kernel: KernelConfig<R>,
    inducing_inputs: Array2<R>,
    /// `P = K_fu`, kernel between data rows and inducing rows (`n×r`).
    cross_cov: Array2<R>,
    /// Cholesky factor `L` of `K_uu` (plus any ladder jitter).
    inducing_factor: CholFactor<R>,
    /// Whitened cross-covariance `Ψ = P·L⁻ᵀ`; row `i` is `L⁻¹·p_i`.
    whitened: Array2<R>,
    /// Diagonal remainder `D_i = max(k(x_i,x_i) - ‖ψ_i‖², 0)`.
    diag_correction: Array1<R>,
    /// Full prior marginal variance per point (`σ_f²` for this kernel).
    prior_diag: Array1<R>,
}

impl<R: Real> FitcPrior<R> {
    /// Number of data points `n`.
    pub fn len(&self) -> usize {
        self.cross_cov.nrows()
    }

    /// True when the prior covers no data points.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of inducing points `r`.
    pub fn rank(&self) -> usize {
        self.inducing_inputs.nrows()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.inducing_inputs.ncols()
    }

    pub fn kernel(&self) -> &KernelConfig<R> {
        &self.kernel
    }

    pub fn inducing_inputs(&self) -> ArrayView2<'_, R> {
        self.inducing_inputs.view()
    }

    pub fn cross_cov(&self) -> ArrayView2<'_, R> {
        self.cross_cov.view()
    }

    pub fn inducing_factor(&self) -> &CholFactor<R> {
        &self.inducing_factor
    }

    pub fn diag_correction(&self) -> ArrayView1<'_, R> {
        self.diag_correction.view()
    }

    pub fn prior_diag(&self) -> ArrayView1<'_, R> {
        self.prior_diag.view()
    }

    /// Jitter the ladder had to add when factorizing `K_uu`.
    pub fn added_jitter(&self) -> R {
        self.inducing_factor.added_jitter()
    }
}

/// Build the shared sparse prior from data rows and inducing rows.
pub fn build_fitc_prior<R: Real>(
    x: ArrayView2<R>,
    x_inducing: ArrayView2<R>,
    cfg: &KernelConfig<R>,
) -> Result<FitcPrior<R>> {
    cfg.validate()?;
    if x.nrows() == 0 || x_inducing.nrows() == 0 {
        return Err(Error::usage("build_fitc_prior: data and inducing sets must be nonempty"));
    }
    if x.ncols() != x_inducing.ncols() {
        return Err(Error::usage(format!(
            "build_fitc_prior: feature dimension mismatch, {} vs {}",
            x.ncols(),
            x_inducing.ncols()
        )));
    }
    let kuu = gram_matrix(x_inducing, x_inducing, cfg)?;
    let inducing_factor = robust_factorize(kuu.view(), cfg.jitter)?;
    let cross_cov = gram_matrix(x, x_inducing, cfg)?;

    let n = x.nrows();
    let r = x_inducing.nrows();
    let mut whitened = Array2::zeros((n, r));
    let mut diag_correction = Array1::zeros(n);
    let prior_var = cfg.prior_var();
    for i in 0..n {
        let psi = inducing_factor.solve_l(cross_cov.row(i));
        let mut q_ii = R::zero();
        for &v in psi.iter() {
            q_ii += v * v;
        }
        let d = prior_var - q_ii;
        diag_correction[i] = if d > R::zero() { d } else { R::zero() };
        whitened.row_mut(i).assign(&psi);
    }
    let prior_diag = Array1::from_elem(n, prior_var);
    Ok(FitcPrior {
        kernel: *cfg,
        inducing_inputs: x_inducing.to_owned(),
        cross_cov,
        inducing_factor,
        whitened,
        diag_correction,
        prior_diag,
    })
}

/// Per-point Gaussian site factors in natural parameters.
#[derive(Clone, Debug)]
pub struct SiteParams<R> {
    /// Natural precision `τ̃_i ≥ 0`.
    pub tau: Array1<R>,
    /// Natural mean·precision `ν̃_i`.
    pub nu: Array1<R>,
}

impl<R: Real> SiteParams<R> {
    pub fn zeros(n: usize) -> Self {
        SiteParams { tau: Array1::zeros(n), nu: Array1::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

/// Cavity distribution at one point: the posterior marginal with that
/// point's own site divided out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cavity<R> {
    pub mean: R,
    pub var: R,
}

/// Matched moments of `cavity × Φ(y·f)`.
#[derive(Clone, Copy, Debug)]
pub struct ProbitMoments<R> {
    /// `ln ∫ Φ(y·f)·N(f; cavity) df`.
    pub log_norm: R,
    /// Mean of the tilted distribution.
    pub mean: R,
    /// Variance of the tilted distribution.
    pub var: R,
}

/// Moments of the tilted distribution `∝ Φ(y·f)·N(f | μ₋, σ₋²)`.
///
/// Stable for `z = y·μ₋/√(1+σ₋²)` across at least `[-30, 30]`; the
/// `φ/Φ` ratio inside is evaluated in log space in the lower tail.
pub fn probit_moments<R: Real>(y: i8, cavity: &Cavity<R>) -> ProbitMoments<R> {
    debug_assert!(y == 1 || y == -1);
    debug_assert!(cavity.var > R::zero());
    let yr = R::cast(f64::from(y));
    let one = R::one();
    let s2 = cavity.var;
    let denom = (one + s2).sqrt();
    let z = yr * cavity.mean / denom;
    let log_norm = ln_ndtr(z);
    let ratio = pdf_over_cdf(z);
    let mean = cavity.mean + yr * s2 * ratio / denom;
    let var = s2 - s2 * s2 * ratio * (z + ratio) / (one + s2);
    ProbitMoments { log_norm, mean, var }
}

/// Statistics of one moment-matching sweep.
#[derive(Clone, Copy, Debug, Default)]
pub struct SweepStats {
    /// Largest absolute change over all site parameters.
    pub max_site_delta: f64,
    /// Points skipped because their cavity (or tilted variance) was invalid.
    pub skipped: usize,
}

impl SweepStats {
    pub(crate) fn merge(&mut self, other: SweepStats) {
        if other.max_site_delta > self.max_site_delta {
            self.max_site_delta = other.max_site_delta;
        }
        self.skipped += other.skipped;
    }
}

/// Posterior state of a single hash bit.
#[derive(Clone, Debug)]
pub struct BitPosterior<R> {
    prior: Arc<FitcPrior<R>>,
    sites: SiteParams<R>,
    marginal_mean: Array1<R>,
    marginal_var: Array1<R>,
    /// Whitened inducing posterior mean `m_w` (`r`).
    mean_w: Array1<R>,
    /// Whitened inducing posterior covariance `M⁻¹` (`r×r`).
    cov_w: Array2<R>,
    /// Inducing weights `α = L⁻ᵀ·m_w`; the bit's hash column.
    weights: Array1<R>,
    /// Times the refresh factorization needed a nonzero ladder rung.
    jitter_escalations: u64,
}

/// Prediction at a query point.
#[derive(Clone, Copy, Debug)]
pub struct Prediction<R> {
    /// Latent predictive mean `μ*`.
    pub mean: R,
    /// Latent predictive variance `σ*²` (floored at the kernel jitter).
    pub var: R,
    /// `Φ(μ*/√(1+σ*²))`, the probability of the `+1` bit.
    pub prob_plus: R,
}

impl<R: Real> BitPosterior<R> {
    /// Fresh posterior with zero sites: marginals equal the prior.
    pub fn new(prior: Arc<FitcPrior<R>>) -> Self {
        let n = prior.len();
        let r = prior.rank();
        let marginal_var = prior.prior_diag.clone();
        BitPosterior {
            prior,
            sites: SiteParams::zeros(n),
            marginal_mean: Array1::zeros(n),
            marginal_var,
            mean_w: Array1::zeros(r),
            cov_w: Array2::eye(r),
            weights: Array1::zeros(r),
            jitter_escalations: 0,
        }
    }

    pub fn prior(&self) -> &Arc<FitcPrior<R>> {
        &self.prior
    }

    pub fn sites(&self) -> &SiteParams<R> {
        &self.sites
    }

    pub fn marginal_mean(&self) -> ArrayView1<'_, R> {
        self.marginal_mean.view()
    }

    pub fn marginal_var(&self) -> ArrayView1<'_, R> {
        self.marginal_var.view()
    }

    /// Inducing weights `α`; valid after the most recent refresh.
    pub fn weights(&self) -> ArrayView1<'_, R> {
        self.weights.view()
    }

    pub fn jitter_escalations(&self) -> u64 {
        self.jitter_escalations
    }

    /// Reset the sites (and marginals) to the prior, keeping the shared
    /// geometry. Used by the optional cold-restart training mode.
    pub fn reset_sites(&mut self) {
        let n = self.prior.len();
        let r = self.prior.rank();
        self.sites = SiteParams::zeros(n);
        self.marginal_mean.fill(R::zero());
        self.marginal_var.assign(&self.prior.prior_diag);
        self.mean_w = Array1::zeros(r);
        self.cov_w = Array2::eye(r);
        self.weights = Array1::zeros(r);
    }

    /// Cavity at point `i`: divide the site out of the marginal.
    ///
    /// Returns `None` (a skip signal, not an error) when the resulting
    /// precision `1/var_i - τ̃_i` is not strictly positive and finite.
    pub fn cavity_of(&self, i: usize) -> Option<Cavity<R>> {
        let var = self.marginal_var[i];
        let mean = self.marginal_mean[i];
        let prec = R::one() / var - self.sites.tau[i];
        if !(prec > R::zero()) || !prec.is_finite() {
            return None;
        }
        let cav_var = R::one() / prec;
        let cav_mean = cav_var * (mean / var - self.sites.nu[i]);
        if !cav_var.is_finite() || !cav_mean.is_finite() {
            return None;
        }
        Some(Cavity { mean: cav_mean, var: cav_var })
    }

    /// One damped moment-matching update of site `i` against label `y_i`,
    /// with an immediate local marginal update. Returns the site delta, or
    /// `None` when the point was skipped.
    fn ep_update_point(&mut self, i: usize, y: i8, damping: R) -> Option<R> {
        let cavity = self.cavity_of(i)?;
        let moments = probit_moments(y, &cavity);
        if !(moments.var > R::zero()) || !moments.var.is_finite() {
            return None;
        }
        let one = R::one();
        let mut tau_new = one / moments.var - one / cavity.var;
        let mut nu_new = moments.mean / moments.var - cavity.mean / cavity.var;
        if tau_new < R::zero() {
            // Clamp to a valid (nonnegative-precision) site; the mean
            // information is scaled by the same factor, i.e. to zero.
            tau_new = R::zero();
            nu_new = R::zero();
        }
        let tau_old = self.sites.tau[i];
        let nu_old = self.sites.nu[i];
        let keep = one - damping;
        let tau_d = keep * tau_old + damping * tau_new;
        let nu_d = keep * nu_old + damping * nu_new;
        if !tau_d.is_finite() || !nu_d.is_finite() {
            return None;
        }
        self.sites.tau[i] = tau_d;
        self.sites.nu[i] = nu_d;

        // Local marginal: cavity × updated site.
        let prec = one / cavity.var + tau_d;
        let var = one / prec;
        self.marginal_mean[i] = var * (cavity.mean / cavity.var + nu_d);
        self.marginal_var[i] = var;

        let d_tau = (tau_d - tau_old).abs();
        let d_nu = (nu_d - nu_old).abs();
        Some(if d_tau > d_nu { d_tau } else { d_nu })
    }

    // The index drives `ep_update_point`; iterating `labels` instead would
    // hide that.
    #[allow(clippy::needless_range_loop)]
    fn ep_pass_range(&mut self, labels: &[i8], damping: R, lo: usize, hi: usize) -> SweepStats {
        let mut stats = SweepStats::default();
        for i in lo..hi {
            match self.ep_update_point(i, labels[i], damping) {
                Some(delta) => {
                    let d = delta.to_f64().unwrap_or(f64::INFINITY);
                    if d > stats.max_site_delta {
                        stats.max_site_delta = d;
                    }
                }
                None => stats.skipped += 1,
            }
        }
        stats
    }

    fn check_labels(&self, labels: &[i8]) -> Result<()> {
        if labels.len() != self.prior.len() {
            return Err(Error::usage(format!(
                "ep_sweep: {} labels for {} points",
                labels.len(),
                self.prior.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(Error::usage(format!("ep_sweep: labels must be ±1, got {bad}")));
        }
        Ok(())
    }

    /// One full moment-matching sweep: every point once, in index order,
    /// with local updates, followed by a single global refresh.
    pub fn ep_sweep(&mut self, labels: &[i8], damping: R) -> Result<SweepStats> {
        self.ep_sweep_blocked(labels, damping, self.prior.len().max(1))
    }

    /// Like [`ep_sweep`](Self::ep_sweep) but refreshes after every
    /// contiguous block of `block_size` points, bounding how stale the
    /// shared marginals can get on large inputs.
    pub fn ep_sweep_blocked(&mut self, labels: &[i8], damping: R, block_size: usize) -> Result<SweepStats> {
        self.check_labels(labels)?;
        if block_size == 0 {
            return Err(Error::usage("ep_sweep: block_size must be at least 1"));
        }
        if !(damping > R::zero()) || damping > R::one() {
            return Err(Error::usage(format!("ep_sweep: damping must be in (0, 1], got {damping}")));
        }
        let n = self.prior.len();
        let mut stats = SweepStats::default();
        let mut lo = 0;
        while lo < n {
            let hi = (lo + block_size).min(n);
            stats.merge(self.ep_pass_range(labels, damping, lo, hi));
            self.refresh_posterior()?;
            lo = hi;
        }
        Ok(stats)
    }

    /// Rebuild globally consistent marginals, inducing weights, and the
    /// `r×r` posterior reduction from the current sites. `O(n·r² + r³)`.
    pub fn refresh_posterior(&mut self) -> Result<()> {
        let prior = Arc::clone(&self.prior);
        let n = prior.len();
        let r = prior.rank();
        let one = R::one();

        // Effective per-point precision/information on the whitened
        // inducing weights.
        let mut eff_prec = Array1::<R>::zeros(n);
        let mut eff_info = Array1::<R>::zeros(n);
        for i in 0..n {
            let denom = one + self.sites.tau[i] * prior.diag_correction[i];
            eff_prec[i] = self.sites.tau[i] / denom;
            eff_info[i] = self.sites.nu[i] / denom;
        }

        // M = I + Ψᵀ·diag(t)·Ψ, assembled from √t-scaled rows.
        let mut scaled = prior.whitened.clone();
        for i in 0..n {
            let s = eff_prec[i].sqrt();
            for k in 0..r {
                scaled[(i, k)] *= s;
            }
        }
        let mut m = scaled.t().dot(&scaled);
        for k in 0..r {
            m[(k, k)] += one;
        }
        let factor = robust_factorize(m.view(), prior.kernel.jitter)?;
        if factor.added_jitter() > R::zero() {
            self.jitter_escalations += 1;
        }

        let info = prior.whitened.t().dot(&eff_info);
        self.mean_w = factor.solve(info.view());
        self.cov_w = factor.inverse();
        self.weights = prior.inducing_factor.solve_lt(self.mean_w.view());

        // Marginals: quadratic forms row by row through T = Ψ·M⁻¹.
        let t_mat = prior.whitened.dot(&self.cov_w);
        let var_floor = prior.kernel.jitter;
        for i in 0..n {
            let mut qf = R::zero();
            let mut proj = R::zero();
            for k in 0..r {
                qf += t_mat[(i, k)] * prior.whitened[(i, k)];
                proj += prior.whitened[(i, k)] * self.mean_w[k];
            }
            let d = prior.diag_correction[i];
            let denom = one + self.sites.tau[i] * d;
            self.marginal_mean[i] = (proj + d * self.sites.nu[i]) / denom;
            let var = qf / (denom * denom) + d / denom;
            self.marginal_var[i] = if var > var_floor { var } else { var_floor.max(R::min_positive_value()) };
        }
        Ok(())
    }

    /// Cavity-predictive pseudo-labels `γ_i = μ₋ᵢ/√(1+σ₋ᵢ²)`: `Φ(γ_i·y)`
    /// is the leave-one-site-out predictive probability of label `y` at
    /// point `i`. Invalid cavities fall back to the marginal-based value
    /// `μ_i/√(1+var_i)`.
    pub fn gamma_params(&self) -> Array1<R> {
        let n = self.prior.len();
        let one = R::one();
        let mut gamma = Array1::zeros(n);
        for i in 0..n {
            gamma[i] = match self.cavity_of(i) {
                Some(c) => c.mean / (one + c.var).sqrt(),
                None => self.marginal_mean[i] / (one + self.marginal_var[i]).sqrt(),
            };
        }
        gamma
    }

    /// Predictive distribution of the latent function at a query point.
    pub fn predict(&self, x_star: ArrayView1<R>) -> Result<Prediction<R>> {
        let prior = &self.prior;
        if x_star.len() != prior.dim() {
            return Err(Error::usage(format!(
                "predict: query dimension {} does not match model dimension {}",
                x_star.len(),
                prior.dim()
            )));
        }
        let r = prior.rank();
        let mut kbar = Array1::zeros(r);
        for u in 0..r {
            kbar[u] = kernel_eval(x_star, prior.inducing_inputs.row(u), &prior.kernel)?;
        }
        let mut mean = R::zero();
        for u in 0..r {
            mean += kbar[u] * self.weights[u];
        }
        let psi = prior.inducing_factor.solve_l(kbar.view());
        let mut self_q = R::zero();
        for u in 0..r {
            self_q += psi[u] * psi[u];
        }
        let sv = self.cov_w.dot(&psi);
        let mut post_q = R::zero();
        for u in 0..r {
            post_q += psi[u] * sv[u];
        }
        let raw = prior.kernel.prior_var() - self_q + post_q;
        let var = if raw > prior.kernel.jitter { raw } else { prior.kernel.jitter };
        let prob_plus = ndtr(mean / (R::one() + var).sqrt());
        Ok(Prediction { mean, var, prob_plus })
    }
}

/// Stack the inducing weights of `m` bit posteriors into an `r×m` weight
/// matrix (column `j` belongs to bit `j`). All posteriors must share the
/// same prior object.
pub fn extract_weights<R: Real>(bits: &[BitPosterior<R>]) -> Result<Array2<R>> {
    let first = bits
        .first()
        .ok_or_else(|| Error::usage("extract_weights: need at least one bit posterior"))?;
    let r = first.prior.rank();
    let mut w = Array2::zeros((r, bits.len()));
    for (j, bit) in bits.iter().enumerate() {
        if !Arc::ptr_eq(&bit.prior, &first.prior) {
            return Err(Error::usage("extract_weights: bit posteriors must share one prior"));
        }
        w.column_mut(j).assign(&bit.weights);
    }
    Ok(w)
}
