//! Binary code matrix, pairwise similarity likelihood, and the
//! single-entry resampling sweep.
//!
//! Pairwise supervision is anchored at `t` *representative* rows: every
//! unordered pair `{i, l}` with at least one representative carries a ±1
//! same-class label `s_il`, and the likelihood rewards code agreement
//! through `Φ(σ_y·s_il·V_il)` where `V_il = Σ_j Y_ij·Y_lj` is the code
//! inner product. The code matrix keeps an `n×t` integer cache of the inner
//! products against every representative so that flipping one bit costs
//! `O(t)` cache updates (`O(t + n)` when the flipped row is itself a
//! representative) instead of a recomputation.
//!
//! Pairs between two representatives exist in the cache twice (row `i`
//! against column `l` and row `l` against column `i`); the likelihood and
//! the sampler count each such pair exactly once.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::probit::ln_ndtr;
use crate::scalar::Real;

/// Pairwise ±1 similarity labels against a representative subset, plus the
/// likelihood scale `σ_y`.
#[derive(Clone, Debug)]
pub struct SimilaritySet<R> {
    /// Training-row indices of the representatives, in column order.
    representatives: Vec<usize>,
    /// For each training row, its representative column if it is one.
    rep_col_of: Vec<Option<usize>>,
    /// `labels[(i, k)] = ±1` similarity of row `i` against representative
    /// `k`; `0` on the excluded self pairs.
    labels: Array2<i8>,
    /// Likelihood scale `σ_y` (commonly `2/m`).
    sigma_y: R,
}

impl<R: Real> SimilaritySet<R> {
    /// Number of training rows covered.
    pub fn num_points(&self) -> usize {
        self.labels.nrows()
    }

    /// Number of representatives `t`.
    pub fn num_reps(&self) -> usize {
        self.representatives.len()
    }

    pub fn representatives(&self) -> &[usize] {
        &self.representatives
    }

    pub fn sigma_y(&self) -> R {
        self.sigma_y
    }

    /// Representative column of row `i`, if `i` is a representative.
    pub fn rep_col(&self, i: usize) -> Option<usize> {
        self.rep_col_of[i]
    }

    /// Similarity label of row `i` against representative column `k`
    /// (`0` only for the self pair).
    pub fn label(&self, i: usize, k: usize) -> i8 {
        self.labels[(i, k)]
    }

    /// Whether the unordered pair behind cache slot `(i, k)` belongs to the
    /// likelihood sum. Self pairs are excluded; a pair of two
    /// representatives is claimed by the slot whose row index is smaller.
    #[inline]
    pub fn pair_included(&self, i: usize, k: usize) -> bool {
        let l = self.representatives[k];
        if i == l {
            return false;
        }
        match self.rep_col_of[i] {
            Some(_) => i < l,
            None => true,
        }
    }

    /// Total number of distinct pairs in the likelihood.
    pub fn num_pairs(&self) -> usize {
        let n = self.num_points();
        let t = self.num_reps();
        // Each representative pairs with everything else; rep-rep pairs
        // would be counted twice.
        t * (n - 1) - t * (t - 1) / 2
    }
}

/// Turn per-row label sets into a representative-anchored similarity set:
/// `s_il = +1` when the label sets of `i` and `l` intersect, `-1` otherwise.
///
/// `row_labels[i]` must be the sorted label ids of training row `i` and must
/// be nonempty; `representatives` must be distinct, in-range row indices.
pub fn derive_similarities<R: Real>(
    row_labels: &[Vec<u32>],
    representatives: &[usize],
    sigma_y: R,
) -> Result<SimilaritySet<R>> {
    let n = row_labels.len();
    if n < 2 {
        return Err(Error::usage("derive_similarities: need at least two labeled rows"));
    }
    if representatives.is_empty() {
        return Err(Error::usage("derive_similarities: need at least one representative"));
    }
    if !(sigma_y >= R::zero()) || !sigma_y.is_finite() {
        return Err(Error::usage(format!(
            "derive_similarities: sigma_y must be nonnegative and finite, got {sigma_y}"
        )));
    }
    let mut rep_col_of = vec![None; n];
    for (k, &l) in representatives.iter().enumerate() {
        if l >= n {
            return Err(Error::usage(format!(
                "derive_similarities: representative index {l} out of range for {n} rows"
            )));
        }
        if rep_col_of[l].is_some() {
            return Err(Error::usage(format!("derive_similarities: duplicate representative {l}")));
        }
        rep_col_of[l] = Some(k);
    }
    for (i, ls) in row_labels.iter().enumerate() {
        if ls.is_empty() {
            return Err(Error::usage(format!("derive_similarities: row {i} has no labels")));
        }
        debug_assert!(ls.windows(2).all(|w| w[0] < w[1]), "row labels must be sorted and deduped");
    }

    let t = representatives.len();
    let mut labels = Array2::<i8>::zeros((n, t));
    for (k, &l) in representatives.iter().enumerate() {
        let rep_labels = &row_labels[l];
        for i in 0..n {
            if i == l {
                continue;
            }
            labels[(i, k)] = if sorted_intersects(&row_labels[i], rep_labels) { 1 } else { -1 };
        }
    }
    Ok(SimilaritySet { representatives: representatives.to_vec(), rep_col_of, labels, sigma_y })
}

/// Merge-scan intersection test for two sorted id lists.
fn sorted_intersects(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Entry visiting order for [`gibbs_sweep`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ScanOrder {
    /// Fixed row-major order (the default; reproducible across runs).
    #[default]
    RowMajor,
    /// A fresh random permutation of the entries each sweep, drawn from the
    /// sweep's RNG (still reproducible for a fixed seed).
    Randomized,
}

/// The ±1 code matrix with the representative inner-product cache.
#[derive(Clone, Debug)]
pub struct CodeMatrix {
    /// `n×m` entries in {-1, +1}.
    bits: Array2<i8>,
    /// `v_cache[(i, k)] = Σ_j bits[(i, j)]·bits[(R_k, j)]`.
    v_cache: Array2<i32>,
    /// Representative rows, shared with the similarity set that built us.
    representatives: Vec<usize>,
}

impl CodeMatrix {
    /// Wrap a ±1 matrix and build the inner-product cache against the given
    /// representative rows.
    pub fn new(bits: Array2<i8>, representatives: &[usize]) -> Result<Self> {
        if bits.nrows() == 0 || bits.ncols() == 0 {
            return Err(Error::usage("CodeMatrix: code matrix must be nonempty"));
        }
        if let Some(bad) = bits.iter().find(|&&b| b != 1 && b != -1) {
            return Err(Error::usage(format!("CodeMatrix: entries must be ±1, got {bad}")));
        }
        for &l in representatives {
            if l >= bits.nrows() {
                return Err(Error::usage(format!(
                    "CodeMatrix: representative {l} out of range for {} rows",
                    bits.nrows()
                )));
            }
        }
        let v_cache = Self::compute_cache(&bits, representatives);
        Ok(CodeMatrix { bits, v_cache, representatives: representatives.to_vec() })
    }

    fn compute_cache(bits: &Array2<i8>, representatives: &[usize]) -> Array2<i32> {
        let n = bits.nrows();
        let m = bits.ncols();
        let mut cache = Array2::<i32>::zeros((n, representatives.len()));
        for (k, &l) in representatives.iter().enumerate() {
            for i in 0..n {
                let mut v = 0i32;
                for j in 0..m {
                    v += i32::from(bits[(i, j)]) * i32::from(bits[(l, j)]);
                }
                cache[(i, k)] = v;
            }
        }
        cache
    }

    pub fn num_points(&self) -> usize {
        self.bits.nrows()
    }

    pub fn num_bits(&self) -> usize {
        self.bits.ncols()
    }

    pub fn bits(&self) -> ArrayView2<'_, i8> {
        self.bits.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, i8> {
        self.bits.row(i)
    }

    /// Copy of code column `j` (the per-bit classification labels).
    pub fn column(&self, j: usize) -> Vec<i8> {
        self.bits.column(j).to_vec()
    }

    /// Cached inner product of row `i` with representative column `k`.
    pub fn inner_product(&self, i: usize, k: usize) -> i32 {
        self.v_cache[(i, k)]
    }

    /// Recompute the cache from scratch and compare (test/debug helper).
    pub fn cache_is_coherent(&self) -> bool {
        self.v_cache == Self::compute_cache(&self.bits, &self.representatives)
    }

    /// Number of distinct code rows.
    pub fn distinct_rows(&self) -> usize {
        let mut rows: Vec<&[i8]> = self
            .bits
            .rows()
            .into_iter()
            .map(|r| r.to_slice().expect("row-major code matrix"))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows.len()
    }
}

/// Log-likelihood of the similarity labels under the current codes:
/// `Σ ln Φ(σ_y·s_il·V_il)` over each distinct labeled pair, in fixed
/// (column-major over representatives) order.
pub fn similarity_loglik<R: Real>(cm: &CodeMatrix, ss: &SimilaritySet<R>) -> R {
    debug_assert_eq!(cm.num_points(), ss.num_points());
    debug_assert_eq!(cm.representatives, ss.representatives());
    let n = cm.num_points();
    let mut total = R::zero();
    for k in 0..ss.num_reps() {
        for i in 0..n {
            if !ss.pair_included(i, k) {
                continue;
            }
            let s = R::cast(f64::from(ss.label(i, k)));
            let v = R::cast(f64::from(cm.inner_product(i, k)));
            total += ln_ndtr(ss.sigma_y() * s * v);
        }
    }
    total
}

/// Conditional probability that entry `(i, j)` equals `+1` given all other
/// codes: `p ∝ Φ(γ_ij·c)·∏ Φ(σ_y·s·V(c))` over the pairs that involve row
/// `i`, evaluated for `c = ±1` through the cache.
pub fn gibbs_conditional<R: Real>(
    cm: &CodeMatrix,
    i: usize,
    j: usize,
    gamma_ij: R,
    ss: &SimilaritySet<R>,
) -> R {
    let old = cm.bits[(i, j)];
    let old_r = R::cast(f64::from(old));
    let mut lp_plus = ln_ndtr(gamma_ij);
    let mut lp_minus = ln_ndtr(-gamma_ij);
    let sigma = ss.sigma_y();

    // Pairs of row i with each representative.
    for (k, &l) in ss.representatives().iter().enumerate() {
        if l == i {
            continue;
        }
        let s = R::cast(f64::from(ss.label(i, k)));
        let w = R::cast(f64::from(cm.bits[(l, j)]));
        let base = R::cast(f64::from(cm.inner_product(i, k))) - old_r * w;
        lp_plus += ln_ndtr(sigma * s * (base + w));
        lp_minus += ln_ndtr(sigma * s * (base - w));
    }
    // When i is itself a representative it is also paired with every
    // non-representative row (rep-rep pairs were already counted above).
    if let Some(ki) = ss.rep_col(i) {
        let n = cm.num_points();
        for i2 in 0..n {
            if i2 == i || ss.rep_col(i2).is_some() {
                continue;
            }
            let s = R::cast(f64::from(ss.label(i2, ki)));
            let w = R::cast(f64::from(cm.bits[(i2, j)]));
            let base = R::cast(f64::from(cm.inner_product(i2, ki))) - old_r * w;
            lp_plus += ln_ndtr(sigma * s * (base + w));
            lp_minus += ln_ndtr(sigma * s * (base - w));
        }
    }
    R::one() / (R::one() + (lp_minus - lp_plus).exp())
}

/// Resample entry `(i, j)` from its conditional, using the uniform draw
/// `u ∈ [0, 1)`. Updates the cache incrementally. Returns whether the entry
/// changed.
pub fn gibbs_entry<R: Real>(
    cm: &mut CodeMatrix,
    i: usize,
    j: usize,
    gamma_ij: R,
    ss: &SimilaritySet<R>,
    u: R,
) -> bool {
    let p_plus = gibbs_conditional(cm, i, j, gamma_ij, ss);
    let old = cm.bits[(i, j)];
    let new = if u < p_plus { 1i8 } else { -1i8 };
    if new == old {
        return false;
    }
    cm.bits[(i, j)] = new;
    let delta = i32::from(new) - i32::from(old); // ±2
    for (k, &l) in ss.representatives().iter().enumerate() {
        if l == i {
            continue;
        }
        cm.v_cache[(i, k)] += delta * i32::from(cm.bits[(l, j)]);
    }
    if let Some(ki) = ss.rep_col(i) {
        let n = cm.num_points();
        for i2 in 0..n {
            if i2 == i {
                continue;
            }
            cm.v_cache[(i2, ki)] += delta * i32::from(cm.bits[(i2, j)]);
        }
    }
    true
}

/// One resampling sweep over every entry of the code matrix. Returns the
/// number of entries that changed sign.
pub fn gibbs_sweep<R: Real>(
    cm: &mut CodeMatrix,
    gammas: ArrayView2<R>,
    ss: &SimilaritySet<R>,
    rng: &mut impl Rng,
    order: ScanOrder,
) -> Result<usize> {
    let n = cm.num_points();
    let m = cm.num_bits();
    if gammas.nrows() != n || gammas.ncols() != m {
        return Err(Error::usage(format!(
            "gibbs_sweep: gamma matrix is {}x{}, codes are {n}x{m}",
            gammas.nrows(),
            gammas.ncols()
        )));
    }
    if ss.num_points() != n {
        return Err(Error::usage(format!(
            "gibbs_sweep: similarity set covers {} rows, codes have {n}",
            ss.num_points()
        )));
    }
    if ss.representatives() != cm.representatives {
        return Err(Error::usage(
            "gibbs_sweep: code matrix and similarity set disagree on representatives",
        ));
    }
    let mut flips = 0;
    match order {
        ScanOrder::RowMajor => {
            for i in 0..n {
                for j in 0..m {
                    let u = R::cast(rng.random::<f64>());
                    if gibbs_entry(cm, i, j, gammas[(i, j)], ss, u) {
                        flips += 1;
                    }
                }
            }
        }
        ScanOrder::Randomized => {
            let mut visit: Vec<(usize, usize)> =
                (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
            // Fisher-Yates from the sweep RNG keeps the order reproducible.
            for idx in (1..visit.len()).rev() {
                let pick = rng.random_range(0..=idx);
                visit.swap(idx, pick);
            }
            for (i, j) in visit {
                let u = R::cast(rng.random::<f64>());
                if gibbs_entry(cm, i, j, gammas[(i, j)], ss, u) {
                    flips += 1;
                }
            }
        }
    }
    Ok(flips)
}
