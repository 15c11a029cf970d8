//! Slow, transparent reference implementations used by the test suite.
//!
//! Everything here trades speed for obviousness and takes a different route
//! than the production code it checks: dense Gauss–Hermite quadrature
//! instead of EP, composite Simpson instead of closed-form probit moments,
//! full-joint enumeration instead of cached Gibbs conditionals, per-bit
//! comparison loops and selection sort instead of popcount ranking, and
//! exact rational arithmetic instead of compensated floating-point sums.
//! None of it is meant for production-sized inputs; sizes are capped where
//! exactness or tractability demands it.

use ndarray::{Array2, ArrayView2};

use crate::codes::SimilaritySet;
use crate::error::{Error, Result};
use crate::eval::{EvalReport, LabelSet, PR_CURVE_POINTS};
use crate::hash::BinaryCode;

/// Standard normal CDF, straight from the complementary error function.
fn ndtr_ref(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Φ(x)` by direct logarithm. Accurate enough for the benign argument
/// ranges oracles see (`x ≳ -35`); it makes no attempt at the deep tail.
fn ln_ndtr_ref(x: f64) -> f64 {
    ndtr_ref(x).ln()
}

/// Standard normal density.
fn npdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// ---------------------------------------------------------------------------
// Gauss–Hermite quadrature for dense GP classification posteriors
// ---------------------------------------------------------------------------

/// Nodes and weights of `order`-point Gauss–Hermite quadrature for
/// `∫ e^(-x²) f(x) dx` (physicists' convention), computed by Newton
/// iteration on the orthonormal Hermite recurrence with the usual
/// asymptotic initial guesses.
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(Error::usage("gauss_hermite: order must be at least 1"));
    }
    let n = order;
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    // Largest root downward; the lower half follows by symmetry.
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // Orthonormal Hermite value p1 and derivative pp at z.
            let mut p1 = std::f64::consts::PI.powf(-0.25);
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    Ok((nodes, weights))
}

/// Exact (to quadrature accuracy) posterior means and variances of a dense
/// GP classification model: `p(f) ∝ N(f; 0, K) · ∏ᵢ Φ(yᵢ fᵢ)`.
///
/// Evaluated by `order`-point product Gauss–Hermite quadrature over the
/// Cholesky-whitened coordinates, so the cost is `order^n`; `n` is capped
/// at 6 points.
pub fn gpc_posterior_quadrature(
    k: ArrayView2<f64>,
    y: &[i8],
    order: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = k.nrows();
    if n == 0 || k.ncols() != n {
        return Err(Error::usage(format!(
            "gpc_posterior_quadrature: covariance must be square and nonempty, got {n}x{}",
            k.ncols()
        )));
    }
    if n > 6 {
        return Err(Error::usage(format!(
            "gpc_posterior_quadrature: product quadrature over {n} points is intractable (max 6)"
        )));
    }
    if y.len() != n {
        return Err(Error::usage(format!(
            "gpc_posterior_quadrature: {} labels for {n} points",
            y.len()
        )));
    }
    if let Some(&bad) = y.iter().find(|&&v| v != 1 && v != -1) {
        return Err(Error::usage(format!("gpc_posterior_quadrature: labels must be ±1, got {bad}")));
    }
    let l = dense_cholesky(k)?;
    let (nodes, weights) = gauss_hermite(order)?;

    // Recurse over whitened coordinates: f = L·z with z standard normal,
    // f_i depending only on z_0..=z_i. The 1/√π normalizers cancel in the
    // moment ratios and are dropped.
    struct Acc {
        z: Vec<f64>,
        f: Vec<f64>,
        norm: f64,
        first: Vec<f64>,
        second: Vec<f64>,
    }
    fn descend(
        depth: usize,
        wprod: f64,
        acc: &mut Acc,
        l: &Array2<f64>,
        y: &[i8],
        nodes: &[f64],
        weights: &[f64],
    ) {
        let n = y.len();
        if depth == n {
            acc.norm += wprod;
            for i in 0..n {
                acc.first[i] += wprod * acc.f[i];
                acc.second[i] += wprod * acc.f[i] * acc.f[i];
            }
            return;
        }
        for (kx, &x) in nodes.iter().enumerate() {
            let zi = std::f64::consts::SQRT_2 * x;
            acc.z[depth] = zi;
            let mut fi = 0.0;
            for j in 0..=depth {
                fi += l[(depth, j)] * acc.z[j];
            }
            acc.f[depth] = fi;
            let phi = ndtr_ref(f64::from(y[depth]) * fi);
            descend(depth + 1, wprod * weights[kx] * phi, acc, l, y, nodes, weights);
        }
    }

    let mut acc = Acc {
        z: vec![0.0; n],
        f: vec![0.0; n],
        norm: 0.0,
        first: vec![0.0; n],
        second: vec![0.0; n],
    };
    descend(0, 1.0, &mut acc, &l, y, &nodes, &weights);
    if !(acc.norm > 0.0) {
        return Err(Error::Numerical(
            "gpc_posterior_quadrature: zero normalizer; labels too improbable for quadrature".into(),
        ));
    }
    let means: Vec<f64> = acc.first.iter().map(|&v| v / acc.norm).collect();
    let vars: Vec<f64> =
        acc.second.iter().zip(&means).map(|(&s, &m)| s / acc.norm - m * m).collect();
    Ok((means, vars))
}

/// Plain dense Cholesky (no jitter ladder): `K = L·Lᵀ`, `L` lower.
fn dense_cholesky(k: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = k.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = k[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::Numerical(format!(
                        "dense_cholesky: matrix not positive definite at pivot {i}"
                    )));
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

// ---------------------------------------------------------------------------
// Simpson quadrature for probit tilted moments
// ---------------------------------------------------------------------------

/// Moments of the tilted density `∝ N(x; μ, σ²) · Φ(y·x)` by composite
/// Simpson quadrature with `intervals` panels over `μ ± 14σ`, returned as
/// `(ln Z, mean, variance)`.
///
/// Integration runs in the standardized coordinate `u = (x-μ)/σ` and maps
/// the moments back, which keeps the arithmetic well conditioned for large
/// `|μ|`.
pub fn probit_moments_quadrature(y: i8, mean: f64, var: f64, intervals: usize) -> (f64, f64, f64) {
    assert!(y == 1 || y == -1, "label must be ±1, got {y}");
    assert!(var > 0.0 && var.is_finite(), "variance must be positive, got {var}");
    assert!(mean.is_finite(), "mean must be finite, got {mean}");
    let m = intervals.max(8).next_multiple_of(2);
    let sd = var.sqrt();
    let (lo, hi) = (-14.0f64, 14.0f64);
    let h = (hi - lo) / m as f64;

    let g = |u: f64| npdf(u) * ndtr_ref(f64::from(y) * (mean + sd * u));
    let (mut z, mut m1, mut m2) = (0.0f64, 0.0f64, 0.0f64);
    for idx in 0..=m {
        let u = lo + h * idx as f64;
        let w = if idx == 0 || idx == m {
            1.0
        } else if idx % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let gu = w * g(u);
        z += gu;
        m1 += gu * u;
        m2 += gu * u * u;
    }
    // The h/3 Simpson factor cancels in the moment ratios but not in Z.
    let log_norm = (z * h / 3.0).ln();
    let eu = m1 / z;
    let var_u = m2 / z - eu * eu;
    (log_norm, mean + sd * eu, var * var_u)
}

// ---------------------------------------------------------------------------
// Exhaustive enumeration of the code-matrix distribution
// ---------------------------------------------------------------------------

/// Log joint density (up to a constant) of one full code matrix under the
/// pseudo-label field `γ` and the pairwise similarity evidence:
/// `Σ_ij ln Φ(γ_ij·y_ij) + Σ_pairs ln Φ(σ_y·s_il·V_il)`, with every
/// inner product recomputed from scratch.
pub fn code_log_joint(
    bits: ArrayView2<i8>,
    gammas: ArrayView2<f64>,
    ss: &SimilaritySet<f64>,
) -> f64 {
    let n = bits.nrows();
    let m = bits.ncols();
    debug_assert_eq!(gammas.dim(), (n, m));
    debug_assert_eq!(ss.num_points(), n);
    let mut lp = 0.0;
    for i in 0..n {
        for j in 0..m {
            lp += ln_ndtr_ref(gammas[(i, j)] * f64::from(bits[(i, j)]));
        }
    }
    let sigma = ss.sigma_y();
    for (k, &l) in ss.representatives().iter().enumerate() {
        for i in 0..n {
            if !ss.pair_included(i, k) {
                continue;
            }
            let mut v = 0i32;
            for j in 0..m {
                v += i32::from(bits[(i, j)]) * i32::from(bits[(l, j)]);
            }
            lp += ln_ndtr_ref(sigma * f64::from(ss.label(i, k)) * f64::from(v));
        }
    }
    lp
}

/// Decode enumeration index `mask` into an `n×m` ±1 matrix: bit `i·m + j`
/// set means entry `(i, j)` is `+1`.
pub fn mask_to_codes(mask: u64, n: usize, m: usize) -> Array2<i8> {
    let mut bits = Array2::<i8>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            bits[(i, j)] = if mask >> (i * m + j) & 1 == 1 { 1 } else { -1 };
        }
    }
    bits
}

/// The full normalized distribution over all `2^(n·m)` code matrices,
/// indexed by the [`mask_to_codes`] convention. Capped at 20 total bits.
pub fn enumerate_code_distribution(
    gammas: ArrayView2<f64>,
    ss: &SimilaritySet<f64>,
) -> Result<Vec<f64>> {
    let n = gammas.nrows();
    let m = gammas.ncols();
    if ss.num_points() != n {
        return Err(Error::usage(format!(
            "enumerate_code_distribution: similarity set covers {} rows, gammas have {n}",
            ss.num_points()
        )));
    }
    let total_bits = n * m;
    if total_bits == 0 || total_bits > 20 {
        return Err(Error::usage(format!(
            "enumerate_code_distribution: {total_bits} code bits outside the tractable range 1..=20"
        )));
    }
    let states = 1usize << total_bits;
    let mut logps = Vec::with_capacity(states);
    let mut max_lp = f64::NEG_INFINITY;
    for mask in 0..states as u64 {
        let lp = code_log_joint(mask_to_codes(mask, n, m).view(), gammas, ss);
        if lp > max_lp {
            max_lp = lp;
        }
        logps.push(lp);
    }
    let mut probs: Vec<f64> = logps.iter().map(|&lp| (lp - max_lp).exp()).collect();
    let z: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= z;
    }
    Ok(probs)
}

/// `p(y_ij = +1 | everything else)` from two full-joint evaluations.
pub fn enumerated_conditional(
    bits: ArrayView2<i8>,
    i: usize,
    j: usize,
    gammas: ArrayView2<f64>,
    ss: &SimilaritySet<f64>,
) -> f64 {
    let mut plus = bits.to_owned();
    plus[(i, j)] = 1;
    let mut minus = bits.to_owned();
    minus[(i, j)] = -1;
    let lp = code_log_joint(plus.view(), gammas, ss);
    let lm = code_log_joint(minus.view(), gammas, ss);
    1.0 / (1.0 + (lm - lp).exp())
}

/// Marginal `p(y_ij = +1)` for every entry, summed out of the enumerated
/// joint distribution.
pub fn enumerated_bit_marginals(
    gammas: ArrayView2<f64>,
    ss: &SimilaritySet<f64>,
) -> Result<Array2<f64>> {
    let n = gammas.nrows();
    let m = gammas.ncols();
    let probs = enumerate_code_distribution(gammas, ss)?;
    let mut marg = Array2::<f64>::zeros((n, m));
    for (mask, &p) in probs.iter().enumerate() {
        for i in 0..n {
            for j in 0..m {
                if mask >> (i * m + j) & 1 == 1 {
                    marg[(i, j)] += p;
                }
            }
        }
    }
    Ok(marg)
}

/// Total variation distance `½·Σ|p−q|` between two distributions over the
/// same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must share a support");
    0.5 * p.iter().zip(q).map(|(&a, &b)| (a - b).abs()).sum::<f64>()
}

// ---------------------------------------------------------------------------
// Brute-force Hamming retrieval
// ---------------------------------------------------------------------------

/// Hamming distance by comparing every bit position individually.
///
/// Panics if the widths differ (this is test support, not an API).
pub fn naive_hamming_distance(a: &BinaryCode, b: &BinaryCode) -> u32 {
    assert_eq!(a.len(), b.len(), "codes must have equal widths");
    let mut d = 0;
    for j in 0..a.len() {
        if a.bit(j) != b.bit(j) {
            d += 1;
        }
    }
    d
}

/// Top-`k` items by `(distance, id)` via repeated minimum extraction
/// (selection sort), comparing tuples explicitly.
pub fn naive_ranking(
    items: &[(u64, BinaryCode)],
    query: &BinaryCode,
    k: usize,
) -> Vec<(u32, u64)> {
    let mut pool: Vec<(u32, u64)> =
        items.iter().map(|(id, code)| (naive_hamming_distance(query, code), *id)).collect();
    let mut out = Vec::with_capacity(k.min(pool.len()));
    while out.len() < k && !pool.is_empty() {
        let mut best = 0;
        for idx in 1..pool.len() {
            let (d, id) = pool[idx];
            let (bd, bid) = pool[best];
            if d < bd || (d == bd && id < bid) {
                best = idx;
            }
        }
        out.push(pool.swap_remove(best));
    }
    out
}

/// Ids within the radius, ascending.
pub fn naive_within_radius(
    items: &[(u64, BinaryCode)],
    query: &BinaryCode,
    radius: u32,
) -> Vec<u64> {
    let mut ids: Vec<u64> = items
        .iter()
        .filter(|(_, code)| naive_hamming_distance(query, code) <= radius)
        .map(|(id, _)| *id)
        .collect();
    ids.sort_unstable();
    ids
}

// ---------------------------------------------------------------------------
// Quadratic-loop evaluation reference
// ---------------------------------------------------------------------------

/// Average precision by exact rational arithmetic: the sum
/// `Σ hits/(pos·total)` is put over the common denominator
/// `lcm(positions)·total` in `u128` and rounded once at the end. For
/// rankings of at most 30 items both numerator and denominator stay below
/// `2^53`, so the single `f64` division is the correctly rounded AP.
pub fn rational_average_precision(relevance: &[bool], total_relevant: usize) -> f64 {
    assert!(relevance.len() <= 30, "rational AP is exact only up to 30 positions");
    if total_relevant == 0 {
        return 0.0;
    }
    let mut l: u128 = 1;
    for (pos, &rel) in relevance.iter().enumerate() {
        if rel {
            l = lcm(l, pos as u128 + 1);
        }
    }
    let den = l * total_relevant as u128;
    let mut num: u128 = 0;
    let mut hits: u128 = 0;
    for (pos, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            num += hits * (l / (pos as u128 + 1));
        }
    }
    debug_assert!(num < 1 << 53 && den < 1 << 53, "rational AP exceeded exact f64 range");
    num as f64 / den as f64
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u128, b: u128) -> u128 {
    a / gcd(a, b) * b
}

/// Leave-one-out retrieval evaluation with every shortcut removed:
/// per-bit distances, insertion sort, rational average precision, and a
/// direct max-scan per recall level. Produces a report that matches the
/// production evaluation bit for bit on instances of at most 30 items.
pub fn evaluate_reference(
    ids: &[u64],
    codes: &[BinaryCode],
    labels: &LabelSet,
    radius: u32,
) -> Result<EvalReport> {
    let n = ids.len();
    if n != codes.len() {
        return Err(Error::usage(format!("evaluate_reference: {n} ids but {} codes", codes.len())));
    }
    if n < 2 {
        return Err(Error::usage(format!(
            "evaluate_reference: need at least 2 items for leave-one-out, got {n}"
        )));
    }
    if n > 30 {
        return Err(Error::usage(format!(
            "evaluate_reference: capped at 30 items for exact rational arithmetic, got {n}"
        )));
    }

    let mut per_query_ap = Vec::with_capacity(n);
    let mut map_sum = 0.0;
    let mut scored = 0usize;
    let mut prec_sum = 0.0;
    let mut curve_sum = [0.0f64; PR_CURVE_POINTS];

    for q in 0..n {
        // Insertion sort into (distance, id) order.
        let mut ranked: Vec<(u32, u64)> = Vec::with_capacity(n - 1);
        for i in 0..n {
            if i == q {
                continue;
            }
            let entry = (naive_hamming_distance(&codes[q], &codes[i]), ids[i]);
            let at = ranked.iter().position(|&e| entry < e).unwrap_or(ranked.len());
            ranked.insert(at, entry);
        }

        let mut relevance = Vec::with_capacity(n - 1);
        for &(_, id) in &ranked {
            relevance.push(labels.relevant(ids[q], id)?);
        }
        let total_relevant = relevance.iter().filter(|&&r| r).count();

        let ap = rational_average_precision(&relevance, total_relevant);
        per_query_ap.push(ap);

        let mut retrieved = 0;
        while retrieved < ranked.len() && ranked[retrieved].0 <= radius {
            retrieved += 1;
        }
        if retrieved > 0 {
            let rel_in = relevance[..retrieved].iter().filter(|&&r| r).count();
            prec_sum += rel_in as f64 / retrieved as f64;
        }

        if total_relevant > 0 {
            map_sum += ap;
            scored += 1;
            // Interpolated precision, straight from its definition.
            let total = total_relevant as f64;
            for (lev, slot) in curve_sum.iter_mut().enumerate() {
                let level = lev as f64 / 10.0;
                let mut best = 0.0f64;
                let mut hits = 0usize;
                for (pos, &rel) in relevance.iter().enumerate() {
                    if rel {
                        hits += 1;
                    }
                    let recall = hits as f64 / total;
                    let precision = hits as f64 / (pos + 1) as f64;
                    if recall >= level && precision > best {
                        best = precision;
                    }
                }
                *slot += best;
            }
        }
    }

    let map = if scored > 0 { map_sum / scored as f64 } else { 0.0 };
    let pr_curve = (0..PR_CURVE_POINTS)
        .map(|k| {
            let level = k as f64 / 10.0;
            let p = if scored > 0 { curve_sum[k] / scored as f64 } else { 0.0 };
            (level, p)
        })
        .collect();
    Ok(EvalReport {
        map,
        radius,
        precision_at_radius: prec_sum / n as f64,
        pr_curve,
        per_query_ap,
        query_count: n,
        scored_queries: scored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{derive_similarities, gibbs_conditional, CodeMatrix};
    use crate::eval::{average_precision, evaluate};
    use crate::gp::{probit_moments, Cavity};
    use crate::hash::HammingIndex;
    use ndarray::arr2;

    #[test]
    fn gauss_hermite_integrates_low_moments() {
        for order in [5, 12, 20, 32] {
            let (nodes, weights) = gauss_hermite(order).unwrap();
            // ∫e^{-x²}dx = √π; standardized second and fourth moments.
            let total: f64 = weights.iter().sum();
            assert!((total - std::f64::consts::PI.sqrt()).abs() < 1e-12, "order {order}");
            let inv = std::f64::consts::PI.sqrt().recip();
            let m2: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| {
                    let z = std::f64::consts::SQRT_2 * x;
                    w * z * z
                })
                .sum::<f64>()
                * inv;
            assert!((m2 - 1.0).abs() < 1e-12, "order {order}: E[z²] = {m2}");
            if order >= 3 {
                let m4: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&x, &w)| {
                        let z = std::f64::consts::SQRT_2 * x;
                        w * z.powi(4)
                    })
                    .sum::<f64>()
                    * inv;
                assert!((m4 - 3.0).abs() < 1e-10, "order {order}: E[z⁴] = {m4}");
            }
            // symmetry of the rule
            for i in 0..order {
                assert!((nodes[i] + nodes[order - 1 - i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_point_posterior_matches_closed_form() {
        // K = [[1]], y = +1: Z = 1/2, E[f] = φ(0)/√2 / Z = 1/√π.
        let k = arr2(&[[1.0]]);
        let (means, vars) = gpc_posterior_quadrature(k.view(), &[1], 40).unwrap();
        let want_mean = std::f64::consts::PI.sqrt().recip();
        assert!((means[0] - want_mean).abs() < 1e-10, "mean {} vs {want_mean}", means[0]);
        // matches the closed-form tilted moments at cavity N(0, 1)
        let mm = probit_moments(1, &Cavity { mean: 0.0, var: 1.0 });
        assert!((means[0] - mm.mean).abs() < 1e-10);
        assert!((vars[0] - mm.var).abs() < 1e-10);
    }

    #[test]
    fn flipping_all_labels_negates_means() {
        let k = arr2(&[[1.0, 0.4], [0.4, 0.8]]);
        let (mp, vp) = gpc_posterior_quadrature(k.view(), &[1, 1], 30).unwrap();
        let (mn, vn) = gpc_posterior_quadrature(k.view(), &[-1, -1], 30).unwrap();
        for i in 0..2 {
            assert!((mp[i] + mn[i]).abs() < 1e-10);
            assert!((vp[i] - vn[i]).abs() < 1e-10);
            assert!(mp[i] > 0.0);
            assert!(vp[i] > 0.0 && vp[i] < k[(i, i)] + 1e-12, "posterior must contract");
        }
    }

    #[test]
    fn quadrature_rejects_bad_inputs() {
        let k = arr2(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!(gpc_posterior_quadrature(k.view(), &[1], 20).is_err());
        assert!(gpc_posterior_quadrature(k.view(), &[1, 2], 20).is_err());
        let not_pd = arr2(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(gpc_posterior_quadrature(not_pd.view(), &[1, 1], 20).is_err());
    }

    #[test]
    fn simpson_moments_match_closed_form() {
        for &(y, mu, var) in &[
            (1i8, 0.0, 1.0),
            (-1, 0.5, 2.0),
            (1, -3.0, 0.25),
            (-1, 4.0, 9.0),
            (1, 7.5, 0.01),
            (-1, -8.0, 100.0),
        ] {
            let exact = probit_moments(y, &Cavity { mean: mu, var });
            // relative agreement with an absolute floor for near-zero values
            let close = |a: f64, b: f64| (a - b).abs() <= (1e-8 * b.abs()).max(1e-12);
            let (ln_z, m, v) = probit_moments_quadrature(y, mu, var, 16384);
            assert!(close(ln_z, exact.log_norm), "(y={y}, μ={mu}, σ²={var}): lnZ {ln_z} vs {}", exact.log_norm);
            assert!(close(m, exact.mean), "(y={y}, μ={mu}, σ²={var}): mean {m} vs {}", exact.mean);
            assert!(close(v, exact.var), "(y={y}, μ={mu}, σ²={var}): var {v} vs {}", exact.var);
        }
    }

    fn tiny_similarity() -> SimilaritySet<f64> {
        // 3 rows, classes [0, 0, 1], representatives rows 0 and 2.
        derive_similarities(&[vec![0], vec![0], vec![1]], &[0, 2], 0.8).unwrap()
    }

    #[test]
    fn enumeration_is_a_distribution_with_matching_marginals() {
        let ss = tiny_similarity();
        let gammas = arr2(&[[0.3, -0.2], [0.0, 0.5], [-0.4, 0.1]]);
        let probs = enumerate_code_distribution(gammas.view(), &ss).unwrap();
        assert_eq!(probs.len(), 64);
        let z: f64 = probs.iter().sum();
        assert!((z - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|&p| p >= 0.0));

        let marg = enumerated_bit_marginals(gammas.view(), &ss).unwrap();
        // hand-check one marginal against a direct sum
        let mut direct = 0.0;
        for (mask, &p) in probs.iter().enumerate() {
            if mask >> 3 & 1 == 1 {
                direct += p; // entry (1, 1) with m = 2
            }
        }
        assert!((marg[(1, 1)] - direct).abs() < 1e-15);
        // positive gamma pulls the marginal above 1/2 on average
        assert!(marg[(1, 1)] > 0.5);
    }

    #[test]
    fn enumerated_conditional_agrees_with_cached_sampler() {
        let ss = tiny_similarity();
        let gammas = arr2(&[[0.3, -0.2], [0.0, 0.5], [-0.4, 0.1]]);
        let bits = arr2(&[[1i8, -1], [-1, -1], [1, 1]]);
        let cm = CodeMatrix::new(bits.clone(), &[0, 2]).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let fast = gibbs_conditional(&cm, i, j, gammas[(i, j)], &ss);
                let slow = enumerated_conditional(bits.view(), i, j, gammas.view(), &ss);
                assert!(
                    (fast - slow).abs() < 1e-12,
                    "conditional mismatch at ({i}, {j}): {fast} vs {slow}"
                );
            }
        }
    }

    fn code(signs: &[i8]) -> BinaryCode {
        BinaryCode::from_signs(signs).unwrap()
    }

    #[test]
    fn naive_retrieval_hand_case() {
        let items = vec![
            (10u64, code(&[1, 1, 1, -1])),
            (3, code(&[1, 1, -1, -1])),
            (7, code(&[-1, -1, 1, 1])),
        ];
        let q = code(&[1, 1, 1, 1]);
        // distances: 10 -> 1, 3 -> 2, 7 -> 2; tie between 3 and 7 breaks by id
        assert_eq!(naive_ranking(&items, &q, 10), vec![(1, 10), (2, 3), (2, 7)]);
        assert_eq!(naive_ranking(&items, &q, 2), vec![(1, 10), (2, 3)]);
        assert_eq!(naive_ranking(&items, &q, 1), vec![(1, 10)]);
        assert_eq!(naive_within_radius(&items, &q, 2), vec![3, 7, 10]);
        assert_eq!(naive_within_radius(&items, &q, 1), vec![10]);
    }

    #[test]
    fn rational_ap_matches_compensated_ap() {
        let cases: Vec<Vec<bool>> = vec![
            vec![true, false, true],
            vec![false, true, true, false, true],
            vec![true; 7],
            vec![false; 5],
            vec![false, false, true],
            vec![true, false, false, true, false, true, true, false, true, false, true],
        ];
        for rel in cases {
            let total = rel.iter().filter(|&&r| r).count();
            let a = rational_average_precision(&rel, total);
            let b = average_precision(&rel, total);
            assert_eq!(a.to_bits(), b.to_bits(), "case {rel:?}: {a} vs {b}");
        }
        assert_eq!(rational_average_precision(&[true, false, true], 2), 5.0 / 6.0);
    }

    #[test]
    fn reference_evaluation_matches_production_exactly() {
        let mut labels = LabelSet::new();
        labels.add_item(1, &["a"]).unwrap();
        labels.add_item(2, &["a", "b"]).unwrap();
        labels.add_item(3, &["b"]).unwrap();
        labels.add_item(4, &["c"]).unwrap();
        labels.add_item(5, &["a"]).unwrap();
        let ids = vec![1u64, 2, 3, 4, 5];
        let codes = vec![
            code(&[1, 1, 1, 1]),
            code(&[1, 1, 1, -1]),
            code(&[1, -1, -1, -1]),
            code(&[-1, -1, -1, -1]),
            code(&[1, 1, -1, -1]),
        ];
        let index = HammingIndex::new(ids.clone(), codes.clone()).unwrap();
        let fast = evaluate(&index, &labels, 2).unwrap();
        let slow = evaluate_reference(&ids, &codes, &labels, 2).unwrap();
        assert_eq!(fast, slow);
    }

    #[test]
    fn reference_evaluation_enforces_caps() {
        let labels = {
            let mut l = LabelSet::new();
            for id in 0..40u64 {
                l.add_item(id, &["x"]).unwrap();
            }
            l
        };
        let ids: Vec<u64> = (0..40).collect();
        let codes: Vec<BinaryCode> = (0..40).map(|_| code(&[1, -1])).collect();
        assert!(evaluate_reference(&ids, &codes, &labels, 1).is_err(), "over the 30-item cap");
        assert!(evaluate_reference(&ids[..1], &codes[..1], &labels, 1).is_err());
    }
}
