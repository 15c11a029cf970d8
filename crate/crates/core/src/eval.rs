//! Retrieval evaluation: ground-truth labels, average precision, and the
//! leave-one-out protocol (mAP, precision at a Hamming radius, 11-point
//! interpolated precision–recall curve).
//!
//! Two items are *relevant* to each other when their label sets intersect.
//! Every item in the index is used once as a query against all the others,
//! ranked by Hamming distance with ties broken by ascending id. mAP and the
//! PR curve average over queries that have at least one relevant item;
//! precision at the radius averages over every query, counting queries that
//! retrieve nothing as precision 0.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::hash::HammingIndex;

/// Per-item label sets plus the label vocabulary.
///
/// Labels are interned: each distinct name gets a dense `u32` id, and every
/// item stores a sorted, deduplicated list of label ids.
#[derive(Clone, Debug, Default)]
pub struct LabelSet {
    vocab: Vec<String>,
    by_name: HashMap<String, u32>,
    items: BTreeMap<u64, Vec<u32>>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register an item with its label names. Errors on a duplicate id or
    /// an empty label list.
    pub fn add_item<S: AsRef<str>>(&mut self, id: u64, names: &[S]) -> Result<()> {
        if names.is_empty() {
            return Err(Error::format(format!("item {id} has an empty label set")));
        }
        if self.items.contains_key(&id) {
            return Err(Error::format(format!("duplicate item id {id} in labels")));
        }
        let mut lids: Vec<u32> = names.iter().map(|n| self.intern(n.as_ref())).collect();
        lids.sort_unstable();
        lids.dedup();
        self.items.insert(id, lids);
        Ok(())
    }

    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&lid) = self.by_name.get(name) {
            return lid;
        }
        let lid = self.vocab.len() as u32;
        self.vocab.push(name.to_string());
        self.by_name.insert(name.to_string(), lid);
        lid
    }

    /// Number of labeled items.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// All distinct label names, in first-seen order.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn label_name(&self, lid: u32) -> &str {
        &self.vocab[lid as usize]
    }

    /// Sorted label ids of an item.
    pub fn labels_of(&self, id: u64) -> Option<&[u32]> {
        self.items.get(&id).map(|v| v.as_slice())
    }

    /// Item ids in ascending order.
    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.items.keys().copied()
    }

    /// Whether two items share at least one label. Errors if either item is
    /// unlabeled.
    pub fn relevant(&self, a: u64, b: u64) -> Result<bool> {
        let la = self
            .labels_of(a)
            .ok_or_else(|| Error::usage(format!("item {a} has no labels")))?;
        let lb = self
            .labels_of(b)
            .ok_or_else(|| Error::usage(format!("item {b} has no labels")))?;
        Ok(sorted_intersects(la, lb))
    }

    /// Label-id rows for the given items in the given order (the shape the
    /// trainer's similarity derivation consumes). Errors on unlabeled items.
    pub fn rows_for(&self, ids: &[u64]) -> Result<Vec<Vec<u32>>> {
        ids.iter()
            .map(|&id| {
                self.labels_of(id)
                    .map(<[u32]>::to_vec)
                    .ok_or_else(|| Error::usage(format!("item {id} has no labels")))
            })
            .collect()
    }
}

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

/// Error-free sum: returns `(fl(a+b), err)` with `a + b = fl(a+b) + err`
/// exactly (Knuth's two-sum).
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let hi = a + b;
    let bv = hi - a;
    let lo = (a - (hi - bv)) + (b - bv);
    (hi, lo)
}

/// `a/b` split into `(hi, lo)` with `hi + lo ≈ a/b` to ~2⁻¹⁰⁶; the residual
/// `a - hi·b` is computed exactly by a fused multiply-add.
#[inline]
fn div_dd(a: f64, b: f64) -> (f64, f64) {
    let hi = a / b;
    let lo = (-hi).mul_add(b, a) / b;
    (hi, lo)
}

/// Average precision of one ranked result list.
///
/// `relevance` holds the per-position relevance flags of the full ranking;
/// `total_relevant` is the number of relevant items in the retrieval set.
/// `AP = (1/total_relevant) · Σ_{relevant positions p} precision@p`, and 0
/// when there is nothing relevant to find.
///
/// The sum is accumulated in compensated (double-double) arithmetic, so the
/// returned value is the correctly rounded AP: hand-checkable cases like
/// `[rel, non, rel] → 5/6` compare bit-exactly, and any faithful
/// reimplementation produces the identical result.
pub fn average_precision(relevance: &[bool], total_relevant: usize) -> f64 {
    if total_relevant == 0 {
        return 0.0;
    }
    let total = total_relevant as f64;
    let mut hits = 0usize;
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for (pos, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            // The product (pos+1)·total is exact (both are small integers).
            let (hi, lo) = div_dd(hits as f64, (pos + 1) as f64 * total);
            let (s, err) = two_sum(sum, hi);
            sum = s;
            comp += err + lo;
        }
    }
    sum + comp
}

/// Number of points (recall levels 0.0, 0.1, …, 1.0) in the interpolated
/// precision–recall curve.
pub const PR_CURVE_POINTS: usize = 11;

/// Aggregated retrieval quality over a leave-one-out pass.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean average precision over queries with ≥ 1 relevant item.
    pub map: f64,
    /// Radius used for `precision_at_radius`.
    pub radius: u32,
    /// Mean precision of the within-radius retrieval over all queries
    /// (empty retrievals count as 0).
    pub precision_at_radius: f64,
    /// 11-point interpolated precision–recall curve, averaged over queries
    /// with ≥ 1 relevant item: `(recall_level, mean precision)`.
    pub pr_curve: Vec<(f64, f64)>,
    /// Average precision per query, in index order (0 for queries with no
    /// relevant items).
    pub per_query_ap: Vec<f64>,
    /// Total queries evaluated (= index size).
    pub query_count: usize,
    /// Queries with at least one relevant item (the mAP denominator).
    pub scored_queries: usize,
}

impl EvalReport {
    /// Flat `key = value` text block (deterministic formatting).
    pub fn to_kv_block(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "map = {}", self.map);
        let _ = writeln!(s, "precision_at_radius = {}", self.precision_at_radius);
        let _ = writeln!(s, "radius = {}", self.radius);
        let _ = writeln!(s, "queries = {}", self.query_count);
        let _ = writeln!(s, "scored_queries = {}", self.scored_queries);
        s
    }

    /// The PR curve as `recall,precision` CSV rows.
    pub fn curve_csv(&self) -> String {
        let mut s = String::new();
        for &(r, p) in &self.pr_curve {
            let _ = writeln!(s, "{r},{p}");
        }
        s
    }
}

/// Leave-one-out evaluation of an index against ground-truth labels.
///
/// Every indexed item queries the remaining items, ranked by
/// `(hamming distance, id)`. Per-query work is independent; queries are
/// processed in index order so the aggregation is reproducible.
pub fn evaluate(index: &HammingIndex, labels: &LabelSet, radius: u32) -> Result<EvalReport> {
    let n = index.len();
    if n < 2 {
        return Err(Error::usage(format!(
            "evaluate: need at least 2 indexed items for leave-one-out, got {n}"
        )));
    }
    let ids = index.ids();
    let label_rows = labels.rows_for(ids)?; // errors on unlabeled items
    let codes = index.codes();

    let mut per_query_ap = Vec::with_capacity(n);
    let mut map_sum = 0.0;
    let mut scored = 0usize;
    let mut prec_sum = 0.0;
    let mut curve_sum = [0.0f64; PR_CURVE_POINTS];

    for q in 0..n {
        // Rank all other items by (distance, id).
        let mut ranked: Vec<(u32, u64, usize)> = Vec::with_capacity(n - 1);
        for i in 0..n {
            if i == q {
                continue;
            }
            ranked.push((codes[q].hamming(&codes[i])?, ids[i], i));
        }
        ranked.sort_unstable_by_key(|&(d, id, _)| (d, id));

        let relevance: Vec<bool> = ranked
            .iter()
            .map(|&(_, _, i)| sorted_intersects(&label_rows[q], &label_rows[i]))
            .collect();
        let total_relevant = relevance.iter().filter(|&&r| r).count();

        let ap = average_precision(&relevance, total_relevant);
        per_query_ap.push(ap);

        // Precision within the Hamming radius (empty retrieval -> 0).
        let retrieved = ranked.iter().take_while(|&&(d, _, _)| d <= radius).count();
        if retrieved > 0 {
            let rel_in = relevance[..retrieved].iter().filter(|&&r| r).count();
            prec_sum += rel_in as f64 / retrieved as f64;
        }

        if total_relevant > 0 {
            map_sum += ap;
            scored += 1;
            accumulate_interpolated_curve(&relevance, total_relevant, &mut curve_sum);
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

/// Add one query's 11-point interpolated precisions into `acc`:
/// `p_interp(level) = max{ precision@p : recall@p ≥ level }`.
///
/// The positions with `recall ≥ level` always form a suffix of the ranking
/// (recall is nondecreasing in rank), so a single backward walk with a
/// running max precision finalizes each level exactly when the walk crosses
/// the start of its suffix.
fn accumulate_interpolated_curve(
    relevance: &[bool],
    total_relevant: usize,
    acc: &mut [f64; PR_CURVE_POINTS],
) {
    debug_assert!(total_relevant > 0);
    let n = relevance.len();
    let mut hits_at = vec![0usize; n];
    let mut hits = 0usize;
    for (pos, &r) in relevance.iter().enumerate() {
        if r {
            hits += 1;
        }
        hits_at[pos] = hits;
    }
    let total = total_relevant as f64;
    let mut best = 0.0f64;
    let mut lev = PR_CURVE_POINTS as i32 - 1;
    for pos in (0..n).rev() {
        let prec = hits_at[pos] as f64 / (pos + 1) as f64;
        if prec > best {
            best = prec;
        }
        let recall = hits_at[pos] as f64 / total;
        let recall_prev = if pos == 0 { -1.0 } else { hits_at[pos - 1] as f64 / total };
        // Finalize every level whose suffix starts exactly at this position.
        while lev >= 0 {
            let lv = lev as f64 / 10.0;
            if lv <= recall && lv > recall_prev {
                acc[lev as usize] += best;
                lev -= 1;
            } else {
                break;
            }
        }
    }
    debug_assert!(lev < 0, "every recall level must be finalized");
}
