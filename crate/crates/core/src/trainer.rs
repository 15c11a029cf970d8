//! Training orchestration: alternating per-bit EP refinement and code
//! resampling, with initialization, convergence tracking, and final model
//! extraction.
//!
//! One training sweep has two phases. The EP phase treats the current code
//! column of every bit as classification labels and runs moment-matching
//! passes over all points, each bit independently (this is the parallel
//! part — bits are distributed over a worker pool). The Gibbs phase then
//! holds the posteriors fixed, converts them into per-entry pseudo-label
//! parameters, and resamples the code matrix entry by entry against the
//! pairwise similarity evidence. Training stops early once the codes have
//! stopped flipping for a few consecutive sweeps and the EP sites have
//! settled, and always after `max_sweeps`.
//!
//! Reproducibility contract: identical inputs and config (including the
//! seed) produce bit-identical models regardless of `workers`. Every
//! random choice flows from one ChaCha stream, per-bit EP work is
//! deterministic and collected in bit order, and the Gibbs phase is
//! single-threaded.

use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::codes::{
    derive_similarities, gibbs_sweep, similarity_loglik, CodeMatrix, ScanOrder, SimilaritySet,
};
use crate::data::FeatureDataset;
use crate::error::{Error, Result};
use crate::eval::LabelSet;
use crate::gp::{build_fitc_prior, extract_weights, BitPosterior, SweepStats};
use crate::hash::HashModel;
use crate::kernel::KernelConfig;
use crate::scalar::Real;

/// Site changes below this threshold count as a settled EP phase for the
/// early-stop rule.
pub const EP_CONVERGENCE_TOL: f64 = 1e-4;

/// Everything `train` needs besides the data.
#[derive(Clone, Debug)]
pub struct TrainConfig<R> {
    /// Code width `m`.
    pub num_bits: usize,
    /// Inducing set size `r` (clamped to `n` with a warning).
    pub num_inducing: usize,
    /// Representative set size `t` (clamped to `n` with a warning).
    pub num_representatives: usize,
    /// Similarity sharpness `σ_y`; `None` means the default `2/m`.
    pub sigma_y: Option<f64>,
    /// Kernel hyperparameters shared by all bits.
    pub kernel: KernelConfig<R>,
    /// Hard sweep budget.
    pub max_sweeps: usize,
    /// EP passes over all points per sweep and bit.
    pub ep_inner_passes: usize,
    /// EP site damping in `(0, 1]`.
    pub damping: R,
    /// Points per block between posterior refreshes in the EP phase.
    pub block_size: usize,
    /// Master seed; the only entropy source in training.
    pub seed: u64,
    /// Consecutive flip-free sweeps required before stopping early.
    pub code_freeze_patience: usize,
    /// Worker threads for the per-bit EP phase.
    pub workers: usize,
    /// Entry visiting order of the Gibbs phase.
    pub scan_order: ScanOrder,
    /// Experimental: discard EP sites at the start of every sweep instead
    /// of warm-starting from the previous sweep. Off by default.
    pub reset_sites_each_sweep: bool,
}

impl<R: Real> TrainConfig<R> {
    /// Config with the given shape parameters and the documented defaults:
    /// `sigma_y = 2/m`, 50 sweeps, 1 EP pass, damping 0.9, block size 1000,
    /// patience 3, 1 worker, fixed scan order.
    pub fn new(
        num_bits: usize,
        num_inducing: usize,
        num_representatives: usize,
        kernel: KernelConfig<R>,
        seed: u64,
    ) -> Self {
        TrainConfig {
            num_bits,
            num_inducing,
            num_representatives,
            sigma_y: None,
            kernel,
            max_sweeps: 50,
            ep_inner_passes: 1,
            damping: R::cast(0.9),
            block_size: 1000,
            seed,
            code_freeze_patience: 3,
            workers: 1,
            scan_order: ScanOrder::RowMajor,
            reset_sites_each_sweep: false,
        }
    }

    /// The σ_y that training will use: the explicit value, or `2/m`.
    pub fn resolved_sigma_y(&self) -> f64 {
        self.sigma_y.unwrap_or(2.0 / self.num_bits as f64)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.num_bits == 0 {
            return Err(Error::usage("TrainConfig: num_bits must be at least 1"));
        }
        if self.num_inducing == 0 {
            return Err(Error::usage("TrainConfig: num_inducing must be at least 1"));
        }
        if self.num_representatives == 0 {
            return Err(Error::usage("TrainConfig: num_representatives must be at least 1"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::usage("TrainConfig: max_sweeps must be at least 1"));
        }
        if self.ep_inner_passes == 0 {
            return Err(Error::usage("TrainConfig: ep_inner_passes must be at least 1"));
        }
        if self.block_size == 0 {
            return Err(Error::usage("TrainConfig: block_size must be at least 1"));
        }
        if self.workers == 0 {
            return Err(Error::usage("TrainConfig: workers must be at least 1"));
        }
        if !(self.damping > R::zero()) || self.damping > R::one() {
            return Err(Error::usage(format!(
                "TrainConfig: damping must be in (0, 1], got {}",
                self.damping
            )));
        }
        if let Some(s) = self.sigma_y {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::usage(format!(
                    "TrainConfig: sigma_y must be positive and finite, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Measurements from one executed sweep.
#[derive(Clone, Debug)]
pub struct SweepRecord {
    /// 1-based sweep number.
    pub sweep: usize,
    /// Pairwise similarity log-likelihood of the codes after the sweep.
    pub similarity_loglik: f64,
    /// Code entries that changed sign in the Gibbs phase.
    pub gibbs_flips: usize,
    /// Largest site-parameter change over all bits (last EP pass).
    pub max_ep_site_delta: f64,
    /// Points skipped by EP because their cavity was invalid (last pass,
    /// summed over bits).
    pub skipped_cavities: usize,
    /// Wall time of the sweep.
    pub wall_time: Duration,
}

/// Why the sweep loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Codes were flip-free long enough and EP sites had settled.
    Converged {
        /// Sweep after which training stopped.
        sweep: usize,
    },
    /// The sweep budget ran out.
    SweepBudgetExhausted,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::Converged { sweep } => write!(f, "converged after sweep {sweep}"),
            StopReason::SweepBudgetExhausted => write!(f, "sweep budget exhausted"),
        }
    }
}

/// Everything observable about a finished training run.
#[derive(Clone, Debug)]
pub struct TrainReport {
    /// One record per executed sweep, in order.
    pub sweeps: Vec<SweepRecord>,
    /// Why the loop ended.
    pub stop: StopReason,
    /// Refresh factorizations that needed a nonzero jitter rung, summed
    /// over bits (plus one if the prior build itself needed jitter).
    pub jitter_escalations: u64,
    /// The σ_y actually used.
    pub sigma_y: f64,
    /// Whether σ_y came from the `2/m` default rather than the config.
    pub sigma_y_defaulted: bool,
    /// Distinct code rows at the end of training.
    pub final_distinct_codes: usize,
    /// Total wall time of `train`.
    pub total_time: Duration,
}

impl TrainReport {
    /// Per-sweep records as CSV (header + one row per sweep).
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("sweep,similarity_loglik,gibbs_flips,max_ep_site_delta,skipped_cavities,millis\n");
        for r in &self.sweeps {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.sweep,
                r.similarity_loglik,
                r.gibbs_flips,
                r.max_ep_site_delta,
                r.skipped_cavities,
                r.wall_time.as_secs_f64() * 1e3,
            ));
        }
        out
    }
}

/// Sample `r` distinct row indices uniformly without replacement, sorted
/// ascending. `r` is clamped to `n` with a warning.
pub fn select_inducing(n: usize, r: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    sample_indices(n, r, rng, "inducing points")
}

/// Sample `t` distinct representative rows, independently of the inducing
/// set (overlap is allowed). Sorted ascending; clamped to `n`.
pub fn select_representatives(n: usize, t: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    sample_indices(n, t, rng, "representatives")
}

fn sample_indices(n: usize, want: usize, rng: &mut impl Rng, what: &str) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::usage(format!("cannot select {what} from an empty dataset")));
    }
    if want == 0 {
        return Err(Error::usage(format!("must select at least one of {what}")));
    }
    let take = if want > n {
        log::warn!("requested {want} {what} but only {n} rows exist; clamping to {n}");
        n
    } else {
        want
    };
    let mut picked = rand::seq::index::sample(rng, n, take).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Fresh code matrix with i.i.d. uniform ±1 entries and the representative
/// cache built from scratch.
pub fn init_codes(
    n: usize,
    m: usize,
    representatives: &[usize],
    rng: &mut impl Rng,
) -> Result<CodeMatrix> {
    if n == 0 || m == 0 {
        return Err(Error::usage("init_codes: need at least one point and one bit"));
    }
    let mut bits = Array2::<i8>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            bits[(i, j)] = if rng.random::<bool>() { 1 } else { -1 };
        }
    }
    CodeMatrix::new(bits, representatives)
}

/// Attach sweep/bit context to an EP failure so the abort diagnostic says
/// where inference broke.
fn annotate(e: Error, context: &str, bit: usize) -> Error {
    match e {
        Error::Numerical(msg) => Error::Numerical(format!("{context}, bit {bit}: {msg}")),
        other => other,
    }
}

/// Run `passes` EP passes on every bit against its current code column.
/// Bits are independent; with a pool they run in parallel and the results
/// are collected in bit order, so the outcome is identical either way.
/// Returns the last pass's stats merged over bits (max delta, summed skips).
fn ep_phase<R: Real>(
    pool: Option<&rayon::ThreadPool>,
    bits: &mut [BitPosterior<R>],
    columns: &[Vec<i8>],
    damping: R,
    block_size: usize,
    passes: usize,
    context: &str,
) -> Result<SweepStats> {
    let run_bit = |(j, bit): (usize, &mut BitPosterior<R>)| -> Result<SweepStats> {
        let col = &columns[j];
        let mut last = SweepStats::default();
        for _ in 0..passes {
            last = bit
                .ep_sweep_blocked(col, damping, block_size)
                .map_err(|e| annotate(e, context, j))?;
        }
        Ok(last)
    };
    let results: Vec<Result<SweepStats>> = match pool {
        Some(p) => p.install(|| bits.par_iter_mut().enumerate().map(run_bit).collect()),
        None => bits.iter_mut().enumerate().map(run_bit).collect(),
    };
    let mut merged = SweepStats::default();
    for r in results {
        merged.merge(r?);
    }
    Ok(merged)
}

/// Train a hash model on row features and per-row sorted label-id lists.
///
/// `row_labels[i]` labels `features` row `i`. See [`train_dataset`] for the
/// dataset/label-set entry point.
pub fn train<R: Real>(
    features: ArrayView2<R>,
    row_labels: &[Vec<u32>],
    cfg: &TrainConfig<R>,
) -> Result<(HashModel<R>, TrainReport)> {
    let started = Instant::now();
    cfg.validate()?;
    let n = features.nrows();
    if n < 2 {
        return Err(Error::usage(format!("train: need at least two points, got {n}")));
    }
    if row_labels.len() != n {
        return Err(Error::usage(format!(
            "train: {} label rows for {n} feature rows",
            row_labels.len()
        )));
    }
    let m = cfg.num_bits;
    let sigma_y = cfg.resolved_sigma_y();
    if cfg.sigma_y.is_none() {
        log::info!("sigma_y not set; using default 2/m = {sigma_y}");
    }

    // All randomness flows from the master stream in a fixed derivation
    // order; reordering these lines would change every seeded result.
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rng_inducing = ChaCha8Rng::seed_from_u64(master.random());
    let mut rng_reps = ChaCha8Rng::seed_from_u64(master.random());
    let mut rng_codes = ChaCha8Rng::seed_from_u64(master.random());
    let mut rng_gibbs = ChaCha8Rng::seed_from_u64(master.random());

    let inducing_idx = select_inducing(n, cfg.num_inducing, &mut rng_inducing)?;
    let reps = select_representatives(n, cfg.num_representatives, &mut rng_reps)?;
    log::info!(
        "training {m}-bit model on {n} points: {} inducing, {} representatives, sigma_y {sigma_y}",
        inducing_idx.len(),
        reps.len()
    );

    let ss: SimilaritySet<R> = derive_similarities(row_labels, &reps, R::cast(sigma_y))?;
    let mut codes = init_codes(n, m, &reps, &mut rng_codes)?;

    let x_inducing = features.select(Axis(0), &inducing_idx);
    let prior = Arc::new(build_fitc_prior(features, x_inducing.view(), &cfg.kernel)?);
    let prior_jitter_events = u64::from(prior.added_jitter() > R::zero());
    let mut bits: Vec<BitPosterior<R>> =
        (0..m).map(|_| BitPosterior::new(Arc::clone(&prior))).collect();

    let pool = if cfg.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?,
        )
    } else {
        None
    };

    let mut report = TrainReport {
        sweeps: Vec::new(),
        stop: StopReason::SweepBudgetExhausted,
        jitter_escalations: 0,
        sigma_y,
        sigma_y_defaulted: cfg.sigma_y.is_none(),
        final_distinct_codes: 0,
        total_time: Duration::ZERO,
    };
    let mut flip_free_streak = 0usize;
    let mut gammas = Array2::<R>::zeros((n, m));

    for sweep in 1..=cfg.max_sweeps {
        let sweep_started = Instant::now();
        if cfg.reset_sites_each_sweep {
            for bit in &mut bits {
                bit.reset_sites();
            }
        }

        // EP phase: each bit learns its current code column.
        let columns: Vec<Vec<i8>> = (0..m).map(|j| codes.column(j)).collect();
        let context = format!("sweep {sweep}");
        let stats = ep_phase(
            pool.as_ref(),
            &mut bits,
            &columns,
            cfg.damping,
            cfg.block_size,
            cfg.ep_inner_passes,
            &context,
        )?;

        // Gibbs phase: resample codes against posteriors and similarities.
        for (j, bit) in bits.iter().enumerate() {
            gammas.column_mut(j).assign(&bit.gamma_params());
        }
        let flips = gibbs_sweep(&mut codes, gammas.view(), &ss, &mut rng_gibbs, cfg.scan_order)?;

        let loglik = similarity_loglik(&codes, &ss).to_f64().unwrap_or(f64::NAN);
        log::info!(
            "sweep {sweep}: similarity loglik {loglik:.4}, {flips} flips, max site delta {:.3e}, {} skipped",
            stats.max_site_delta,
            stats.skipped
        );
        report.sweeps.push(SweepRecord {
            sweep,
            similarity_loglik: loglik,
            gibbs_flips: flips,
            max_ep_site_delta: stats.max_site_delta,
            skipped_cavities: stats.skipped,
            wall_time: sweep_started.elapsed(),
        });

        flip_free_streak = if flips == 0 { flip_free_streak + 1 } else { 0 };
        if flip_free_streak >= cfg.code_freeze_patience && stats.max_site_delta < EP_CONVERGENCE_TOL
        {
            report.stop = StopReason::Converged { sweep };
            log::info!("codes frozen and sites settled; stopping after sweep {sweep}");
            break;
        }
    }

    // Final refinement: extra EP passes on the frozen codes so the weights
    // fit the codes that training actually settled on.
    let columns: Vec<Vec<i8>> = (0..m).map(|j| codes.column(j)).collect();
    ep_phase(
        pool.as_ref(),
        &mut bits,
        &columns,
        cfg.damping,
        cfg.block_size,
        cfg.ep_inner_passes * 2,
        "final refinement",
    )?;

    report.jitter_escalations =
        prior_jitter_events + bits.iter().map(BitPosterior::jitter_escalations).sum::<u64>();
    report.final_distinct_codes = codes.distinct_rows();
    let weights = extract_weights(&bits)?;
    let model = HashModel::new(x_inducing, weights, cfg.kernel, cfg.seed)?;
    report.total_time = started.elapsed();
    log::info!(
        "training finished: {} ({} sweeps, {} distinct codes, {:.2}s)",
        report.stop,
        report.sweeps.len(),
        report.final_distinct_codes,
        report.total_time.as_secs_f64()
    );
    Ok((model, report))
}

/// [`train`] on a dataset plus a label set: looks up each item's labels by
/// id and trains on the dataset's feature matrix as-is (normalize first if
/// the pipeline calls for it).
pub fn train_dataset(
    dataset: &FeatureDataset,
    labels: &LabelSet,
    cfg: &TrainConfig<f64>,
) -> Result<(HashModel<f64>, TrainReport)> {
    let rows = labels.rows_for(dataset.ids())?;
    train(dataset.features(), &rows, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_clusters;
    use ndarray::Array2;

    fn two_blob_features(per_class: usize) -> (Array2<f64>, Vec<Vec<u32>>) {
        // Two tight clusters at x = ±2; labels 0 and 1.
        let n = 2 * per_class;
        let mut x = Array2::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let sign = if class == 0 { -1.0 } else { 1.0 };
            x[(i, 0)] = 2.0 * sign + 0.05 * (i as f64 / n as f64 - 0.5);
            x[(i, 1)] = 0.1 * ((i * 7 % 5) as f64 / 5.0 - 0.4);
            labels.push(vec![class as u32]);
        }
        (x, labels)
    }

    fn base_cfg(m: usize, r: usize, t: usize, seed: u64) -> TrainConfig<f64> {
        let kernel = KernelConfig::new(2.0, 1.0).unwrap();
        let mut cfg = TrainConfig::new(m, r, t, kernel, seed);
        cfg.max_sweeps = 25;
        cfg
    }

    #[test]
    fn selection_is_sorted_distinct_and_clamped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let picked = select_inducing(50, 10, &mut rng).unwrap();
        assert_eq!(picked.len(), 10);
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
        assert!(picked.iter().all(|&i| i < 50));

        let all = select_representatives(7, 7, &mut rng).unwrap();
        assert_eq!(all, (0..7).collect::<Vec<_>>());

        let clamped = select_inducing(5, 12, &mut rng).unwrap();
        assert_eq!(clamped, (0..5).collect::<Vec<_>>());

        assert!(select_inducing(0, 3, &mut rng).is_err());
        assert!(select_inducing(5, 0, &mut rng).is_err());
    }

    #[test]
    fn selection_is_deterministic_per_seed() {
        let a = select_inducing(100, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = select_inducing(100, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let c = select_inducing(100, 20, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn inducing_inclusion_rate_is_uniform() {
        // 100 seeds of 10-from-1000: per-index inclusion ≈ 0.01 on average.
        let n = 1000;
        let mut hits = vec![0u32; n];
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in select_inducing(n, 10, &mut rng).unwrap() {
                hits[i] += 1;
            }
        }
        let mean = hits.iter().map(|&h| f64::from(h)).sum::<f64>() / n as f64 / 100.0;
        assert!((mean - 0.01).abs() < 1e-12, "mean inclusion {mean}");
        // no index is wildly over-represented (binomial(100, 0.01) tail)
        assert!(hits.iter().all(|&h| h <= 10), "max hits {}", hits.iter().max().unwrap());
    }

    #[test]
    fn init_codes_is_uniform_and_seeded() {
        let reps = vec![0usize, 3];
        let a = init_codes(10_000, 16, &reps, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = init_codes(10_000, 16, &reps, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a.bits(), b.bits());
        assert!(a.bits().iter().all(|&v| v == 1 || v == -1));
        let mean =
            a.bits().iter().map(|&v| f64::from(v)).sum::<f64>() / (10_000.0 * 16.0);
        assert!(mean.abs() < 0.03, "mean entry {mean}");
        assert!(a.cache_is_coherent());
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let cfg = base_cfg(2, 4, 4, 0);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.resolved_sigma_y(), 1.0); // 2/m with m = 2

        let mut bad = cfg.clone();
        bad.damping = 0.0;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.sigma_y = Some(-1.0);
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.max_sweeps = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.workers = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn one_bit_model_separates_two_classes() {
        // m=1, t=n: the learned bit must split the two blobs (up to sign).
        let (x, labels) = two_blob_features(6);
        let mut cfg = base_cfg(1, 12, 12, 42);
        cfg.kernel = KernelConfig::new(2.0, 0.8).unwrap();
        let (model, report) = train(x.view(), &labels, &cfg).unwrap();
        assert_eq!(report.final_distinct_codes, 2);

        let codes = model.encode_batch(x.view()).unwrap();
        let first = codes[0].bit(0);
        for (i, code) in codes.iter().enumerate() {
            let expected = if i % 2 == 0 { first } else { !first };
            assert_eq!(code.bit(0), expected, "point {i} on the wrong side");
        }
        assert!(report.sweeps.len() <= cfg.max_sweeps);
        assert!(!report.sweeps.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_worker_independent() {
        let (x, labels) = two_blob_features(5);
        let mut cfg = base_cfg(2, 8, 10, 7);
        cfg.max_sweeps = 8;
        let (m1, r1) = train(x.view(), &labels, &cfg).unwrap();
        let (m2, _) = train(x.view(), &labels, &cfg).unwrap();
        assert_eq!(m1.weights(), m2.weights());
        assert_eq!(m1.inducing_inputs(), m2.inducing_inputs());

        let mut par = cfg.clone();
        par.workers = 4;
        let (m4, r4) = train(x.view(), &labels, &par).unwrap();
        assert_eq!(m1.weights(), m4.weights(), "workers changed the result");
        let flips1: Vec<usize> = r1.sweeps.iter().map(|s| s.gibbs_flips).collect();
        let flips4: Vec<usize> = r4.sweeps.iter().map(|s| s.gibbs_flips).collect();
        assert_eq!(flips1, flips4);

        let mut other_seed = cfg;
        other_seed.seed = 8;
        let (m8, _) = train(x.view(), &labels, &other_seed).unwrap();
        assert_ne!(m1.weights(), m8.weights(), "seed had no effect");
    }

    #[test]
    fn early_stop_freezes_codes_and_respects_budget() {
        let (x, labels) = two_blob_features(5);
        let mut cfg = base_cfg(1, 10, 10, 11);
        cfg.max_sweeps = 50;
        cfg.sigma_y = Some(4.0); // sharp likelihood locks codes quickly
        let (_, report) = train(x.view(), &labels, &cfg).unwrap();
        match report.stop {
            StopReason::Converged { sweep } => {
                assert_eq!(report.sweeps.len(), sweep);
                assert!(sweep < 50, "expected early convergence, used all {sweep} sweeps");
                let tail = &report.sweeps[sweep - cfg.code_freeze_patience..];
                assert!(tail.iter().all(|s| s.gibbs_flips == 0));
            }
            StopReason::SweepBudgetExhausted => {
                panic!("tiny separable instance should converge inside 50 sweeps")
            }
        }
        assert!(!report.sigma_y_defaulted);
        assert_eq!(report.sigma_y, 4.0);
    }

    #[test]
    fn sigma_y_defaults_to_two_over_m() {
        let (x, labels) = two_blob_features(4);
        let mut cfg = base_cfg(4, 6, 6, 2);
        cfg.max_sweeps = 3;
        let (_, report) = train(x.view(), &labels, &cfg).unwrap();
        assert!(report.sigma_y_defaulted);
        assert_eq!(report.sigma_y, 0.5);

        cfg.sigma_y = Some(0.5);
        let (_, explicit) = train(x.view(), &labels, &cfg).unwrap();
        assert!(!explicit.sigma_y_defaulted);
        assert_eq!(explicit.sigma_y, 0.5);
    }

    #[test]
    fn train_rejects_degenerate_inputs() {
        let (x, labels) = two_blob_features(4);
        let cfg = base_cfg(2, 4, 4, 0);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(train(empty.view(), &[], &cfg).is_err());
        assert!(train(x.view(), &labels[..3], &cfg).is_err(), "label/feature count mismatch");
        let one_row = x.slice(ndarray::s![..1, ..]);
        assert!(train(one_row, &labels[..1], &cfg).is_err());
    }

    #[test]
    fn train_dataset_wires_labels_by_id() {
        let (ds, labels) = synthetic_clusters(16, 2, 2, 0.05, 5).unwrap();
        let normalized = ds.normalize().unwrap();
        let mut cfg = base_cfg(1, 8, 16, 13);
        cfg.kernel = KernelConfig::new(2.0, 0.6).unwrap();
        let (model, report) = train_dataset(&normalized, &labels, &cfg).unwrap();
        assert_eq!(report.final_distinct_codes, 2);
        let codes = model.encode_batch(normalized.features()).unwrap();
        // class = id % 2 by construction of synthetic_clusters
        let first = codes[0].bit(0);
        for (i, code) in codes.iter().enumerate() {
            let expected = if i % 2 == 0 { first } else { !first };
            assert_eq!(code.bit(0), expected, "point {i}");
        }
    }

    #[test]
    fn report_csv_has_header_and_one_row_per_sweep() {
        let (x, labels) = two_blob_features(4);
        let mut cfg = base_cfg(2, 6, 6, 1);
        cfg.max_sweeps = 4;
        cfg.code_freeze_patience = 100; // force full budget
        let (_, report) = train(x.view(), &labels, &cfg).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "sweep,similarity_loglik,gibbs_flips,max_ep_site_delta,skipped_cavities,millis");
        assert_eq!(lines.len(), 1 + report.sweeps.len());
        assert_eq!(report.sweeps.len(), 4);
        assert_eq!(report.stop, StopReason::SweepBudgetExhausted);
        assert!(lines[1].starts_with("1,"));
    }

    #[test]
    fn randomized_scan_is_seeded_too() {
        let (x, labels) = two_blob_features(5);
        let mut cfg = base_cfg(2, 8, 10, 21);
        cfg.max_sweeps = 6;
        cfg.scan_order = ScanOrder::Randomized;
        let (m1, _) = train(x.view(), &labels, &cfg).unwrap();
        let (m2, _) = train(x.view(), &labels, &cfg).unwrap();
        assert_eq!(m1.weights(), m2.weights());
    }
}
