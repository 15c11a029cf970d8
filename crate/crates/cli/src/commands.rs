//! The five pipeline commands.
//!
//! Conventions shared by all of them:
//!
//! * stdout carries only the command's data output (CSV rows or a flat
//!   `key = value` block); progress and diagnostics go to stderr via `log`.
//! * every value flag is optional on the command line and may instead come
//!   from the `--config` file under the same name; a flag beats the file,
//!   the file beats the built-in default.
//! * given the same flags and input files, output is byte-for-byte
//!   reproducible.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use gph_core::data::{
    load_features, load_labels, save_features, save_labels, sniff_format, synthetic_clusters,
    FeatureDataset, FeatureFormat,
};
use gph_core::eval::evaluate;
use gph_core::hash::{BinaryCode, HammingIndex};
use gph_core::trainer::{train_dataset, TrainConfig};
use gph_core::{Error, HashModel, KernelConfig, Result};

use crate::config::{resolve, resolve_opt, resolve_required, FileConfig};

/// Names the environment variable consulted for the default worker count.
pub const WORKERS_ENV: &str = "GPH_WORKERS";

fn load_feature_file(path: &Path) -> Result<FeatureDataset> {
    let format = sniff_format(path)?;
    load_features(path, format)
}

/// `std::fs::write` with the path attached to any error.
fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::from(e).with_path(path.display().to_string()))
}

/// Worker-count default from `GPH_WORKERS`, if set and valid.
fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::usage(format!("{WORKERS_ENV}: {e}"))),
        Ok(raw) => match raw.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(Some(v)),
            _ => Err(Error::usage(format!(
                "{WORKERS_ENV} must be a positive integer, got `{raw}`"
            ))),
        },
    }
}

// ---------------------------------------------------------------------------
// gen-data

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Output directory (created if missing); writes features.csv and
    /// labels.csv into it
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Number of points [default: 200]
    #[arg(long, value_name = "N")]
    pub n: Option<usize>,
    /// Number of clusters, at least 2 [default: 4]
    #[arg(long, value_name = "K")]
    pub classes: Option<usize>,
    /// Feature dimension [default: 2]
    #[arg(long, value_name = "D")]
    pub dim: Option<usize>,
    /// Cluster standard deviation [default: 0.1]
    #[arg(long, value_name = "S")]
    pub spread: Option<f64>,
    /// RNG seed [default: 0]
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Flat `key = value` config file supplying flag defaults
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

pub fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let out = resolve_required(args.out, file.take("out")?, "out")?;
    let n = resolve(args.n, file.take("n")?, 200);
    let classes = resolve(args.classes, file.take("classes")?, 4);
    let dim = resolve(args.dim, file.take("dim")?, 2);
    let spread = resolve(args.spread, file.take("spread")?, 0.1);
    let seed = resolve(args.seed, file.take("seed")?, 0);
    file.finish()?;

    let (dataset, labels) = synthetic_clusters(n, classes, dim, spread, seed)?;
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::from(e).with_path(out.display().to_string()))?;
    let features_path = out.join("features.csv");
    let labels_path = out.join("labels.csv");
    save_features(&dataset, &features_path, FeatureFormat::Csv)?;
    save_labels(&labels, &labels_path)?;
    println!(
        "wrote {n} points ({classes} classes, dim {dim}, spread {spread}, seed {seed}) to {} and {}",
        features_path.display(),
        labels_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training features: CSV `id,f1,...,fd` or the packed binary format
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,
    /// Ground-truth labels: CSV `id,label[;label]*`
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Where to write the trained model
    #[arg(long, value_name = "FILE")]
    pub out_model: Option<PathBuf>,
    /// Code width in bits [default: 16]
    #[arg(long, value_name = "M")]
    pub bits: Option<usize>,
    /// Inducing set size, clamped to the dataset size [default: 200]
    #[arg(long, value_name = "R")]
    pub inducing: Option<usize>,
    /// Representative subset size for the pairwise constraints, clamped to
    /// the dataset size [default: 500]
    #[arg(long, value_name = "T")]
    pub representatives: Option<usize>,
    /// Similarity sharpness [default: 2/bits, echoed in the log]
    #[arg(long, value_name = "SY")]
    pub sigma_y: Option<f64>,
    /// Kernel signal standard deviation [default: 2.0]
    #[arg(long, value_name = "SF")]
    pub sigma_f: Option<f64>,
    /// Kernel length scale [default: 0.5]
    #[arg(long, value_name = "L")]
    pub length_scale: Option<f64>,
    /// Hard budget of training sweeps [default: 50]
    #[arg(long, value_name = "N")]
    pub max_sweeps: Option<usize>,
    /// Site damping in (0, 1] for the moment-matching phase [default: 0.9]
    #[arg(long, value_name = "D")]
    pub damping: Option<f64>,
    /// Points per block between posterior refreshes [default: 1000]
    #[arg(long, value_name = "B")]
    pub block_size: Option<usize>,
    /// Master RNG seed; the only entropy source in training [default: 0]
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Worker threads for the per-bit phase; results do not depend on it
    /// [default: GPH_WORKERS if set, else 1]
    #[arg(long, value_name = "W")]
    pub workers: Option<usize>,
    /// Optional per-sweep CSV report path
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Flat `key = value` config file supplying flag defaults
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let features_path: PathBuf =
        resolve_required(args.features, file.take("features")?, "features")?;
    let labels_path: PathBuf = resolve_required(args.labels, file.take("labels")?, "labels")?;
    let model_path: PathBuf =
        resolve_required(args.out_model, file.take("out-model")?, "out-model")?;
    let bits = resolve(args.bits, file.take("bits")?, 16);
    let inducing = resolve(args.inducing, file.take("inducing")?, 200);
    let representatives = resolve(args.representatives, file.take("representatives")?, 500);
    let sigma_y = resolve_opt(args.sigma_y, file.take("sigma-y")?);
    let sigma_f = resolve(args.sigma_f, file.take("sigma-f")?, 2.0);
    let length_scale = resolve(args.length_scale, file.take("length-scale")?, 0.5);
    let max_sweeps = resolve(args.max_sweeps, file.take("max-sweeps")?, 50);
    let damping = resolve(args.damping, file.take("damping")?, 0.9);
    let block_size = resolve(args.block_size, file.take("block-size")?, 1000);
    let seed = resolve(args.seed, file.take("seed")?, 0);
    let workers = resolve(
        resolve_opt(args.workers, file.take("workers")?),
        workers_from_env()?,
        1,
    );
    let report_path = resolve_opt(args.report, file.take::<PathBuf>("report")?);
    file.finish()?;

    let raw = load_feature_file(&features_path)?;
    let labels = load_labels(&labels_path)?;
    log::info!("loaded {} items (dim {}) and {} labeled ids", raw.len(), raw.dim(), labels.len());
    let dataset = raw.normalize()?;

    let kernel = KernelConfig::new(sigma_f, length_scale)?;
    let mut cfg = TrainConfig::new(bits, inducing, representatives, kernel, seed);
    cfg.sigma_y = sigma_y;
    cfg.max_sweeps = max_sweeps;
    cfg.damping = damping;
    cfg.block_size = block_size;
    cfg.workers = workers;

    let (model, report) = train_dataset(&dataset, &labels, &cfg)?;
    model.save(&model_path)?;
    log::info!(
        "trained {} bits in {:.2}s over {} sweeps ({})",
        model.bits(),
        report.total_time.as_secs_f64(),
        report.sweeps.len(),
        report.stop
    );
    if let Some(path) = &report_path {
        write_text(path, &report.to_csv())?;
        log::info!("wrote per-sweep report to {}", path.display());
    }

    // Deterministic summary: no wall times here (those live in the log and
    // the report CSV), so identical runs print identical bytes.
    println!("model = {}", model_path.display());
    println!("bits = {}", model.bits());
    println!("sigma_y = {}", report.sigma_y);
    println!("sweeps = {}", report.sweeps.len());
    println!("stop = {}", report.stop);
    println!("distinct_codes = {}", report.final_distinct_codes);
    Ok(())
}

// ---------------------------------------------------------------------------
// encode

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Trained model file
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Features to encode: CSV `id,f1,...,fd` or the packed binary format
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,
    /// Where to write the packed code index
    #[arg(long, value_name = "FILE")]
    pub out_codes: Option<PathBuf>,
    /// Flat `key = value` config file supplying flag defaults
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

pub fn encode(args: EncodeArgs) -> Result<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let model_path: PathBuf = resolve_required(args.model, file.take("model")?, "model")?;
    let features_path: PathBuf =
        resolve_required(args.features, file.take("features")?, "features")?;
    let codes_path: PathBuf =
        resolve_required(args.out_codes, file.take("out-codes")?, "out-codes")?;
    file.finish()?;

    let model = HashModel::load(&model_path)?;
    let raw = load_feature_file(&features_path)?;
    let index = encode_dataset(&model, &raw)?;
    index.save(&codes_path)?;
    println!("items = {}", index.len());
    println!("bits = {}", index.bits());
    Ok(())
}

/// Normalize a raw feature dataset and hash every row. An empty dataset
/// yields an empty index of the model's width.
fn encode_dataset(model: &HashModel, raw: &FeatureDataset) -> Result<HammingIndex> {
    if raw.is_empty() {
        return HammingIndex::with_width(model.bits(), Vec::new(), Vec::new());
    }
    let dataset = raw.normalize()?;
    let codes = model.encode_batch(dataset.features())?;
    HammingIndex::with_width(model.bits(), dataset.ids().to_vec(), codes)
}

// ---------------------------------------------------------------------------
// search

#[derive(Args, Debug)]
pub struct SearchArgs {
    /// Code index to search
    #[arg(long, value_name = "FILE")]
    pub codes: Option<PathBuf>,
    /// Queries as a code index file (exclusive with --query-features)
    #[arg(long, value_name = "FILE")]
    pub query_codes: Option<PathBuf>,
    /// Queries as a feature file, hashed on the fly (requires --model)
    #[arg(long, value_name = "FILE")]
    pub query_features: Option<PathBuf>,
    /// Model used to hash --query-features
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Ranked hits per query [default: 10; larger than the index means a
    /// full ranking]
    #[arg(long, value_name = "K")]
    pub k: Option<usize>,
    /// Report every item within this Hamming radius instead of a ranked
    /// top-k
    #[arg(long, value_name = "R")]
    pub radius: Option<u32>,
    /// Flat `key = value` config file supplying flag defaults
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

pub fn search(args: SearchArgs) -> Result<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let codes_path: PathBuf = resolve_required(args.codes, file.take("codes")?, "codes")?;
    let query_codes = resolve_opt(args.query_codes, file.take::<PathBuf>("query-codes")?);
    let query_features = resolve_opt(args.query_features, file.take::<PathBuf>("query-features")?);
    let model_path = resolve_opt(args.model, file.take::<PathBuf>("model")?);
    let k = resolve(args.k, file.take("k")?, 10);
    let radius = resolve_opt(args.radius, file.take("radius")?);
    file.finish()?;

    let queries: Vec<(u64, BinaryCode)> = match (query_codes, query_features) {
        (Some(_), Some(_)) => {
            return Err(Error::usage(
                "choose one query source: --query-codes or --query-features",
            ));
        }
        (None, None) => {
            return Err(Error::usage(
                "no query source: pass --query-codes or --query-features with --model",
            ));
        }
        (Some(path), None) => {
            let qi = HammingIndex::load(&path)?;
            qi.ids().iter().copied().zip(qi.codes().iter().cloned()).collect()
        }
        (None, Some(path)) => {
            let Some(model_path) = model_path else {
                return Err(Error::usage("--query-features requires --model to hash them"));
            };
            let model = HashModel::load(&model_path)?;
            let raw = load_feature_file(&path)?;
            let qi = encode_dataset(&model, &raw)?;
            qi.ids().iter().copied().zip(qi.codes().iter().cloned()).collect()
        }
    };

    let index = HammingIndex::load(&codes_path)?;
    log::info!("searching {} queries over {} indexed items", queries.len(), index.len());

    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    match radius {
        Some(radius) => {
            writeln!(out, "query_id,item_id")?;
            for (qid, code) in &queries {
                for id in index.within_radius(code, radius)? {
                    writeln!(out, "{qid},{id}")?;
                }
            }
        }
        None => {
            writeln!(out, "query_id,rank,item_id,distance")?;
            for (qid, code) in &queries {
                for (rank, (dist, id)) in index.search(code, k)?.into_iter().enumerate() {
                    writeln!(out, "{qid},{},{id},{dist}", rank + 1)?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Code index to evaluate (leave-one-out over its items)
    #[arg(long, value_name = "FILE")]
    pub codes: Option<PathBuf>,
    /// Ground-truth labels: CSV `id,label[;label]*`
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// Hamming radius for precision@radius [default: 2]
    #[arg(long, value_name = "R")]
    pub radius: Option<u32>,
    /// Write the precision-recall curve CSV here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Flat `key = value` config file supplying flag defaults
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let mut file = FileConfig::load(args.config.as_deref())?;
    let codes_path: PathBuf = resolve_required(args.codes, file.take("codes")?, "codes")?;
    let labels_path: PathBuf = resolve_required(args.labels, file.take("labels")?, "labels")?;
    let radius = resolve(args.radius, file.take("radius")?, 2);
    let out_path = resolve_opt(args.out, file.take::<PathBuf>("out")?);
    file.finish()?;

    let index = HammingIndex::load(&codes_path)?;
    let labels = load_labels(&labels_path)?;
    let report = evaluate(&index, &labels, radius)?;

    print!("{}", report.to_kv_block());
    let curve = format!("recall,precision\n{}", report.curve_csv());
    match &out_path {
        Some(path) => {
            write_text(path, &curve)?;
            log::info!("wrote precision-recall curve to {}", path.display());
        }
        None => print!("{curve}"),
    }
    Ok(())
}
