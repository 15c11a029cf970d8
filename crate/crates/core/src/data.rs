//! Dataset ingestion, normalization, synthetic cluster generation, and the
//! feature/label file formats.
//!
//! Features travel either as header-less CSV (`id,f1,...,fd`, floats
//! printed in shortest round-trip form) or as a packed little-endian binary
//! block. Labels are CSV rows `id,label[;label]*`. Both loaders report the
//! offending line on malformed input.
//!
//! Normalization follows the usual retrieval preprocessing: center every
//! column at zero, then scale each row to unit Euclidean norm. The two
//! steps are recorded as flags on the dataset so a pipeline applies them
//! exactly once — re-centering unit rows would shift them off the sphere,
//! so `normalize` on an already-normalized dataset is a no-op.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bytes::{checked_count, expect_magic, expect_version, read_f64, read_u32, read_u64, write_f64, write_u32, write_u64};
use crate::error::{Error, Result};
use crate::eval::LabelSet;

const FEATURES_MAGIC: &[u8; 4] = b"GPHF";
const FORMAT_VERSION: u32 = 1;

/// Feature matrix with item ids and normalization bookkeeping.
#[derive(Clone, Debug)]
pub struct FeatureDataset {
    ids: Vec<u64>,
    features: Array2<f64>,
    centered: bool,
    unit_norm: bool,
}

impl FeatureDataset {
    /// Wrap ids and features. Ids must be unique, entries finite, and the
    /// lengths consistent.
    pub fn new(ids: Vec<u64>, features: Array2<f64>) -> Result<Self> {
        if ids.len() != features.nrows() {
            return Err(Error::usage(format!(
                "FeatureDataset: {} ids but {} feature rows",
                ids.len(),
                features.nrows()
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::format(format!("non-finite feature value {bad}")));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if let Some(dup) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::format(format!("duplicate item id {}", dup[0])));
        }
        Ok(FeatureDataset { ids, features, centered: false, unit_norm: false })
    }

    /// Number of items `n`.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Whether columns have been centered at zero.
    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Whether rows have been scaled to unit norm.
    pub fn is_unit_norm(&self) -> bool {
        self.unit_norm
    }

    /// Center every column at zero, then scale each row to unit Euclidean
    /// norm. Rows that are exactly zero after centering stay zero (with a
    /// warning). Calling this on an already-normalized dataset returns it
    /// unchanged — the flags guard against double application.
    pub fn normalize(&self) -> Result<FeatureDataset> {
        if self.is_empty() {
            return Err(Error::usage("normalize: dataset is empty"));
        }
        if self.centered && self.unit_norm {
            log::debug!("normalize: dataset already normalized, returning unchanged");
            return Ok(self.clone());
        }
        let n = self.len();
        let d = self.dim();
        let mut out = self.features.clone();
        let inv_n = 1.0 / n as f64;
        for j in 0..d {
            let mean: f64 = self.features.column(j).iter().sum::<f64>() * inv_n;
            for i in 0..n {
                out[(i, j)] -= mean;
            }
        }
        for i in 0..n {
            let norm = out.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                log::warn!(
                    "normalize: item {} is the all-zero vector after centering; left as zero",
                    self.ids[i]
                );
                continue;
            }
            for j in 0..d {
                out[(i, j)] /= norm;
            }
        }
        Ok(FeatureDataset { ids: self.ids.clone(), features: out, centered: true, unit_norm: true })
    }
}

/// Deterministic Gaussian clusters around well-separated class centers.
///
/// Centers sit at unit radius from the origin: a regular polygon in the
/// first two coordinates for `d ≥ 2` (90° spacing for four classes), evenly
/// spaced points in `[-1, 1]` for `d = 1`. Item `i` belongs to class
/// `i mod classes` (sizes differ by at most one) and is its center plus
/// isotropic Gaussian noise with standard deviation `spread`. Class labels
/// are named `c0, c1, …`.
pub fn synthetic_clusters(
    n: usize,
    classes: usize,
    d: usize,
    spread: f64,
    seed: u64,
) -> Result<(FeatureDataset, LabelSet)> {
    if classes < 2 {
        return Err(Error::usage(format!("synthetic_clusters: need at least 2 classes, got {classes}")));
    }
    if n < classes {
        return Err(Error::usage(format!(
            "synthetic_clusters: need at least one point per class ({n} points, {classes} classes)"
        )));
    }
    if d == 0 {
        return Err(Error::usage("synthetic_clusters: dimension must be positive"));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::usage(format!("synthetic_clusters: spread must be nonnegative and finite, got {spread}")));
    }

    let mut centers = Array2::<f64>::zeros((classes, d));
    if d == 1 {
        for k in 0..classes {
            centers[(k, 0)] = -1.0 + 2.0 * k as f64 / (classes - 1) as f64;
        }
    } else {
        for k in 0..classes {
            let theta = std::f64::consts::TAU * k as f64 / classes as f64;
            centers[(k, 0)] = theta.cos();
            centers[(k, 1)] = theta.sin();
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut features = Array2::<f64>::zeros((n, d));
    let mut labels = LabelSet::new();
    for i in 0..n {
        let k = i % classes;
        for j in 0..d {
            let z: f64 = normal.sample(&mut rng);
            features[(i, j)] = centers[(k, j)] + spread * z;
        }
        labels.add_item(i as u64, &[format!("c{k}")])?;
    }
    let ids = (0..n as u64).collect();
    Ok((FeatureDataset::new(ids, features)?, labels))
}

/// On-disk representation of a feature file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureFormat {
    /// Header-less text rows `id,f1,...,fd`.
    Csv,
    /// Packed little-endian binary, bit-exact round-trip.
    Packed,
}

/// Decide a file's feature format by sniffing the packed magic bytes.
pub fn sniff_format(path: &Path) -> Result<FeatureFormat> {
    let shown = path.display().to_string();
    sniff_format_inner(path).map_err(|e| e.with_path(shown))
}

fn sniff_format_inner(path: &Path) -> Result<FeatureFormat> {
    let mut f = File::open(path)?;
    let mut head = [0u8; 4];
    let n = f.read(&mut head)?;
    Ok(if n == 4 && &head == FEATURES_MAGIC { FeatureFormat::Packed } else { FeatureFormat::Csv })
}

/// Write features in the given format.
pub fn save_features(ds: &FeatureDataset, path: &Path, format: FeatureFormat) -> Result<()> {
    let shown = path.display().to_string();
    save_features_inner(ds, path, format).map_err(|e| e.with_path(shown))
}

fn save_features_inner(ds: &FeatureDataset, path: &Path, format: FeatureFormat) -> Result<()> {
    match format {
        FeatureFormat::Csv => {
            let mut w = BufWriter::new(File::create(path)?);
            for (i, &id) in ds.ids.iter().enumerate() {
                write!(w, "{id}")?;
                for v in ds.features.row(i) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
            w.flush()?;
        }
        FeatureFormat::Packed => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(FEATURES_MAGIC)?;
            write_u32(&mut w, FORMAT_VERSION)?;
            write_u32(&mut w, ds.len() as u32)?;
            write_u32(&mut w, ds.dim() as u32)?;
            for &id in &ds.ids {
                write_u64(&mut w, id)?;
            }
            for &v in ds.features.iter() {
                write_f64(&mut w, v)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Read features in the given format (see [`sniff_format`] to auto-detect).
/// An empty CSV file yields an empty dataset.
pub fn load_features(path: &Path, format: FeatureFormat) -> Result<FeatureDataset> {
    let shown = path.display().to_string();
    let inner = match format {
        FeatureFormat::Csv => load_features_csv(path),
        FeatureFormat::Packed => load_features_packed(path),
    };
    inner.map_err(|e| e.with_path(shown))
}

fn load_features_csv(path: &Path) -> Result<FeatureDataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut ids = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let id_field = fields.next().expect("split yields at least one field");
        let id: u64 = id_field.trim().parse().map_err(|_| {
            Error::format_at(lineno, format!("invalid item id {id_field:?}"))
        })?;
        let mut row = Vec::new();
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::format_at(lineno, format!("invalid feature value {f:?}"))
            })?;
            row.push(v);
        }
        match dim {
            None => {
                if row.is_empty() {
                    return Err(Error::format_at(lineno, "row has no feature values"));
                }
                dim = Some(row.len());
            }
            Some(d) if d != row.len() => {
                return Err(Error::format_at(
                    lineno,
                    format!("row has {} values, expected {d}", row.len()),
                ));
            }
            _ => {}
        }
        ids.push(id);
        values.extend_from_slice(&row);
    }
    let d = dim.unwrap_or(0);
    let n = ids.len();
    let features = Array2::from_shape_vec((n, d), values).expect("rows validated to length d");
    FeatureDataset::new(ids, features)
}

fn load_features_packed(path: &Path) -> Result<FeatureDataset> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, FEATURES_MAGIC, "packed features")?;
    expect_version(&mut r, FORMAT_VERSION, "packed features")?;
    let n = checked_count(read_u32(&mut r)? as u64, 1 << 32, "item")?;
    let d = checked_count(read_u32(&mut r)? as u64, 1 << 24, "feature dimension")?;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(read_u64(&mut r)?);
    }
    let mut features = Array2::zeros((n, d));
    for v in features.iter_mut() {
        *v = read_f64(&mut r)?;
    }
    FeatureDataset::new(ids, features)
}

/// Read a label CSV: rows `id,label[;label]*`. Duplicate ids and empty
/// label fields are format errors naming the line.
pub fn load_labels(path: &Path) -> Result<LabelSet> {
    let shown = path.display().to_string();
    load_labels_inner(path).map_err(|e| e.with_path(shown))
}

fn load_labels_inner(path: &Path) -> Result<LabelSet> {
    let reader = BufReader::new(File::open(path)?);
    let mut labels = LabelSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (id_field, rest) = line.split_once(',').ok_or_else(|| {
            Error::format_at(lineno, "expected `id,label[;label]*`")
        })?;
        let id: u64 = id_field.trim().parse().map_err(|_| {
            Error::format_at(lineno, format!("invalid item id {id_field:?}"))
        })?;
        let names: Vec<&str> = rest.split(';').map(str::trim).collect();
        if names.iter().any(|n| n.is_empty()) {
            return Err(Error::format_at(lineno, format!("item {id} has an empty label")));
        }
        labels.add_item(id, &names).map_err(|e| match e {
            Error::Format { detail, .. } => Error::format_at(lineno, detail),
            other => other,
        })?;
    }
    Ok(labels)
}

/// Write a label CSV with items in ascending id order (round-trips through
/// [`load_labels`]).
pub fn save_labels(labels: &LabelSet, path: &Path) -> Result<()> {
    let shown = path.display().to_string();
    save_labels_inner(labels, path).map_err(|e| e.with_path(shown))
}

fn save_labels_inner(labels: &LabelSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for id in labels.ids() {
        let names: Vec<&str> = labels
            .labels_of(id)
            .expect("iterating own ids")
            .iter()
            .map(|&lid| labels.label_name(lid))
            .collect();
        writeln!(w, "{id},{}", names.join(";"))?;
    }
    w.flush()?;
    Ok(())
}
