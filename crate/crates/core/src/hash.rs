//! Binary hash codes, the trained hash model, Hamming retrieval, and their
//! on-disk formats.
//!
//! A trained model is `m` weight vectors over `r` inducing points plus the
//! kernel: bit `j` of a query `x` is the sign of `Σ_u k(x, x̄_u)·W_uj`,
//! with `sign(0) = +1`. The score fold mirrors the latent-mean fold used by
//! the posterior's predictive distribution, so an encoded bit always equals
//! the sign of the corresponding predictive mean, bit for bit.
//!
//! Codes pack ±1 bits into little-endian `u64` words (`+1 → 1`), bit `j`
//! living at position `j % 64` of word `j / 64`, with unused high bits zero
//! so that equality and hashing work on the words directly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::bytes::{
    checked_count, expect_magic, expect_version, read_f64, read_u32, read_u64, write_f64,
    write_u32, write_u64,
};
use crate::error::{Error, Result};
use crate::kernel::{kernel_eval, KernelConfig};
use crate::scalar::Real;

const MODEL_MAGIC: &[u8; 4] = b"GPHM";
const CODES_MAGIC: &[u8; 4] = b"GPHC";
const FORMAT_VERSION: u32 = 1;

/// An `m`-bit binary code packed into `u64` words.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    words: Vec<u64>,
    bits: usize,
}

impl BinaryCode {
    /// Pack a ±1 sign vector (`+1 → 1`, `-1 → 0`).
    pub fn from_signs(signs: &[i8]) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::usage("BinaryCode: sign vector must be nonempty"));
        }
        let mut words = vec![0u64; signs.len().div_ceil(64)];
        for (j, &s) in signs.iter().enumerate() {
            match s {
                1 => words[j / 64] |= 1u64 << (j % 64),
                -1 => {}
                other => {
                    return Err(Error::usage(format!("BinaryCode: signs must be ±1, got {other}")))
                }
            }
        }
        Ok(BinaryCode { words, bits: signs.len() })
    }

    /// Rebuild from packed words (validates the word count and that the
    /// padding bits beyond `bits` are zero).
    pub fn from_words(words: Vec<u64>, bits: usize) -> Result<Self> {
        if bits == 0 {
            return Err(Error::usage("BinaryCode: bit width must be positive"));
        }
        if words.len() != bits.div_ceil(64) {
            return Err(Error::usage(format!(
                "BinaryCode: {bits} bits need {} words, got {}",
                bits.div_ceil(64),
                words.len()
            )));
        }
        let tail = bits % 64;
        if tail != 0 && words[words.len() - 1] >> tail != 0 {
            return Err(Error::usage("BinaryCode: nonzero padding bits"));
        }
        Ok(BinaryCode { words, bits })
    }

    /// Number of bits `m`.
    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    /// Packed little-endian words.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Bit `j` as a boolean (`true` ↔ `+1`).
    pub fn bit(&self, j: usize) -> bool {
        debug_assert!(j < self.bits);
        (self.words[j / 64] >> (j % 64)) & 1 == 1
    }

    /// Unpack back to a ±1 sign vector.
    pub fn to_signs(&self) -> Vec<i8> {
        (0..self.bits).map(|j| if self.bit(j) { 1 } else { -1 }).collect()
    }

    /// Hamming distance (XOR + popcount per word).
    pub fn hamming(&self, other: &BinaryCode) -> Result<u32> {
        if self.bits != other.bits {
            return Err(Error::usage(format!(
                "hamming: code widths differ, {} vs {}",
                self.bits, other.bits
            )));
        }
        Ok(self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones()).sum())
    }
}

/// A trained hash model: kernel, inducing inputs `X̄ (r×d)`, weight matrix
/// `W (r×m)`, and the training seed for provenance.
#[derive(Clone, Debug)]
pub struct HashModel<R> {
    inducing_inputs: Array2<R>,
    weights: Array2<R>,
    kernel: KernelConfig<R>,
    seed: u64,
}

impl<R: Real> HashModel<R> {
    pub fn new(
        inducing_inputs: Array2<R>,
        weights: Array2<R>,
        kernel: KernelConfig<R>,
        seed: u64,
    ) -> Result<Self> {
        kernel.validate()?;
        if inducing_inputs.nrows() == 0 || inducing_inputs.ncols() == 0 {
            return Err(Error::usage("HashModel: inducing inputs must be nonempty"));
        }
        if weights.nrows() != inducing_inputs.nrows() {
            return Err(Error::usage(format!(
                "HashModel: weights have {} rows but there are {} inducing points",
                weights.nrows(),
                inducing_inputs.nrows()
            )));
        }
        if weights.ncols() == 0 {
            return Err(Error::usage("HashModel: need at least one bit"));
        }
        if inducing_inputs.iter().any(|v| !v.is_finite())
            || weights.iter().any(|v| !v.is_finite())
        {
            return Err(Error::usage("HashModel: parameters must be finite"));
        }
        Ok(HashModel { inducing_inputs, weights, kernel, seed })
    }

    /// Code length `m`.
    pub fn bits(&self) -> usize {
        self.weights.ncols()
    }

    /// Number of inducing points `r`.
    pub fn rank(&self) -> usize {
        self.inducing_inputs.nrows()
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.inducing_inputs.ncols()
    }

    pub fn kernel(&self) -> &KernelConfig<R> {
        &self.kernel
    }

    pub fn inducing_inputs(&self) -> ArrayView2<'_, R> {
        self.inducing_inputs.view()
    }

    pub fn weights(&self) -> ArrayView2<'_, R> {
        self.weights.view()
    }

    /// Seed the model was trained with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw pre-sign scores `k̄(x)ᵀW`, one per bit. Uses the same sequential
    /// fold as the posterior predictive mean.
    pub fn bit_scores(&self, x: ArrayView1<R>) -> Result<Array1<R>> {
        if x.len() != self.dim() {
            return Err(Error::usage(format!(
                "encode: query dimension {} does not match model dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let r = self.rank();
        let mut kbar = Array1::zeros(r);
        for u in 0..r {
            kbar[u] = kernel_eval(x, self.inducing_inputs.row(u), &self.kernel)?;
        }
        let m = self.bits();
        let mut scores = Array1::zeros(m);
        for j in 0..m {
            let mut acc = R::zero();
            for u in 0..r {
                acc += kbar[u] * self.weights[(u, j)];
            }
            scores[j] = acc;
        }
        Ok(scores)
    }

    /// Hash one query: the sign of each bit score, with `sign(0) = +1`.
    pub fn encode(&self, x: ArrayView1<R>) -> Result<BinaryCode> {
        let scores = self.bit_scores(x)?;
        let signs: Vec<i8> =
            scores.iter().map(|&s| if s >= R::zero() { 1 } else { -1 }).collect();
        BinaryCode::from_signs(&signs)
    }

    /// Hash every row of `x`. Each row goes through exactly the same path
    /// as [`HashModel::encode`], so the results agree bitwise.
    pub fn encode_batch(&self, x: ArrayView2<R>) -> Result<Vec<BinaryCode>> {
        if x.ncols() != self.dim() {
            return Err(Error::usage(format!(
                "encode: query dimension {} does not match model dimension {}",
                x.ncols(),
                self.dim()
            )));
        }
        x.rows().into_iter().map(|row| self.encode(row)).collect()
    }
}

impl HashModel<f64> {
    /// Write the model to disk (fixed little-endian layout, version 1).
    pub fn save(&self, path: &Path) -> Result<()> {
        let shown = path.display().to_string();
        self.save_inner(path).map_err(|e| e.with_path(shown))
    }

    fn save_inner(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MODEL_MAGIC)?;
        write_u32(&mut w, FORMAT_VERSION)?;
        write_u32(&mut w, self.dim() as u32)?;
        write_u32(&mut w, self.rank() as u32)?;
        write_u32(&mut w, self.bits() as u32)?;
        write_u64(&mut w, self.seed)?;
        write_f64(&mut w, self.kernel.signal_std)?;
        write_f64(&mut w, self.kernel.length_scale)?;
        write_f64(&mut w, self.kernel.jitter)?;
        for &v in self.inducing_inputs.iter() {
            write_f64(&mut w, v)?;
        }
        for &v in self.weights.iter() {
            write_f64(&mut w, v)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a model written by [`HashModel::save`]. Values round-trip
    /// bit-exactly.
    pub fn load(path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        File::open(path)
            .map_err(Error::from)
            .and_then(|f| Self::load_inner(&mut BufReader::new(f)))
            .map_err(|e| e.with_path(shown))
    }

    fn load_inner(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, MODEL_MAGIC, "hash model")?;
        expect_version(r, FORMAT_VERSION, "hash model")?;
        let d = checked_count(read_u32(r)? as u64, 1 << 24, "feature dimension")?;
        let rank = checked_count(read_u32(r)? as u64, 1 << 24, "inducing point")?;
        let m = checked_count(read_u32(r)? as u64, 1 << 24, "bit")?;
        let seed = read_u64(r)?;
        let signal_std = read_f64(r)?;
        let length_scale = read_f64(r)?;
        let jitter = read_f64(r)?;
        let kernel = KernelConfig::with_jitter(signal_std, length_scale, jitter)
            .map_err(|e| Error::format(format!("invalid kernel parameters: {e}")))?;
        let mut inducing = Array2::zeros((rank, d));
        for v in inducing.iter_mut() {
            *v = read_f64(r)?;
        }
        let mut weights = Array2::zeros((rank, m));
        for v in weights.iter_mut() {
            *v = read_f64(r)?;
        }
        HashModel::new(inducing, weights, kernel, seed)
            .map_err(|e| Error::format(format!("invalid model payload: {e}")))
    }
}

/// An in-memory retrieval index: item ids plus their codes, searched by
/// exhaustive Hamming scan.
#[derive(Clone, Debug)]
pub struct HammingIndex {
    ids: Vec<u64>,
    codes: Vec<BinaryCode>,
    bits: usize,
}

impl HammingIndex {
    /// Build from parallel id/code lists, inferring the code width from the
    /// first entry. Ids must be unique and all codes the same width.
    pub fn new(ids: Vec<u64>, codes: Vec<BinaryCode>) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::usage(
                "HammingIndex: cannot infer code width from zero items; use with_width",
            ));
        }
        let bits = codes[0].len();
        Self::with_width(bits, ids, codes)
    }

    /// Build with an explicit code width. Unlike [`HammingIndex::new`] this
    /// accepts an empty index (searches over it return no results).
    pub fn with_width(bits: usize, ids: Vec<u64>, codes: Vec<BinaryCode>) -> Result<Self> {
        if bits == 0 {
            return Err(Error::usage("HammingIndex: code width must be positive"));
        }
        if ids.len() != codes.len() {
            return Err(Error::usage(format!(
                "HammingIndex: {} ids but {} codes",
                ids.len(),
                codes.len()
            )));
        }
        if let Some(bad) = codes.iter().find(|c| c.len() != bits) {
            return Err(Error::usage(format!(
                "HammingIndex: mixed code widths {bits} and {}",
                bad.len()
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if let Some(dup) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::usage(format!("HammingIndex: duplicate id {}", dup[0])));
        }
        Ok(HammingIndex { ids, codes, bits })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Code width `m`.
    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn codes(&self) -> &[BinaryCode] {
        &self.codes
    }

    /// The `k` nearest items as `(distance, id)`, sorted by distance with
    /// ties broken by ascending id. Returns fewer than `k` only when the
    /// index is smaller than `k`.
    pub fn search(&self, query: &BinaryCode, k: usize) -> Result<Vec<(u32, u64)>> {
        if query.len() != self.bits {
            return Err(Error::usage(format!(
                "search: query has {} bits, index stores {}-bit codes",
                query.len(),
                self.bits
            )));
        }
        let mut hits: Vec<(u32, u64)> = self
            .ids
            .iter()
            .zip(&self.codes)
            .map(|(&id, code)| Ok((query.hamming(code)?, id)))
            .collect::<Result<_>>()?;
        hits.sort_unstable();
        hits.truncate(k);
        Ok(hits)
    }

    /// All item ids within `radius` Hamming distance of the query, in
    /// ascending id order.
    pub fn within_radius(&self, query: &BinaryCode, radius: u32) -> Result<Vec<u64>> {
        if query.len() != self.bits {
            return Err(Error::usage(format!(
                "within_radius: query has {} bits, index stores {}-bit codes",
                query.len(),
                self.bits
            )));
        }
        let mut out = Vec::new();
        for (&id, code) in self.ids.iter().zip(&self.codes) {
            if query.hamming(code)? <= radius {
                out.push(id);
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Write ids and packed codes to disk (fixed little-endian layout,
    /// version 1).
    pub fn save(&self, path: &Path) -> Result<()> {
        let shown = path.display().to_string();
        self.save_inner(path).map_err(|e| e.with_path(shown))
    }

    fn save_inner(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CODES_MAGIC)?;
        write_u32(&mut w, FORMAT_VERSION)?;
        write_u32(&mut w, self.bits as u32)?;
        write_u64(&mut w, self.ids.len() as u64)?;
        for (&id, code) in self.ids.iter().zip(&self.codes) {
            write_u64(&mut w, id)?;
            for &word in code.words() {
                write_u64(&mut w, word)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Read an index written by [`HammingIndex::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        File::open(path)
            .map_err(Error::from)
            .and_then(|f| Self::load_inner(&mut BufReader::new(f)))
            .map_err(|e| e.with_path(shown))
    }

    fn load_inner(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, CODES_MAGIC, "code index")?;
        expect_version(r, FORMAT_VERSION, "code index")?;
        let bits = checked_count(read_u32(r)? as u64, 1 << 24, "bit")?;
        if bits == 0 {
            return Err(Error::format("code index declares zero-bit codes"));
        }
        let count = checked_count(read_u64(r)?, 1 << 40, "item")?;
        let words_per_code = bits.div_ceil(64);
        let mut ids = Vec::with_capacity(count);
        let mut codes = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(read_u64(r)?);
            let mut words = Vec::with_capacity(words_per_code);
            for _ in 0..words_per_code {
                words.push(read_u64(r)?);
            }
            codes.push(
                BinaryCode::from_words(words, bits)
                    .map_err(|e| Error::format(format!("invalid packed code: {e}")))?,
            );
        }
        HammingIndex::with_width(bits, ids, codes).map_err(|e| match e {
            Error::Usage(detail) => Error::format(detail),
            other => other,
        })
    }
}
