//! Sparse binary datasets: libsvm ingestion, splits and dense feature detection.
//!
//! Each example is a binary label plus the set of active sparse features,
//! kept sorted and duplicate-free. Values attached to sparse features are
//! dropped to presence; the first value seen per feature is retained only so
//! that features later promoted to dense columns keep their magnitude.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

/// Global feature identifier.
///
/// Integer-indexed inputs use their index verbatim. String-keyed features are
/// hashed with [`hash_feature_key`], which sets the top bit so hashed ids never
/// clash with small verbatim indices.
pub type FeatureId = u64;

const CACHE_MAGIC: &[u8; 8] = b"CLDSET01";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: label {label:?} is not binary (expected 0/1 or -1/+1)")]
    Label { line: usize, label: String },
    #[error("train fraction {0} must lie strictly between 0 and 1")]
    Fraction(f64),
    #[error("train count {count} exceeds dataset size {n}")]
    Count { count: usize, n: usize },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub label: u8,
    /// Strictly increasing active feature ids.
    pub active: Vec<FeatureId>,
    /// First value seen for each active feature, parallel to `active`.
    pub values: Vec<f32>,
    /// Dense feature values, ordered like [`SparseDataset::dense_ids`].
    pub dense: Vec<f64>,
}

impl Example {
    /// Builds an example from arbitrary feature ids, sorting and deduplicating them.
    pub fn new(label: u8, features: impl IntoIterator<Item = FeatureId>) -> Self {
        Self::with_values(label, features.into_iter().map(|f| (f, 1.0)))
    }

    /// Like [`Example::new`], but keeps the first value per feature.
    pub fn with_values(label: u8, pairs: impl IntoIterator<Item = (FeatureId, f32)>) -> Self {
        let mut pairs: Vec<(FeatureId, f32)> = pairs.into_iter().collect();
        // stable sort keeps the first occurrence of a feature in front
        pairs.sort_by_key(|&(f, _)| f);
        pairs.dedup_by_key(|&mut (f, _)| f);
        let (active, values) = pairs.into_iter().unzip();
        Self {
            label,
            active,
            values,
            dense: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.active.len()
    }

    /// Little-endian concatenation of the active ids, the input to [`example_hash`].
    fn serialized_active(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(8 * self.active.len());
        for &f in &self.active {
            bytes.extend_from_slice(&f.to_le_bytes());
        }
        bytes
    }
}

/// XXH3-64 of the example's active ids serialized as little-endian u64s.
pub fn example_hash(ex: &Example) -> u64 {
    xxh3_64(&ex.serialized_active())
}

/// XXH3-64 of a feature string with the top bit forced on.
pub fn hash_feature_key(key: &str) -> FeatureId {
    xxh3_64(key.as_bytes()) | (1 << 63)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseDataset {
    pub examples: Vec<Example>,
    /// Maximum number of active sparse features in any example.
    pub eta: usize,
    /// Occurrence count of every sparse feature.
    pub feature_freq: HashMap<FeatureId, u64>,
    /// Features moved out of the sparse set into `Example::dense`.
    pub dense_ids: Vec<FeatureId>,
}

impl SparseDataset {
    pub fn from_examples(examples: Vec<Example>) -> Self {
        Self::with_dense(examples, Vec::new())
    }

    fn with_dense(examples: Vec<Example>, dense_ids: Vec<FeatureId>) -> Self {
        let mut feature_freq = HashMap::new();
        let mut eta = 0;
        for ex in &examples {
            eta = eta.max(ex.active.len());
            for &f in &ex.active {
                *feature_freq.entry(f).or_insert(0) += 1;
            }
        }
        Self {
            examples,
            eta,
            feature_freq,
            dense_ids,
        }
    }

    pub fn n(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label == 1).count()
    }

    pub fn total_nnz(&self) -> u64 {
        self.examples.iter().map(|e| e.active.len() as u64).sum()
    }

    pub fn summary(&self) -> DatasetSummary {
        let n = self.n();
        DatasetSummary {
            n,
            eta: self.eta,
            feature_count: self.feature_freq.len(),
            positives: self.positives(),
            avg_nnz: if n == 0 {
                0.0
            } else {
                self.total_nnz() as f64 / n as f64
            },
            dense_ids: self.dense_ids.clone(),
        }
    }

    fn subset(&self, examples: Vec<Example>) -> Self {
        Self::with_dense(examples, self.dense_ids.clone())
    }
}

/// JSON summary written next to the binary cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub eta: usize,
    pub feature_count: usize,
    pub positives: usize,
    pub avg_nnz: f64,
    pub dense_ids: Vec<FeatureId>,
}

fn parse_label(token: &str, line: usize) -> Result<u8, DatasetError> {
    let err = || DatasetError::Label {
        line,
        label: token.to_string(),
    };
    let value: f64 = token.parse().map_err(|_| err())?;
    if value == 1.0 {
        Ok(1)
    } else if value == 0.0 || value == -1.0 {
        Ok(0)
    } else {
        Err(err())
    }
}

/// Parses a single libsvm line. `line` is 1-based and only used for errors.
/// Returns `None` for blank and comment-only lines.
pub fn parse_line(text: &str, line: usize) -> Result<Option<Example>, DatasetError> {
    let text = match text.find('#') {
        Some(pos) => &text[..pos],
        None => text,
    };
    let mut tokens = text.split_ascii_whitespace();
    let label = match tokens.next() {
        Some(t) => parse_label(t, line)?,
        None => return Ok(None),
    };
    let mut pairs = Vec::new();
    for token in tokens {
        let (key, value) = token.rsplit_once(':').ok_or_else(|| DatasetError::Parse {
            line,
            message: format!("expected <index>:<value>, found {token:?}"),
        })?;
        if key.is_empty() {
            return Err(DatasetError::Parse {
                line,
                message: format!("empty feature index in {token:?}"),
            });
        }
        let value: f32 = value.parse().map_err(|_| DatasetError::Parse {
            line,
            message: format!("bad feature value in {token:?}"),
        })?;
        let id = match key.parse::<u64>() {
            Ok(id) => id,
            Err(_) => hash_feature_key(key),
        };
        pairs.push((id, value));
    }
    Ok(Some(Example::with_values(label, pairs)))
}

/// Parses libsvm text. Lines are parsed in parallel and kept in input order;
/// the reported error is the one with the smallest line number.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<SparseDataset, DatasetError> {
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let parsed: Vec<Result<Option<Example>, DatasetError>> = lines
        .par_iter()
        .enumerate()
        .map(|(i, l)| parse_line(l, i + 1))
        .collect();
    let mut examples = Vec::with_capacity(parsed.len());
    for p in parsed {
        if let Some(ex) = p? {
            examples.push(ex);
        }
    }
    Ok(SparseDataset::from_examples(examples))
}

/// Opens a libsvm file, transparently decompressing gzip input.
pub fn read_libsvm_file(path: &Path) -> Result<SparseDataset, DatasetError> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let gz = file.read(&mut magic)? == 2 && magic == [0x1f, 0x8b];
    let file = File::open(path)?;
    if gz {
        parse_libsvm(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        parse_libsvm(BufReader::new(file))
    }
}

/// Writes sparse features as `<label> <id>:<value> ...` lines. Dense values
/// are not written.
pub fn write_libsvm<W: Write>(ds: &SparseDataset, mut out: W) -> io::Result<()> {
    for ex in &ds.examples {
        write!(out, "{}", ex.label)?;
        for (f, v) in ex.active.iter().zip(&ex.values) {
            write!(out, " {f}:{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Splits off the first `⌈n·fraction⌉` examples as the training set, without shuffling.
pub fn chronological_split(
    ds: &SparseDataset,
    train_fraction: f64,
) -> Result<(SparseDataset, SparseDataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::Fraction(train_fraction));
    }
    let count = ((ds.n() as f64) * train_fraction).ceil() as usize;
    chronological_split_count(ds, count.min(ds.n()))
}

/// Chronological split with an explicit training count.
pub fn chronological_split_count(
    ds: &SparseDataset,
    train_count: usize,
) -> Result<(SparseDataset, SparseDataset), DatasetError> {
    if train_count > ds.n() {
        return Err(DatasetError::Count {
            count: train_count,
            n: ds.n(),
        });
    }
    let train = ds.examples[..train_count].to_vec();
    let test = ds.examples[train_count..].to_vec();
    Ok((ds.subset(train), ds.subset(test)))
}

/// Splits by the most significant bit of [`example_hash`]: 0 goes to the
/// estimation half, 1 to the fitting half.
pub fn hash_split(ds: &SparseDataset) -> (SparseDataset, SparseDataset) {
    hash_split_ratio(ds, 0.5)
}

/// Generalized hash split: an example goes to the estimation half when its
/// hash, read as a fraction of 2^64, is below `estimate_ratio`. A ratio of
/// one half reproduces the first-bit rule exactly.
pub fn hash_split_ratio(ds: &SparseDataset, estimate_ratio: f64) -> (SparseDataset, SparseDataset) {
    let cut = ratio_cut(estimate_ratio);
    let (estimate, fit): (Vec<Example>, Vec<Example>) = ds
        .examples
        .iter()
        .cloned()
        .partition(|ex| u128::from(example_hash(ex)) < cut);
    (ds.subset(estimate), ds.subset(fit))
}

fn ratio_cut(ratio: f64) -> u128 {
    let ratio = ratio.clamp(0.0, 1.0);
    ((1u128 << 64) as f64 * ratio) as u128
}

/// Features active in strictly more than `threshold·n` rows are dense.
pub fn detect_dense(
    ds: &SparseDataset,
    threshold: f64,
) -> (BTreeSet<FeatureId>, BTreeSet<FeatureId>) {
    let cutoff = threshold * ds.n() as f64;
    let mut dense = BTreeSet::new();
    let mut sparse = BTreeSet::new();
    for (&f, &c) in &ds.feature_freq {
        if c as f64 > cutoff {
            dense.insert(f);
        } else {
            sparse.insert(f);
        }
    }
    (dense, sparse)
}

/// Moves `dense_ids` out of every example's sparse set into its dense vector
/// (value of the feature when present, 0 otherwise).
pub fn separate_dense(ds: &SparseDataset, dense_ids: &BTreeSet<FeatureId>) -> SparseDataset {
    let order: Vec<FeatureId> = dense_ids.iter().copied().collect();
    let examples = ds
        .examples
        .iter()
        .map(|ex| {
            let mut out = Example {
                label: ex.label,
                active: Vec::with_capacity(ex.active.len()),
                values: Vec::with_capacity(ex.active.len()),
                dense: ex.dense.clone(),
            };
            let mut dense = vec![0.0; order.len()];
            for (&f, &v) in ex.active.iter().zip(&ex.values) {
                match order.binary_search(&f) {
                    Ok(pos) => dense[pos] = f64::from(v),
                    Err(_) => {
                        out.active.push(f);
                        out.values.push(v);
                    }
                }
            }
            out.dense.extend(dense);
            out
        })
        .collect();
    let mut all_dense = ds.dense_ids.clone();
    all_dense.extend(order);
    SparseDataset::with_dense(examples, all_dense)
}

/// Compact index from 64-bit feature-key hashes to dense 32-bit indices.
#[derive(Debug, Clone, Default)]
pub struct FeatureIndex {
    index: HashMap<u64, u32>,
}

impl FeatureIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the index of `key`, assigning the next free one if unseen.
    pub fn intern(&mut self, key: &str) -> u32 {
        let next = self.index.len() as u32;
        *self.index.entry(hash_feature_key(key)).or_insert(next)
    }

    pub fn get(&self, key: &str) -> Option<u32> {
        self.index.get(&hash_feature_key(key)).copied()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

/// Writes the binary cache.
///
/// Layout, all little-endian: magic `CLDSET01`; u64 example count; u32 dense
/// id count followed by that many u64 dense ids; then one record per example:
/// u8 label, u32 nnz, nnz u64 ids, nnz f32 values, u32 dense length, f64 dense values.
pub fn write_cache<W: Write>(ds: &SparseDataset, mut out: W) -> io::Result<()> {
    out.write_all(CACHE_MAGIC)?;
    out.write_u64::<LittleEndian>(ds.n() as u64)?;
    out.write_u32::<LittleEndian>(ds.dense_ids.len() as u32)?;
    for &f in &ds.dense_ids {
        out.write_u64::<LittleEndian>(f)?;
    }
    for ex in &ds.examples {
        out.write_u8(ex.label)?;
        out.write_u32::<LittleEndian>(ex.active.len() as u32)?;
        for &f in &ex.active {
            out.write_u64::<LittleEndian>(f)?;
        }
        for &v in &ex.values {
            out.write_f32::<LittleEndian>(v)?;
        }
        out.write_u32::<LittleEndian>(ex.dense.len() as u32)?;
        for &v in &ex.dense {
            out.write_f64::<LittleEndian>(v)?;
        }
    }
    out.flush()
}

pub fn read_cache<R: Read>(mut input: R) -> Result<SparseDataset, DatasetError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(DatasetError::Cache("bad magic header".into()));
    }
    let n = input.read_u64::<LittleEndian>()? as usize;
    let ndense = input.read_u32::<LittleEndian>()? as usize;
    let dense_ids = (0..ndense)
        .map(|_| input.read_u64::<LittleEndian>())
        .collect::<io::Result<Vec<_>>>()?;
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let label = input.read_u8()?;
        if label > 1 {
            return Err(DatasetError::Cache(format!("label {label} in cache")));
        }
        let nnz = input.read_u32::<LittleEndian>()? as usize;
        let mut active = vec![0u64; nnz];
        input.read_u64_into::<LittleEndian>(&mut active)?;
        let mut values = vec![0f32; nnz];
        input.read_f32_into::<LittleEndian>(&mut values)?;
        if active.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DatasetError::Cache("active ids not strictly increasing".into()));
        }
        let dlen = input.read_u32::<LittleEndian>()? as usize;
        let mut dense = vec![0f64; dlen];
        input.read_f64_into::<LittleEndian>(&mut dense)?;
        examples.push(Example {
            label,
            active,
            values,
            dense,
        });
    }
    Ok(SparseDataset::with_dense(examples, dense_ids))
}

/// Feature frequencies as an ordered map, for deterministic output.
pub fn sorted_frequencies(ds: &SparseDataset) -> BTreeMap<FeatureId, u64> {
    ds.feature_freq.iter().map(|(&f, &c)| (f, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> SparseDataset {
        parse_libsvm(text.as_bytes()).unwrap()
    }

    #[test]
    fn parses_basic_line() {
        let ds = parse("1 5:1 9:1\n");
        assert_eq!(ds.examples[0].label, 1);
        assert_eq!(ds.examples[0].active, vec![5, 9]);
    }

    #[test]
    fn dedups_multivalued_features() {
        let ds = parse("0 3:0.7 3:0.2");
        assert_eq!(ds.examples[0].label, 0);
        assert_eq!(ds.examples[0].active, vec![3]);
        assert_eq!(ds.examples[0].values, vec![0.7]);
    }

    #[test]
    fn maps_signed_labels() {
        let ds = parse("-1 2:1\n+1 4:1\n");
        assert_eq!(ds.examples[0].label, 0);
        assert_eq!(ds.examples[0].active, vec![2]);
        assert_eq!(ds.examples[1].label, 1);
    }

    #[test]
    fn rejects_non_binary_label() {
        let err = parse_libsvm("1 1:1\n2 3:1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Label { line: 2, .. }), "{err}");
        let err = parse_libsvm("0.5 3:1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Label { line: 1, .. }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_libsvm("1 1:1\n0 2:1\n1 7\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 3, .. }), "{err}");
        let err = parse_libsvm("1 1:x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 1, .. }));
    }

    #[test]
    fn string_keys_are_hashed_with_top_bit() {
        let ds = parse("1 user=abc:1 42:1");
        let ex = &ds.examples[0];
        assert_eq!(ex.active[0], 42);
        assert_eq!(ex.active[1], hash_feature_key("user=abc"));
        assert!(ex.active[1] >> 63 == 1);
    }

    #[test]
    fn skips_blank_and_comment_lines() {
        let ds = parse("\n# header\n1 1:1 # trailing\n");
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.examples[0].active, vec![1]);
    }

    #[test]
    fn summary_fields() {
        let ds = parse("1 1:1 2:1 3:1\n0 2:1\n");
        assert_eq!(ds.eta, 3);
        assert_eq!(ds.feature_freq[&2], 2);
        let s = ds.summary();
        assert_eq!(s.n, 2);
        assert_eq!(s.feature_count, 3);
        assert_eq!(s.avg_nnz, 2.0);
    }

    fn numbered(n: usize) -> SparseDataset {
        SparseDataset::from_examples(
            (0..n)
                .map(|i| Example::new((i % 2) as u8, [i as u64, 1000 + i as u64]))
                .collect(),
        )
    }

    #[test]
    fn chronological_split_examples() {
        let (train, test) = chronological_split(&numbered(10), 0.8).unwrap();
        assert_eq!((train.n(), test.n()), (8, 2));
        assert_eq!(train.examples[0].active[0], 0);
        assert_eq!(test.examples[0].active[0], 8);

        let (train, test) = chronological_split(&numbered(1), 0.5).unwrap();
        assert_eq!((train.n(), test.n()), (1, 0));

        let (train, test) = chronological_split(&numbered(3), 0.34).unwrap();
        assert_eq!((train.n(), test.n()), (2, 1));
    }

    #[test]
    fn chronological_split_rejects_bad_fraction() {
        for f in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(
                chronological_split(&numbered(4), f),
                Err(DatasetError::Fraction(_))
            ));
        }
    }

    #[test]
    fn hash_split_uses_first_bit() {
        let ds = numbered(200);
        let (estimate, fit) = hash_split(&ds);
        for ex in &estimate.examples {
            assert_eq!(example_hash(ex) >> 63, 0);
        }
        for ex in &fit.examples {
            assert_eq!(example_hash(ex) >> 63, 1);
        }
        assert_eq!(estimate.n() + fit.n(), 200);
        let (again, _) = hash_split(&ds);
        assert_eq!(again.examples, estimate.examples);
    }

    #[test]
    fn dense_threshold_is_strict() {
        let mut examples = Vec::new();
        for i in 0..100u64 {
            let mut f = vec![1000 + i];
            if i < 11 {
                f.push(1);
            }
            if i < 10 {
                f.push(2);
            }
            examples.push(Example::new(0, f));
        }
        let ds = SparseDataset::from_examples(examples);
        let (dense, sparse) = detect_dense(&ds, 0.1);
        assert!(dense.contains(&1));
        assert!(sparse.contains(&2));
        assert_eq!(dense.len(), 1);

        let (dense, sparse) = detect_dense(&SparseDataset::default(), 0.1);
        assert!(dense.is_empty() && sparse.is_empty());
    }

    #[test]
    fn separate_dense_moves_values() {
        let ds = parse("1 1:2.5 7:1\n0 7:1\n");
        let dense: BTreeSet<_> = [1].into_iter().collect();
        let out = separate_dense(&ds, &dense);
        assert_eq!(out.dense_ids, vec![1]);
        assert_eq!(out.examples[0].active, vec![7]);
        assert_eq!(out.examples[0].dense, vec![2.5]);
        assert_eq!(out.examples[1].dense, vec![0.0]);
        assert!(!out.feature_freq.contains_key(&1));
    }

    #[test]
    fn cache_round_trip_and_bad_magic() {
        let ds = separate_dense(&parse("1 1:2.5 7:1 9:3\n0 7:1\n"), &[1].into_iter().collect());
        let mut buf = Vec::new();
        write_cache(&ds, &mut buf).unwrap();
        let back = read_cache(buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        buf[0] = b'X';
        assert!(matches!(read_cache(buf.as_slice()), Err(DatasetError::Cache(_))));
    }

    #[test]
    fn gzip_input_is_detected() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.svm.gz");
        let mut enc = GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::fast());
        enc.write_all(b"1 3:1 4:1\n-1 5:1\n").unwrap();
        enc.finish().unwrap();
        let ds = read_libsvm_file(&path).unwrap();
        assert_eq!(ds.n(), 2);
        assert_eq!(ds.examples[1].active, vec![5]);
    }

    #[test]
    fn feature_index_is_compact() {
        let mut idx = FeatureIndex::new();
        assert_eq!(idx.intern("a"), 0);
        assert_eq!(idx.intern("b"), 1);
        assert_eq!(idx.intern("a"), 0);
        assert_eq!(idx.get("b"), Some(1));
        assert_eq!(idx.get("c"), None);
        assert_eq!(idx.len(), 2);
    }
}
