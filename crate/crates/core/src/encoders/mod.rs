//! Budgeted encoders from sparse examples to model inputs.
//!
//! The chromatic encoders (`CL+SM`, `CL+TE`, `CL+FT`) read each example
//! through a coloring, one categorical value per color, and encode those
//! values; `FT` and `HT` are the uncolored baselines. Every encoder is an
//! immutable value whose `transform` is pure. Dense features pass through
//! after the budgeted columns.

pub mod chromatic;
pub mod frequency;
pub mod hashing;
pub mod mi;
pub mod submodular;
pub mod target;

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chromatic::{chromatic_view, collect_color_stats, ChromaticView, CollisionPolicy, ColorStats};
pub use hashing::HashingTrick;
pub use mi::{mutual_information, BucketCount};
pub use submodular::{sorting_heuristic_compress, submodular_compress, ColorSplit, SplitterSolution};
pub use target::{TargetTable, DEFAULT_SMOOTHING};

use crate::coloring::Coloring;
use crate::dataset::{Example, FeatureId, SparseDataset};

/// Version of the JSON encoder artifact.
pub const ENCODER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("budget {budget} is below the {colors} colors of the coloring (each color needs one bucket); use a coloring with fewer colors or a larger budget")]
    BudgetTooSmall { budget: usize, colors: usize },
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("encoder artifact version {found} is not supported (expected {ENCODER_FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("encoder artifact: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Chromatic one-hot with global submodular bucket compression.
    Clsm,
    /// Chromatic target encoding.
    Clte,
    /// Chromatic frequency truncation.
    Clft,
    /// Frequency truncation of raw features.
    Ft,
    /// Hashing trick.
    Ht,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 5] = [Self::Clsm, Self::Clte, Self::Clft, Self::Ft, Self::Ht];

    pub fn name(self) -> &'static str {
        match self {
            Self::Clsm => "clsm",
            Self::Clte => "clte",
            Self::Clft => "clft",
            Self::Ft => "ft",
            Self::Ht => "ht",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Clsm => "CL+SM",
            Self::Clte => "CL+TE",
            Self::Clft => "CL+FT",
            Self::Ft => "FT",
            Self::Ht => "HT",
        }
    }

    pub fn is_chromatic(self) -> bool {
        matches!(self, Self::Clsm | Self::Clte | Self::Clft)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s) || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown encoder {s:?} (expected clsm, clte, clft, ft or ht)"))
    }
}

/// Variant-specific encoder state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum Payload {
    Clsm {
        policy: CollisionPolicy,
        coloring: Coloring,
        solution: SplitterSolution,
    },
    Clte {
        policy: CollisionPolicy,
        coloring: Coloring,
        table: TargetTable,
    },
    Clft {
        policy: CollisionPolicy,
        coloring: Coloring,
        /// Retained `(color, value)` pairs; the column of a pair is its position.
        retained: Vec<(u32, FeatureId)>,
    },
    Ft {
        /// Retained features in ascending order; the column is the position.
        retained: Vec<FeatureId>,
    },
    Ht {
        hashing: HashingTrick,
    },
}

/// An example after encoding: sorted `(column, value)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub label: u8,
    pub features: Vec<(u32, f64)>,
}

/// Transform-time lookups rebuilt from the payload.
#[derive(Debug, Clone, Default)]
struct Lookup {
    /// Feature → output column (one-hot variants).
    column: HashMap<FeatureId, u32>,
    /// Color → column of its catch-all bucket (`CL+SM`).
    catch_all: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Encoder {
    pub version: u32,
    pub kind: EncoderKind,
    /// Requested budget.
    pub budget: usize,
    /// Number of budgeted output columns.
    pub output_dim: usize,
    /// Dense pass-through columns appended after `output_dim`.
    pub dense_width: usize,
    pub payload: Payload,
    #[serde(skip)]
    lookup: Lookup,
}

impl PartialEq for Encoder {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version
            && self.kind == other.kind
            && self.budget == other.budget
            && self.output_dim == other.output_dim
            && self.dense_width == other.dense_width
            && self.payload == other.payload
    }
}

impl Encoder {
    fn new(kind: EncoderKind, budget: usize, output_dim: usize, payload: Payload) -> Self {
        let mut enc = Self {
            version: ENCODER_FORMAT_VERSION,
            kind,
            budget,
            output_dim,
            dense_width: 0,
            payload,
            lookup: Lookup::default(),
        };
        enc.rebuild_lookup();
        enc
    }

    /// `CL+SM` from a precomputed splitter solution.
    pub fn from_solution(
        coloring: Coloring,
        solution: SplitterSolution,
        budget: usize,
        policy: CollisionPolicy,
    ) -> Self {
        let dim = solution.output_dim;
        Self::new(
            EncoderKind::Clsm,
            budget,
            dim,
            Payload::Clsm {
                policy,
                coloring,
                solution,
            },
        )
    }

    /// `CL+SM`: bucket statistics come from `stats` (the estimation half).
    pub fn chromatic_submodular(
        coloring: Coloring,
        stats: &ColorStats,
        budget: usize,
        policy: CollisionPolicy,
    ) -> Result<Self, EncodeError> {
        let solution = submodular_compress(stats, budget)?;
        Ok(Self::from_solution(coloring, solution, budget, policy))
    }

    /// `CL+TE`: `m` real columns of smoothed per-value positive rates.
    pub fn chromatic_target(
        coloring: Coloring,
        stats: &ColorStats,
        smoothing: f64,
        policy: CollisionPolicy,
    ) -> Self {
        let table = TargetTable::from_stats(stats, smoothing);
        let m = table.num_colors();
        Self::new(
            EncoderKind::Clte,
            m,
            m,
            Payload::Clte {
                policy,
                coloring,
                table,
            },
        )
    }

    /// `CL+FT`: one-hot of the `b` most frequent colored values of `train`.
    pub fn chromatic_truncation(
        coloring: Coloring,
        train: &SparseDataset,
        budget: usize,
        policy: CollisionPolicy,
    ) -> Result<Self, EncodeError> {
        if budget == 0 {
            return Err(EncodeError::ZeroBudget);
        }
        let retained = frequency::top_colored_values(&coloring, train, budget, policy);
        Ok(Self::new(
            EncoderKind::Clft,
            budget,
            retained.len(),
            Payload::Clft {
                policy,
                coloring,
                retained,
            },
        ))
    }

    /// `FT`: one-hot of the `b` most frequent features of `train`.
    pub fn truncation(train: &SparseDataset, budget: usize) -> Result<Self, EncodeError> {
        if budget == 0 {
            return Err(EncodeError::ZeroBudget);
        }
        let retained = frequency::top_features(train, budget);
        Ok(Self::new(EncoderKind::Ft, budget, retained.len(), Payload::Ft { retained }))
    }

    /// `HT` with `budget` buckets.
    pub fn hashing(budget: usize, seed: u64) -> Result<Self, EncodeError> {
        if budget == 0 {
            return Err(EncodeError::ZeroBudget);
        }
        let hashing = HashingTrick::new(budget as u32, seed);
        Ok(Self::new(EncoderKind::Ht, budget, budget, Payload::Ht { hashing }))
    }

    pub fn with_dense_width(mut self, width: usize) -> Self {
        self.dense_width = width;
        self
    }

    /// Total input width of a downstream model.
    pub fn total_dim(&self) -> usize {
        self.output_dim + self.dense_width
    }

    fn rebuild_lookup(&mut self) {
        let mut lookup = Lookup::default();
        match &self.payload {
            Payload::Clsm { solution, .. } => {
                for split in &solution.colors {
                    lookup.catch_all.push(split.offset + split.catch_all);
                    for (rank, &f) in split.sorted_values.iter().enumerate() {
                        lookup
                            .column
                            .insert(f, split.offset + split.bucket_of_rank(rank as u32));
                    }
                }
            }
            Payload::Clft { retained, .. } => {
                for (i, &(_, f)) in retained.iter().enumerate() {
                    lookup.column.insert(f, i as u32);
                }
            }
            Payload::Ft { retained } => {
                for (i, &f) in retained.iter().enumerate() {
                    lookup.column.insert(f, i as u32);
                }
            }
            Payload::Clte { .. } | Payload::Ht { .. } => {}
        }
        self.lookup = lookup;
    }

    /// Budgeted columns of `ex`, sorted by column.
    fn encode_sparse(&self, ex: &Example) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = match &self.payload {
            Payload::Clsm {
                policy, coloring, ..
            } => chromatic_view(coloring, ex, *policy)
                .values
                .into_iter()
                .map(|(color, f)| {
                    let col = match self.lookup.column.get(&f) {
                        Some(&col) => col,
                        None => self.lookup.catch_all[color as usize],
                    };
                    (col, 1.0)
                })
                .collect(),
            Payload::Clte {
                policy,
                coloring,
                table,
            } => {
                let view = chromatic_view(coloring, ex, *policy);
                let mut dense = vec![table.prior; table.num_colors()];
                for (color, f) in view.values {
                    dense[color as usize] = table.lookup(color, f);
                }
                dense.into_iter().enumerate().map(|(i, v)| (i as u32, v)).collect()
            }
            Payload::Clft {
                policy, coloring, ..
            } => chromatic_view(coloring, ex, *policy)
                .values
                .into_iter()
                .filter_map(|(_, f)| self.lookup.column.get(&f).map(|&col| (col, 1.0)))
                .collect(),
            Payload::Ft { .. } => ex
                .active
                .iter()
                .filter_map(|f| self.lookup.column.get(f).map(|&col| (col, 1.0)))
                .collect(),
            Payload::Ht { hashing } => {
                let x: Vec<(FeatureId, f64)> = ex.active.iter().map(|&f| (f, 1.0)).collect();
                hashing.project(&x)
            }
        };
        out.sort_by_key(|&(i, _)| i);
        out
    }

    pub fn transform(&self, ex: &Example) -> EncodedExample {
        let mut features = self.encode_sparse(ex);
        let base = self.output_dim as u32;
        for (i, &v) in ex.dense.iter().take(self.dense_width).enumerate() {
            if v != 0.0 {
                features.push((base + i as u32, v));
            }
        }
        EncodedExample {
            label: ex.label,
            features,
        }
    }

    pub fn transform_all(&self, ds: &SparseDataset) -> Vec<EncodedExample> {
        ds.examples.par_iter().map(|ex| self.transform(ex)).collect()
    }

    pub fn to_json(&self) -> Result<String, EncodeError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, EncodeError> {
        let mut enc: Self = serde_json::from_str(text)?;
        if enc.version != ENCODER_FORMAT_VERSION {
            return Err(EncodeError::Version { found: enc.version });
        }
        enc.rebuild_lookup();
        Ok(enc)
    }
}

/// Writes encoded examples as libsvm text with 1-based column indices.
pub fn write_encoded_libsvm<W: Write>(rows: &[EncodedExample], mut out: W) -> io::Result<()> {
    for row in rows {
        write!(out, "{}", row.label)?;
        for &(i, v) in &row.features {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
