//! Chromatic view of an example and per-color label statistics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::coloring::Coloring;
use crate::dataset::{Example, FeatureId, SparseDataset};

/// How to resolve two active features that share a color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionPolicy {
    /// Drop the more popular feature; on equal popularity keep the smaller id.
    #[default]
    DropMorePopular,
    /// Keep the smallest feature id of each color.
    KeepLowestIndex,
}

/// Surviving `(color, feature)` pairs of an example, sorted by color.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChromaticView {
    pub values: Vec<(u32, FeatureId)>,
    /// Active features without a color.
    pub unseen: usize,
    /// Colored features dropped by collision resolution.
    pub dropped: usize,
}

impl ChromaticView {
    pub fn get(&self, color: u32) -> Option<FeatureId> {
        self.values
            .binary_search_by_key(&color, |&(c, _)| c)
            .ok()
            .map(|i| self.values[i].1)
    }
}

pub fn chromatic_view(c: &Coloring, ex: &Example, policy: CollisionPolicy) -> ChromaticView {
    let mut colored: Vec<(u32, u64, FeatureId)> = Vec::with_capacity(ex.active.len());
    let mut unseen = 0;
    for &f in &ex.active {
        match c.color_of(f) {
            Some(color) => {
                let rank = match policy {
                    CollisionPolicy::DropMorePopular => c.popularity_of(f).unwrap_or(0),
                    CollisionPolicy::KeepLowestIndex => 0,
                };
                colored.push((color, rank, f));
            }
            None => unseen += 1,
        }
    }
    // within a color the winner sorts first: least popular, then smallest id
    colored.sort_unstable();
    let total = colored.len();
    colored.dedup_by_key(|&mut (color, _, _)| color);
    ChromaticView {
        dropped: total - colored.len(),
        values: colored.into_iter().map(|(color, _, f)| (color, f)).collect(),
        unseen,
    }
}

/// Label counts for one categorical value (a feature of some color).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueStats {
    pub feature: FeatureId,
    pub count: u64,
    pub positives: u64,
}

impl ValueStats {
    pub fn rate(&self) -> f64 {
        self.positives as f64 / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ColorColumn {
    /// Observed values in ascending feature order.
    pub values: Vec<ValueStats>,
    pub rows_with_color: u64,
    /// Rows where the color is absent (the ⊥ value).
    pub absent_rows: u64,
    pub absent_positives: u64,
}

impl ColorColumn {
    pub fn positives_with_color(&self) -> u64 {
        self.values.iter().map(|v| v.positives).sum()
    }
}

/// Per-color categorical statistics gathered from the estimation half.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ColorStats {
    pub columns: Vec<ColorColumn>,
    pub n: u64,
    pub positives: u64,
}

impl ColorStats {
    pub fn num_colors(&self) -> usize {
        self.columns.len()
    }

    /// Overall positive rate `p̄` (0.5 for an empty sample).
    pub fn prior(&self) -> f64 {
        if self.n == 0 {
            0.5
        } else {
            self.positives as f64 / self.n as f64
        }
    }
}

/// Exact per-color counts over `estimate` after collision resolution.
pub fn collect_color_stats(
    c: &Coloring,
    estimate: &SparseDataset,
    policy: CollisionPolicy,
) -> ColorStats {
    let m = c.num_colors() as usize;
    let mut maps: Vec<HashMap<FeatureId, (u64, u64)>> = vec![HashMap::new(); m];
    let mut rows = vec![0u64; m];
    let mut row_pos = vec![0u64; m];
    let mut positives = 0;
    for ex in &estimate.examples {
        let y = u64::from(ex.label);
        positives += y;
        for (color, f) in chromatic_view(c, ex, policy).values {
            let color = color as usize;
            let entry = maps[color].entry(f).or_insert((0, 0));
            entry.0 += 1;
            entry.1 += y;
            rows[color] += 1;
            row_pos[color] += y;
        }
    }
    let n = estimate.n() as u64;
    let columns = maps
        .into_iter()
        .enumerate()
        .map(|(color, map)| {
            let mut values: Vec<ValueStats> = map
                .into_iter()
                .map(|(feature, (count, positives))| ValueStats {
                    feature,
                    count,
                    positives,
                })
                .collect();
            values.sort_unstable_by_key(|v| v.feature);
            ColorColumn {
                values,
                rows_with_color: rows[color],
                absent_rows: n - rows[color],
                absent_positives: positives - row_pos[color],
            }
        })
        .collect();
    ColorStats {
        columns,
        n,
        positives,
    }
}
