//! Smoothed target encoding of colored categorical columns.

use serde::{Deserialize, Serialize};

use super::chromatic::ColorStats;
use crate::dataset::FeatureId;

pub const DEFAULT_SMOOTHING: f64 = 20.0;

/// Per color, the smoothed positive rate of every observed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetTable {
    /// Global positive rate `p̄`, used for absent colors and unseen values.
    pub prior: f64,
    pub smoothing: f64,
    /// Per color `(value, encoding)` in ascending value order.
    pub tables: Vec<Vec<(FeatureId, f64)>>,
}

impl TargetTable {
    /// `(positives + λ·p̄) / (count + λ)` for every value.
    pub fn from_stats(stats: &ColorStats, smoothing: f64) -> Self {
        let prior = stats.prior();
        let tables = stats
            .columns
            .iter()
            .map(|col| {
                col.values
                    .iter()
                    .map(|v| {
                        let enc = if smoothing.is_infinite() {
                            prior
                        } else {
                            (v.positives as f64 + smoothing * prior) / (v.count as f64 + smoothing)
                        };
                        (v.feature, enc)
                    })
                    .collect()
            })
            .collect();
        Self {
            prior,
            smoothing,
            tables,
        }
    }

    pub fn num_colors(&self) -> usize {
        self.tables.len()
    }

    pub fn lookup(&self, color: u32, value: FeatureId) -> f64 {
        let table = &self.tables[color as usize];
        match table.binary_search_by_key(&value, |&(f, _)| f) {
            Ok(i) => table[i].1,
            Err(_) => self.prior,
        }
    }
}
