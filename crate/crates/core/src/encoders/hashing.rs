//! Signed feature hashing into `d` buckets.

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::dataset::FeatureId;

/// `φ_i(x) = Σ_{j: η(j)=i} ξ(j)·x_j` with seeded hashes `η` and `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingTrick {
    pub width: u32,
    pub seed: u64,
}

impl HashingTrick {
    pub fn new(width: u32, seed: u64) -> Self {
        assert!(width >= 1, "hashing width must be positive");
        Self { width, seed }
    }

    // η and ξ use disjoint seed streams so they are independent
    pub fn bucket(&self, f: FeatureId) -> u32 {
        (xxh3_64_with_seed(&f.to_le_bytes(), self.seed.wrapping_mul(2)) % u64::from(self.width)) as u32
    }

    pub fn sign(&self, f: FeatureId) -> f64 {
        if xxh3_64_with_seed(&f.to_le_bytes(), self.seed.wrapping_mul(2) | 1) >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Projects a sparse vector; returns nonzero coordinates in index order.
    pub fn project(&self, x: &[(FeatureId, f64)]) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = x
            .iter()
            .map(|&(f, v)| (self.bucket(f), self.sign(f) * v))
            .collect();
        out.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(out.len());
        for (i, v) in out {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| v != 0.0);
        merged
    }
}

/// Inner product of two sorted sparse vectors.
pub fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}
