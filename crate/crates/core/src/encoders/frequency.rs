//! Frequency truncation: keep only the `b` most frequent features or
//! colored categorical values.

use std::collections::HashMap;

use super::chromatic::{chromatic_view, CollisionPolicy};
use crate::coloring::Coloring;
use crate::dataset::{FeatureId, SparseDataset};

/// The `b` most frequent features of `train` (ties by smaller id), returned in
/// ascending id order.
pub fn top_features(train: &SparseDataset, b: usize) -> Vec<FeatureId> {
    let mut counts: Vec<(FeatureId, u64)> = train.feature_freq.iter().map(|(&f, &c)| (f, c)).collect();
    top_by_count(&mut counts, b, |&(f, _)| f)
}

/// The `b` most frequent `(color, value)` pairs after collision resolution,
/// returned in `(color, value)` order.
pub fn top_colored_values(
    c: &Coloring,
    train: &SparseDataset,
    b: usize,
    policy: CollisionPolicy,
) -> Vec<(u32, FeatureId)> {
    let mut counts: HashMap<(u32, FeatureId), u64> = HashMap::new();
    for ex in &train.examples {
        for pair in chromatic_view(c, ex, policy).values {
            *counts.entry(pair).or_insert(0) += 1;
        }
    }
    let mut counts: Vec<((u32, FeatureId), u64)> = counts.into_iter().collect();
    // ties by value id, then color (a value has exactly one color)
    top_by_count(&mut counts, b, |&((color, f), _)| (f, color))
}

fn top_by_count<T: Copy + Ord, K: Ord>(items: &mut [(T, u64)], b: usize, key: impl Fn(&(T, u64)) -> K) -> Vec<T> {
    items.sort_unstable_by(|a, z| z.1.cmp(&a.1).then_with(|| key(a).cmp(&key(z))));
    let mut kept: Vec<T> = items.iter().take(b).map(|&(t, _)| t).collect();
    kept.sort_unstable();
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Example;

    fn ds() -> SparseDataset {
        let mut rows = Vec::new();
        rows.extend((0..5).map(|_| Example::new(1, [1])));
        rows.extend((0..3).map(|_| Example::new(0, [2])));
        rows.push(Example::new(0, [3]));
        SparseDataset::from_examples(rows)
    }

    #[test]
    fn keeps_most_frequent() {
        assert_eq!(top_features(&ds(), 2), vec![1, 2]);
    }

    #[test]
    fn large_budget_keeps_everything() {
        assert_eq!(top_features(&ds(), 10), vec![1, 2, 3]);
    }

    #[test]
    fn ties_prefer_smaller_id() {
        let d = SparseDataset::from_examples(vec![Example::new(0, [9]), Example::new(0, [4])]);
        assert_eq!(top_features(&d, 1), vec![4]);
    }

    #[test]
    fn colored_counts_follow_resolution() {
        let c = Coloring::from_parts(vec![(1, 0, 5), (2, 0, 3), (3, 1, 1)]);
        let d = SparseDataset::from_examples(vec![
            Example::new(0, [1, 2]),
            Example::new(0, [1, 3]),
            Example::new(0, [2]),
        ]);
        // (0,2) survives twice, (0,1) once, (1,3) once
        assert_eq!(top_colored_values(&c, &d, 1, CollisionPolicy::DropMorePopular), vec![(0, 2)]);
        assert_eq!(
            top_colored_values(&c, &d, 2, CollisionPolicy::KeepLowestIndex),
            vec![(0, 1), (0, 2)]
        );
    }
}
