//! Budgeted quantization of colored categorical columns.
//!
//! Within a color, values are sorted by their estimated positive rate; a
//! quantization is a set of splitter positions over that order, and the
//! buckets between consecutive splitters become one-hot columns. Each color
//! starts as a single catch-all bucket. The objective `Σ_i I(Z_i(X_i); Y)` is
//! a sum of monotone submodular functions over disjoint ground sets, so the
//! remaining budget is spent by one lazy greedy pass over every candidate
//! splitter of every color at once.
//!
//! Splitting a bucket only changes that bucket's contribution, so a candidate's
//! gain stays exact for as long as its enclosing bucket is unchanged: heap
//! entries remember the bucket they were scored in, and only the candidates of
//! a freshly split bucket are rescored.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::chromatic::{ColorColumn, ColorStats, ValueStats};
use super::mi::{bucket_entropy_term, mutual_information, BucketCount};
use super::EncodeError;
use crate::dataset::FeatureId;

/// Quantization of one color.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColorSplit {
    /// Values ordered by estimated `p(Y=1|X=v)` ascending, ties by feature id.
    pub sorted_values: Vec<FeatureId>,
    /// Sorted splitter positions in `1..sorted_values.len()`; a splitter at `p`
    /// separates ranks `p-1` and `p`.
    pub splitters: Vec<u32>,
    /// Bucket for values of this color missing from `sorted_values`.
    pub catch_all: u32,
    /// Global column of this color's first bucket.
    pub offset: u32,
}

impl ColorSplit {
    pub fn num_buckets(&self) -> usize {
        self.splitters.len() + 1
    }

    /// Bucket of the value at 0-based `rank`: the number of splitters `≤ rank`.
    pub fn bucket_of_rank(&self, rank: u32) -> u32 {
        self.splitters.partition_point(|&s| s <= rank) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitterSolution {
    pub colors: Vec<ColorSplit>,
    /// `Σ_i I(Z_i(X_i); Y)` in nats on the estimation sample.
    pub objective: f64,
    /// Gains of accepted splitters in acceptance order (nats).
    pub gains: Vec<f64>,
    pub output_dim: usize,
}

/// Sorted values, prefix label counts and current splitters of one color.
struct ColorState {
    values: Vec<ValueStats>,
    prefix_rows: Vec<u64>,
    prefix_pos: Vec<u64>,
    splitters: BTreeSet<u32>,
}

fn rate_order(a: &ValueStats, b: &ValueStats) -> Ordering {
    let lhs = u128::from(a.positives) * u128::from(b.count);
    let rhs = u128::from(b.positives) * u128::from(a.count);
    lhs.cmp(&rhs).then(a.feature.cmp(&b.feature))
}

impl ColorState {
    fn new(column: &ColorColumn) -> Self {
        let mut values = column.values.clone();
        values.sort_by(rate_order);
        let mut prefix_rows = vec![0];
        let mut prefix_pos = vec![0];
        for v in &values {
            prefix_rows.push(prefix_rows.last().unwrap() + v.count);
            prefix_pos.push(prefix_pos.last().unwrap() + v.positives);
        }
        Self {
            values,
            prefix_rows,
            prefix_pos,
            splitters: BTreeSet::new(),
        }
    }

    fn len(&self) -> u32 {
        self.values.len() as u32
    }

    fn term(&self, lo: u32, hi: u32) -> f64 {
        let (lo, hi) = (lo as usize, hi as usize);
        bucket_entropy_term(
            self.prefix_rows[hi] - self.prefix_rows[lo],
            self.prefix_pos[hi] - self.prefix_pos[lo],
        )
    }

    /// Bucket `(lo, hi)` enclosing candidate position `pos`.
    fn enclosing(&self, pos: u32) -> (u32, u32) {
        let lo = self.splitters.range(..pos).next_back().copied().unwrap_or(0);
        let hi = self.splitters.range(pos + 1..).next().copied().unwrap_or(self.len());
        (lo, hi)
    }

    /// Unnormalized gain `n·ΔI` of splitting bucket `(lo, hi)` at `pos`.
    fn raw_gain(&self, lo: u32, pos: u32, hi: u32) -> f64 {
        (self.term(lo, pos) + self.term(pos, hi) - self.term(lo, hi)).max(0.0)
    }

    fn buckets(&self, splitters: &[u32]) -> Vec<BucketCount> {
        let mut bounds = vec![0];
        bounds.extend_from_slice(splitters);
        bounds.push(self.len());
        bounds
            .windows(2)
            .map(|w| {
                let (lo, hi) = (w[0] as usize, w[1] as usize);
                BucketCount::new(
                    self.prefix_rows[hi] - self.prefix_rows[lo],
                    self.prefix_pos[hi] - self.prefix_pos[lo],
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    color: u32,
    pos: u32,
    bucket: (u32, u32),
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // max-heap: largest gain, then smallest color, then smallest position
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then(other.color.cmp(&self.color))
            .then(other.pos.cmp(&self.pos))
    }
}

/// Greedy over the candidates of `colors`, accepting at most `limit`
/// splitters. Returns `(color, pos, raw gain)` in acceptance order.
///
/// Accepting a splitter rescores the candidates of the two buckets it creates;
/// every other entry stays exact, so the popped maximum is always the true
/// greedy choice. Entries scored under a bucket that no longer exists are
/// dropped when they surface.
fn lazy_greedy(states: &mut [ColorState], colors: &[usize], limit: usize) -> Vec<(usize, u32, f64)> {
    let mut heap = BinaryHeap::new();
    for &c in colors {
        push_bucket(&mut heap, &states[c], c, 0, states[c].len());
    }
    let mut accepted = Vec::new();
    while accepted.len() < limit {
        let Some(top) = heap.pop() else { break };
        let state = &mut states[top.color as usize];
        if state.enclosing(top.pos) != top.bucket {
            continue;
        }
        state.splitters.insert(top.pos);
        accepted.push((top.color as usize, top.pos, top.gain));
        let (lo, hi) = top.bucket;
        push_bucket(&mut heap, state, top.color as usize, lo, top.pos);
        push_bucket(&mut heap, state, top.color as usize, top.pos, hi);
    }
    accepted
}

fn push_bucket(heap: &mut BinaryHeap<Candidate>, state: &ColorState, color: usize, lo: u32, hi: u32) {
    for pos in lo + 1..hi {
        heap.push(Candidate {
            gain: state.raw_gain(lo, pos, hi),
            color: color as u32,
            pos,
            bucket: (lo, hi),
        });
    }
}

fn check_budget(stats: &ColorStats, budget: usize) -> Result<usize, EncodeError> {
    let m = stats.num_colors();
    if budget < m {
        return Err(EncodeError::BudgetTooSmall { budget, colors: m });
    }
    Ok(budget - m)
}

fn assemble(stats: &ColorStats, states: &[ColorState], gains: Vec<f64>) -> SplitterSolution {
    let mut offset = 0u32;
    let mut colors = Vec::with_capacity(states.len());
    let mut objective = 0.0;
    for (state, column) in states.iter().zip(&stats.columns) {
        let splitters: Vec<u32> = state.splitters.iter().copied().collect();
        objective += mutual_information(
            &state.buckets(&splitters),
            BucketCount::new(column.absent_rows, column.absent_positives),
        );
        // unseen values of a known color land in the bucket holding the
        // color's pooled rate: after every value with a strictly lower rate
        let (rows, pos) = (u128::from(column.rows_with_color), u128::from(column.positives_with_color()));
        let pooled_rank = state
            .values
            .partition_point(|v| u128::from(v.positives) * rows < pos * u128::from(v.count)) as u32;
        let split = ColorSplit {
            sorted_values: state.values.iter().map(|v| v.feature).collect(),
            catch_all: 0,
            splitters,
            offset,
        };
        let split = ColorSplit {
            catch_all: split.bucket_of_rank(pooled_rank),
            ..split
        };
        offset += split.num_buckets() as u32;
        colors.push(split);
    }
    SplitterSolution {
        colors,
        objective,
        gains,
        output_dim: offset as usize,
    }
}

/// Maximizes `Σ_i I(Z_i(X_i); Y)` over all colors jointly under a column
/// budget: one catch-all bucket per color, then `budget - m` splitters chosen
/// by lazy greedy across colors.
pub fn submodular_compress(stats: &ColorStats, budget: usize) -> Result<SplitterSolution, EncodeError> {
    let extra = check_budget(stats, budget)?;
    let mut states: Vec<ColorState> = stats.columns.iter().map(ColorState::new).collect();
    let all: Vec<usize> = (0..states.len()).collect();
    let n = stats.n.max(1) as f64;
    let gains = lazy_greedy(&mut states, &all, extra)
        .into_iter()
        .map(|(_, _, g)| g / n)
        .collect();
    Ok(assemble(stats, &states, gains))
}

/// Per-color baseline: every color is quantized greedily to saturation on its
/// own, each selection keeps the gain it had within its color's own solution
/// (normalized by the rows where the color is present), and the `budget - m`
/// largest recorded gains across colors are kept.
pub fn sorting_heuristic_compress(
    stats: &ColorStats,
    budget: usize,
) -> Result<SplitterSolution, EncodeError> {
    let extra = check_budget(stats, budget)?;
    let mut scratch: Vec<ColorState> = stats.columns.iter().map(ColorState::new).collect();
    let mut pool: Vec<(f64, usize, usize, u32)> = Vec::new();
    for c in 0..scratch.len() {
        let rows = stats.columns[c].rows_with_color.max(1) as f64;
        let limit = scratch[c].len().saturating_sub(1) as usize;
        for (seq, (_, pos, g)) in lazy_greedy(&mut scratch, &[c], limit).into_iter().enumerate() {
            pool.push((g / rows, c, seq, pos));
        }
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    pool.truncate(extra);

    let mut states: Vec<ColorState> = stats.columns.iter().map(ColorState::new).collect();
    let mut gains = Vec::with_capacity(pool.len());
    for &(g, c, _, pos) in &pool {
        states[c].splitters.insert(pos);
        gains.push(g);
    }
    Ok(assemble(stats, &states, gains))
}

/// Objective of arbitrary splitter sets (one sorted list per color).
pub fn objective_of(stats: &ColorStats, splitters: &[Vec<u32>]) -> f64 {
    stats
        .columns
        .iter()
        .zip(splitters)
        .map(|(column, s)| {
            let state = ColorState::new(column);
            mutual_information(
                &state.buckets(s),
                BucketCount::new(column.absent_rows, column.absent_positives),
            )
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Column whose values have the given `(count, positives)`, ids from `base`.
    pub(crate) fn column(base: u64, values: &[(u64, u64)], n: u64, total_pos: u64) -> ColorColumn {
        let values: Vec<ValueStats> = values
            .iter()
            .enumerate()
            .map(|(i, &(count, positives))| ValueStats {
                feature: base + i as u64,
                count,
                positives,
            })
            .collect();
        let rows: u64 = values.iter().map(|v| v.count).sum();
        let pos: u64 = values.iter().map(|v| v.positives).sum();
        ColorColumn {
            values,
            rows_with_color: rows,
            absent_rows: n - rows,
            absent_positives: total_pos - pos,
        }
    }

    fn two_color_stats() -> ColorStats {
        // 8 rows: A present everywhere, B on half of them
        ColorStats {
            columns: vec![
                column(0, &[(4, 4), (4, 0)], 8, 4),
                column(10, &[(2, 1), (2, 1)], 8, 4),
            ],
            n: 8,
            positives: 4,
        }
    }

    #[test]
    fn greedy_spends_extra_splitter_in_informative_color() {
        let sol = submodular_compress(&two_color_stats(), 3).unwrap();
        assert_eq!(sol.colors[0].num_buckets(), 2);
        assert_eq!(sol.colors[1].num_buckets(), 1);
        assert_eq!(sol.output_dim, 3);
        assert!((sol.gains[0] - std::f64::consts::LN_2).abs() < 1e-12);
        // A's values sort by rate: (4,0) first
        assert_eq!(sol.colors[0].sorted_values, vec![1, 0]);
        assert_eq!(sol.colors[1].offset, 2);
    }

    #[test]
    fn budget_equal_to_colors_keeps_catch_alls() {
        let stats = two_color_stats();
        let sol = submodular_compress(&stats, 2).unwrap();
        assert!(sol.colors.iter().all(|c| c.splitters.is_empty()));
        assert_eq!(sol.output_dim, 2);
        let heuristic = sorting_heuristic_compress(&stats, 2).unwrap();
        assert_eq!(heuristic.colors, sol.colors);
        // B present on half the rows with the same rate as its absence: no information
        let expected = objective_of(&stats, &[vec![], vec![]]);
        assert!((sol.objective - expected).abs() < 1e-12);
    }

    #[test]
    fn budget_below_colors_is_error() {
        assert!(matches!(
            submodular_compress(&two_color_stats(), 1),
            Err(EncodeError::BudgetTooSmall { budget: 1, colors: 2 })
        ));
        assert!(sorting_heuristic_compress(&two_color_stats(), 1).is_err());
    }

    #[test]
    fn budget_beyond_candidates_saturates() {
        let sol = submodular_compress(&two_color_stats(), 10).unwrap();
        assert_eq!(sol.output_dim, 4);
    }

    #[test]
    fn single_color_heuristic_matches_greedy() {
        let stats = ColorStats {
            columns: vec![column(0, &[(5, 1), (3, 3), (6, 2), (2, 0), (4, 4)], 25, 12)],
            n: 25,
            positives: 12,
        };
        for b in 1..=5 {
            let a = submodular_compress(&stats, b).unwrap();
            let h = sorting_heuristic_compress(&stats, b).unwrap();
            assert_eq!(a.colors, h.colors, "budget {b}");
        }
    }

    #[test]
    fn catch_all_follows_pooled_rate() {
        let stats = ColorStats {
            columns: vec![column(0, &[(10, 0), (10, 5), (10, 10)], 30, 15)],
            n: 30,
            positives: 15,
        };
        let sol = submodular_compress(&stats, 3).unwrap();
        let split = &sol.colors[0];
        assert_eq!(split.splitters, vec![1, 2]);
        // pooled rate 0.5 sorts at rank 1, the middle bucket
        assert_eq!(split.catch_all, 1);
    }

    #[test]
    fn gains_non_increasing() {
        let stats = ColorStats {
            columns: vec![
                column(0, &[(5, 1), (3, 3), (6, 2), (2, 0), (4, 4)], 40, 20),
                column(10, &[(9, 8), (1, 0), (7, 1)], 40, 20),
            ],
            n: 40,
            positives: 20,
        };
        let sol = submodular_compress(&stats, 8).unwrap();
        assert!(sol.gains.windows(2).all(|w| w[0] >= w[1] - 1e-15));
        assert!(sol.gains.iter().all(|&g| g >= 0.0));
    }
}
