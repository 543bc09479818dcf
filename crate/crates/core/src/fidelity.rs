//! Representation fidelity diagnostics.
//!
//! For a threshold `k`, the Good-Turing count `N^(k) = Σ_{j≤k} j·f(j)` (with
//! `f(j)` the number of edges seen exactly `j` times) estimates from above
//! how many co-occurrence edges an unseen example brings that `G^(k)` lacks,
//! scaled by `n`. Collision counts measure the loss of a chromatic view
//! directly: `CC(T) = |T| - |c(T)|` over colored features.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coloring::{
    combine_filtered_coloring, default_glauber_steps, filter_high_degree, glauber_sample,
    greedy_color, Coloring, ColoringError, FilterResult, VertexOrder,
};
use crate::dataset::{Example, SparseDataset};
use crate::graph::{clique_edges, graph_from_counts, CooccurrenceGraph, EdgeCounts, EdgeHistogram, GraphError, VertexTable};

#[derive(Debug, Error)]
pub enum FidelityError {
    #[error("confidence delta {0} must lie strictly between 0 and 1")]
    Delta(f64),
    #[error("sample size n must be at least 1")]
    EmptySample,
    #[error("thresholds must be at least 1")]
    Threshold,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Coloring(#[from] ColoringError),
}

/// `N^(k)`, computed by the recursion `N^(k) = k·f(k) + N^(k-1)`, `N^(0) = 0`.
pub fn good_turing(h: &EdgeHistogram, k: u32) -> u64 {
    (1..=k).fold(0, |acc, j| acc + u64::from(j) * h.get(j))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CollisionCount {
    /// `|T ∩ dom(c)| - |c(T ∩ dom(c))|`.
    pub collisions: usize,
    /// Active features with no color.
    pub unseen: usize,
}

pub fn collision_count(c: &Coloring, t: &Example) -> CollisionCount {
    let mut colors: Vec<u32> = Vec::with_capacity(t.active.len());
    let mut unseen = 0;
    for &f in &t.active {
        match c.color_of(f) {
            Some(color) => colors.push(color),
            None => unseen += 1,
        }
    }
    let colored = colors.len();
    colors.sort_unstable();
    colors.dedup();
    CollisionCount {
        collisions: colored - colors.len(),
        unseen,
    }
}

/// `|K(T) ∖ E^(k)|` for the threshold of `g`.
pub fn new_edge_count(g: &CooccurrenceGraph, t: &Example) -> usize {
    clique_edges(&t.active)
        .filter(|e| !g.has_edge_ids(e.u(), e.v()))
        .count()
}

/// Inputs to the color budget `m_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    /// Held-out prefix size `|W|`.
    pub held_out: usize,
    /// Maximum degree of the filtered graph.
    pub delta_f: usize,
    /// Good-Turing count on the filtered graph.
    pub n_f: u64,
    pub n: usize,
    pub k: u32,
    pub eta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequiredColors {
    pub raw: f64,
    pub ceiled: u64,
}

/// `m_f = |W| + 2Δ_f + N_f/n + k·η²·ln(1/δ)/√n`, natural log.
pub fn required_colors(stats: &BudgetInputs, delta: f64) -> Result<RequiredColors, FidelityError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(FidelityError::Delta(delta));
    }
    if stats.n == 0 {
        return Err(FidelityError::EmptySample);
    }
    let n = stats.n as f64;
    let eta = stats.eta as f64;
    let raw = stats.held_out as f64
        + 2.0 * stats.delta_f as f64
        + stats.n_f as f64 / n
        + f64::from(stats.k) * eta * eta * (1.0 / delta).ln() / n.sqrt();
    Ok(RequiredColors {
        raw,
        ceiled: raw.ceil() as u64,
    })
}

/// Average collisions and unseen-feature rate of a coloring over examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionSummary {
    pub avg_cc: f64,
    /// Fraction of active test features absent from the coloring.
    pub unseen_feature_rate: f64,
}

pub fn collision_summary(c: &Coloring, examples: &[Example]) -> CollisionSummary {
    let mut cc = 0usize;
    let mut unseen = 0usize;
    let mut total = 0usize;
    for ex in examples {
        let r = collision_count(c, ex);
        cc += r.collisions;
        unseen += r.unseen;
        total += ex.active.len();
    }
    CollisionSummary {
        avg_cc: cc as f64 / examples.len().max(1) as f64,
        unseen_feature_rate: unseen as f64 / total.max(1) as f64,
    }
}

pub fn mean_new_edges(g: &CooccurrenceGraph, examples: &[Example]) -> f64 {
    let total: usize = examples.iter().map(|t| new_edge_count(g, t)).sum();
    total as f64 / examples.len().max(1) as f64
}

/// Number of Glauber transitions: `scale` times the default, optionally capped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlauberBudget {
    pub scale: f64,
    pub max_steps: Option<u64>,
}

impl Default for GlauberBudget {
    fn default() -> Self {
        Self {
            scale: 1.0,
            max_steps: None,
        }
    }
}

impl GlauberBudget {
    pub fn steps(&self, m: usize, v: usize) -> u64 {
        let steps = (default_glauber_steps(m, v) as f64 * self.scale).ceil() as u64;
        match self.max_steps {
            Some(cap) if steps > cap => {
                log::warn!("glauber: capping {steps} steps at {cap} (m={m}, {v} vertices)");
                cap
            }
            _ => steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelityConfig {
    pub thresholds: Vec<u32>,
    pub delta: f64,
    pub greedy_order: VertexOrder,
    /// Seed for the uniform (filtered + Glauber) coloring; `None` skips it.
    pub uniform_seed: Option<u64>,
    pub glauber: GlauberBudget,
    /// Inner color counts of the collision curve, as multiples of `Δ_f + 1`.
    pub curve_factors: Vec<f64>,
    pub workers: usize,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![1, 2, 3, 4],
            delta: 0.01,
            greedy_order: VertexOrder::FirstSeen,
            uniform_seed: Some(0),
            glauber: GlauberBudget::default(),
            curve_factors: vec![1.0, 1.5, 2.0, 3.0, 4.0],
            workers: 1,
        }
    }
}

/// One row per threshold `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub k: u32,
    pub edges: usize,
    pub delta_k: usize,
    /// `N^(k)/n` on the full thresholded graph.
    pub good_turing: f64,
    /// Held-out mean of `|K(T) ∖ E^(k)|`.
    pub new_edges: f64,
    pub held_out: usize,
    pub delta_f: usize,
    /// `N_f^(k)/n` on the filtered graph.
    pub good_turing_filtered: f64,
    /// Held-out mean of new edges among filtered vertices.
    pub new_edges_filtered: f64,
    pub m_f: RequiredColors,
    pub greedy_colors: u32,
    pub greedy_cc: f64,
    pub uniform_colors: Option<u32>,
    pub uniform_cc: Option<f64>,
    /// `(total colors, avg CC)` of uniform colorings over the configured
    /// inner color counts; empty without a uniform seed.
    pub uniform_curve: Vec<(u32, f64)>,
    pub unseen_feature_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub n: usize,
    pub eta: usize,
    pub test_examples: usize,
    pub delta: f64,
    pub rows: Vec<FidelityRow>,
}

/// Examples restricted to features kept by `keep` (used for filtered-graph diagnostics).
fn restrict_examples(examples: &[Example], keep: impl Fn(u64) -> bool) -> Vec<Example> {
    examples
        .iter()
        .map(|ex| Example::new(ex.label, ex.active.iter().copied().filter(|&f| keep(f))))
        .collect()
}

/// Uniform coloring of the filtered graph with `inner_colors` colors plus
/// one fresh color per held-out vertex.
pub fn uniform_coloring(
    fr: &FilterResult,
    inner_colors: usize,
    budget: GlauberBudget,
    seed: u64,
) -> Result<Coloring, FidelityError> {
    let g = &fr.filtered_graph;
    let steps = budget.steps(inner_colors, g.num_vertices());
    let inner = glauber_sample(g, inner_colors, steps, seed)?;
    Ok(combine_filtered_coloring(fr, &inner)?)
}

/// Average test collisions of uniform colorings as the inner color count varies.
/// Returns `(total colors, avg CC)` pairs; counts below `Δ_f + 1` are skipped.
pub fn uniform_cc_curve(
    fr: &FilterResult,
    test: &[Example],
    inner_colors: &[usize],
    budget: GlauberBudget,
    seed: u64,
) -> Result<Vec<(u32, f64)>, FidelityError> {
    let mut curve = Vec::new();
    for &m in inner_colors {
        if m < fr.delta_f + 1 {
            continue;
        }
        let c = uniform_coloring(fr, m, budget, seed)?;
        curve.push((c.num_colors(), collision_summary(&c, test).avg_cc));
    }
    Ok(curve)
}

/// Computes a [`FidelityRow`] for every configured threshold from the exact
/// training multiplicities. Test labels are never read.
pub fn fidelity_report(
    train: &SparseDataset,
    counts: &EdgeCounts,
    test: &SparseDataset,
    config: &FidelityConfig,
) -> Result<FidelityReport, FidelityError> {
    if train.is_empty() {
        return Err(FidelityError::EmptySample);
    }
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(FidelityError::Delta(config.delta));
    }
    let table = VertexTable::from_dataset(train);
    let n = train.n();
    let histogram = counts.histogram();
    let mut rows = Vec::with_capacity(config.thresholds.len());
    for &k in &config.thresholds {
        if k == 0 {
            return Err(FidelityError::Threshold);
        }
        let g = graph_from_counts(&table, counts, k, config.workers)?;
        let fr = filter_high_degree(&g);
        let held: std::collections::HashSet<u64> = fr.held_out.iter().copied().collect();
        let filtered_hist = counts
            .restrict(|e| !held.contains(&e.u()) && !held.contains(&e.v()))
            .histogram();
        let n_f = good_turing(&filtered_hist, k);
        let m_f = required_colors(
            &BudgetInputs {
                held_out: fr.held_out.len(),
                delta_f: fr.delta_f,
                n_f,
                n,
                k,
                eta: train.eta,
            },
            config.delta,
        )?;

        let filtered_test = restrict_examples(&test.examples, |f| !held.contains(&f));
        let greedy = greedy_color(&g, config.greedy_order);
        let greedy_summary = collision_summary(&greedy, &test.examples);

        let (uniform_colors, uniform_cc, uniform_curve) = match config.uniform_seed {
            Some(seed) => {
                let inner = (m_f.ceiled as usize)
                    .saturating_sub(fr.held_out.len())
                    .max(fr.delta_f + 1);
                let c = uniform_coloring(&fr, inner, config.glauber, seed)?;
                let base = (fr.delta_f + 1) as f64;
                let mut counts: Vec<usize> =
                    config.curve_factors.iter().map(|&x| (x * base).ceil() as usize).collect();
                counts.sort_unstable();
                counts.dedup();
                let curve = uniform_cc_curve(&fr, &test.examples, &counts, config.glauber, seed)?;
                (Some(c.num_colors()), Some(collision_summary(&c, &test.examples).avg_cc), curve)
            }
            None => (None, None, Vec::new()),
        };

        rows.push(FidelityRow {
            k,
            edges: g.num_edges(),
            delta_k: g.max_degree(),
            good_turing: good_turing(&histogram, k) as f64 / n as f64,
            new_edges: mean_new_edges(&g, &test.examples),
            held_out: fr.held_out.len(),
            delta_f: fr.delta_f,
            good_turing_filtered: n_f as f64 / n as f64,
            new_edges_filtered: mean_new_edges(&fr.filtered_graph, &filtered_test),
            m_f,
            greedy_colors: greedy.num_colors(),
            greedy_cc: greedy_summary.avg_cc,
            uniform_colors,
            uniform_cc,
            uniform_curve,
            unseen_feature_rate: greedy_summary.unseen_feature_rate,
        });
    }
    Ok(FidelityReport {
        n,
        eta: train.eta,
        test_examples: test.n(),
        delta: config.delta,
        rows,
    })
}
