//! Proper colorings of co-occurrence graphs.
//!
//! Greedy first-fit coloring is the fast path. The fidelity-oriented path
//! peels a largest-first prefix `W` of high-degree vertices until
//! `|W| ≥ 2·Δ_f`, samples a uniform coloring of the remainder with Glauber
//! dynamics, and gives every vertex of `W` a fresh color of its own.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

use crate::dataset::FeatureId;
use crate::graph::CooccurrenceGraph;

const COLORING_MAGIC: &[u8; 8] = b"CLCOLOR1";
const NO_COLOR: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum ColoringError {
    #[error("{m} colors cannot properly color a graph of max degree {max_degree}; need at least {}", max_degree + 1)]
    TooFewColors { m: usize, max_degree: usize },
    #[error("inner coloring does not cover filtered vertex {0}")]
    Uncovered(FeatureId),
    #[error("coloring file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Order in which greedy coloring visits vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VertexOrder {
    /// Order of first appearance in the training data.
    #[default]
    FirstSeen,
    AscendingId,
    /// Highest degree first, ties by ascending id.
    DegreeDescending,
    /// Largest-first peeling order (see [`largest_first_order`]).
    LargestFirst,
    /// Reverse of the order that repeatedly removes a minimum-degree vertex;
    /// uses at most `degeneracy + 1` colors.
    SmallestLast,
    /// Dynamic order: next the uncolored vertex seeing the most distinct
    /// neighbor colors, ties by degree, then by smaller index.
    Saturation,
}

/// Feature → color map. Colors are dense in `[0, m)` with `m = 1 + max color`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coloring {
    ids: Vec<FeatureId>,
    colors: Vec<u32>,
    popularity: Vec<u64>,
    m: u32,
}

impl Coloring {
    /// Builds a coloring from `(feature, color, popularity)` triples.
    pub fn from_parts(mut parts: Vec<(FeatureId, u32, u64)>) -> Self {
        parts.sort_unstable_by_key(|p| p.0);
        parts.dedup_by_key(|p| p.0);
        let m = parts.iter().map(|p| p.1 + 1).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(parts.len());
        let mut colors = Vec::with_capacity(parts.len());
        let mut popularity = Vec::with_capacity(parts.len());
        for (f, c, p) in parts {
            ids.push(f);
            colors.push(c);
            popularity.push(p);
        }
        Self {
            ids,
            colors,
            popularity,
            m,
        }
    }

    /// Wraps per-vertex colors of `g` (indexed like its vertices).
    pub fn from_graph(g: &CooccurrenceGraph, colors: Vec<u32>) -> Self {
        assert_eq!(colors.len(), g.num_vertices());
        debug_assert!(colors.iter().all(|&c| c != NO_COLOR));
        let m = colors.iter().map(|&c| c + 1).max().unwrap_or(0);
        Self {
            ids: g.vertex_ids().to_vec(),
            popularity: (0..g.num_vertices()).map(|v| g.frequency(v)).collect(),
            colors,
            m,
        }
    }

    pub fn num_colors(&self) -> u32 {
        self.m
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn color_of(&self, f: FeatureId) -> Option<u32> {
        self.ids.binary_search(&f).ok().map(|i| self.colors[i])
    }

    pub fn popularity_of(&self, f: FeatureId) -> Option<u64> {
        self.ids.binary_search(&f).ok().map(|i| self.popularity[i])
    }

    /// `(feature, color, popularity)` in ascending feature order.
    pub fn iter(&self) -> impl Iterator<Item = (FeatureId, u32, u64)> + '_ {
        (0..self.ids.len()).map(|i| (self.ids[i], self.colors[i], self.popularity[i]))
    }

    /// First edge of `g` whose endpoints share a color, or a vertex left uncolored.
    pub fn violation(&self, g: &CooccurrenceGraph) -> Option<(FeatureId, FeatureId)> {
        let colors: Vec<Option<u32>> =
            g.vertex_ids().iter().map(|&f| self.color_of(f)).collect();
        if let Some(v) = colors.iter().position(|c| c.is_none()) {
            let f = g.vertex_id(v);
            return Some((f, f));
        }
        g.edges()
            .find(|&(a, b)| colors[a] == colors[b])
            .map(|(a, b)| (g.vertex_id(a), g.vertex_id(b)))
    }

    pub fn is_proper_on(&self, g: &CooccurrenceGraph) -> bool {
        self.violation(g).is_none()
    }
}

fn vertex_order(g: &CooccurrenceGraph, order: VertexOrder) -> Vec<u32> {
    match order {
        VertexOrder::FirstSeen => g.first_seen().to_vec(),
        VertexOrder::AscendingId => (0..g.num_vertices() as u32).collect(),
        VertexOrder::DegreeDescending => {
            let mut vs: Vec<u32> = (0..g.num_vertices() as u32).collect();
            vs.sort_by_key(|&v| std::cmp::Reverse(g.degree(v as usize)));
            vs
        }
        VertexOrder::LargestFirst => largest_first_order(g).order,
        VertexOrder::SmallestLast => {
            let mut peel = peel_order(g, Peel::Smallest).order;
            peel.reverse();
            peel
        }
        VertexOrder::Saturation => unreachable!("saturation order is dynamic"),
    }
}

fn greedy_colors(g: &CooccurrenceGraph, order: VertexOrder) -> Vec<u32> {
    match order {
        VertexOrder::Saturation => saturation_colors(g),
        _ => first_fit(g, vertex_order(g, order)),
    }
}

/// First-fit in saturation order. Neighbor colors are tracked as per-vertex
/// bitsets; the queue holds `(saturation, degree, Reverse(index))`.
fn saturation_colors(g: &CooccurrenceGraph) -> Vec<u32> {
    use std::cmp::Reverse;
    let nv = g.num_vertices();
    let mut colors = vec![NO_COLOR; nv];
    let mut seen: Vec<Vec<u64>> = vec![Vec::new(); nv];
    let mut saturation = vec![0u32; nv];
    let mut queue: BTreeSet<(u32, usize, Reverse<u32>)> =
        (0..nv).map(|v| (0, g.degree(v), Reverse(v as u32))).collect();
    while let Some((_, _, Reverse(v))) = queue.pop_last() {
        let v = v as usize;
        let bits = &seen[v];
        let chosen = (0..)
            .find(|&c: &usize| bits.get(c / 64).is_none_or(|w| w >> (c % 64) & 1 == 0))
            .expect("a free color exists") as u32;
        colors[v] = chosen;
        let (word, bit) = (chosen as usize / 64, 1u64 << (chosen % 64));
        for &u in g.neighbors(v) {
            let u = u as usize;
            if colors[u] != NO_COLOR {
                continue;
            }
            let bits = &mut seen[u];
            if bits.len() <= word {
                bits.resize(word + 1, 0);
            }
            if bits[word] & bit == 0 {
                bits[word] |= bit;
                let key = (saturation[u], g.degree(u), Reverse(u as u32));
                queue.remove(&key);
                saturation[u] += 1;
                queue.insert((saturation[u], g.degree(u), Reverse(u as u32)));
            }
        }
    }
    colors
}

fn first_fit(g: &CooccurrenceGraph, visit: Vec<u32>) -> Vec<u32> {
    let mut colors = vec![NO_COLOR; g.num_vertices()];
    // stamp[c] == v + 1 marks color c as taken by a neighbor of v
    let mut stamp: Vec<u32> = Vec::new();
    debug_assert_eq!(visit.len(), g.num_vertices());
    for v in visit {
        let v = v as usize;
        let mark = v as u32 + 1;
        for &u in g.neighbors(v) {
            let c = colors[u as usize];
            if c != NO_COLOR && (c as usize) < stamp.len() {
                stamp[c as usize] = mark;
            }
        }
        let chosen = stamp.iter().position(|&s| s != mark).unwrap_or(stamp.len());
        if chosen == stamp.len() {
            stamp.push(0);
        }
        colors[v] = chosen as u32;
    }
    colors
}

/// First-fit greedy coloring in the given visiting order; uses at most `Δ+1` colors.
pub fn greedy_color(g: &CooccurrenceGraph, order: VertexOrder) -> Coloring {
    Coloring::from_graph(g, greedy_colors(g, order))
}

/// Largest-first ordering with the degree each vertex had when removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LargestFirst {
    /// Vertex indices; `order[i]` has maximum degree in the subgraph induced by `order[i..]`.
    pub order: Vec<u32>,
    /// `removal_degree[i]` is the degree of `order[i]` within `order[i..]`,
    /// i.e. the maximum degree of that induced subgraph.
    pub removal_degree: Vec<usize>,
}

impl LargestFirst {
    pub fn feature_order(&self, g: &CooccurrenceGraph) -> Vec<FeatureId> {
        self.order.iter().map(|&v| g.vertex_id(v as usize)).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Peel {
    Largest,
    Smallest,
}

/// Repeatedly removes a vertex of maximum remaining degree (smallest id on
/// ties) using buckets keyed by current degree.
pub fn largest_first_order(g: &CooccurrenceGraph) -> LargestFirst {
    peel_order(g, Peel::Largest)
}

fn peel_order(g: &CooccurrenceGraph, peel: Peel) -> LargestFirst {
    let nv = g.num_vertices();
    let mut degree: Vec<usize> = (0..nv).map(|v| g.degree(v)).collect();
    let mut buckets: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); g.max_degree() + 1];
    for v in 0..nv {
        buckets[degree[v]].insert(v as u32);
    }
    let mut removed = vec![false; nv];
    let mut cursor = match peel {
        Peel::Largest => g.max_degree(),
        Peel::Smallest => 0,
    };
    let mut order = Vec::with_capacity(nv);
    let mut removal_degree = Vec::with_capacity(nv);
    for _ in 0..nv {
        match peel {
            Peel::Largest => {
                while buckets[cursor].is_empty() {
                    cursor -= 1;
                }
            }
            Peel::Smallest => {
                // a removal lowers neighbor degrees by one, so step back at most one
                cursor = cursor.saturating_sub(1);
                while buckets[cursor].is_empty() {
                    cursor += 1;
                }
            }
        }
        let v = buckets[cursor].pop_first().expect("non-empty bucket");
        removed[v as usize] = true;
        order.push(v);
        removal_degree.push(cursor);
        for &u in g.neighbors(v as usize) {
            let u = u as usize;
            if !removed[u] {
                buckets[degree[u]].remove(&(u as u32));
                degree[u] -= 1;
                buckets[degree[u]].insert(u as u32);
            }
        }
    }
    LargestFirst {
        order,
        removal_degree,
    }
}

/// High-degree prefix `W` and the graph induced on the remaining vertices.
#[derive(Debug, Clone)]
pub struct FilterResult {
    /// Held-out features in largest-first order.
    pub held_out: Vec<FeatureId>,
    /// Training frequency of each held-out feature.
    pub held_out_popularity: Vec<u64>,
    pub filtered_graph: CooccurrenceGraph,
    pub delta_f: usize,
}

/// Smallest largest-first prefix `W` with `|W| ≥ 2·Δ(G∖W)`.
///
/// Removing the first `w` vertices of a largest-first order leaves a graph
/// whose maximum degree is `removal_degree[w]`, so the scan is linear.
pub fn filter_high_degree(g: &CooccurrenceGraph) -> FilterResult {
    let lf = largest_first_order(g);
    let nv = g.num_vertices();
    let remaining_delta = |w: usize| if w < nv { lf.removal_degree[w] } else { 0 };
    let w = (0..=nv)
        .find(|&w| w >= 2 * remaining_delta(w))
        .expect("w = |V| always qualifies");
    let mut keep = vec![true; nv];
    for &v in &lf.order[..w] {
        keep[v as usize] = false;
    }
    let filtered_graph = g.induced_subgraph(&keep);
    debug_assert_eq!(filtered_graph.max_degree(), remaining_delta(w));
    FilterResult {
        held_out: lf.order[..w].iter().map(|&v| g.vertex_id(v as usize)).collect(),
        held_out_popularity: lf.order[..w].iter().map(|&v| g.frequency(v as usize)).collect(),
        delta_f: filtered_graph.max_degree(),
        filtered_graph,
    }
}

/// `⌈m·v·ln v⌉` steps for `v` vertices and `m` colors.
pub fn default_glauber_steps(m: usize, v: usize) -> u64 {
    if v < 2 {
        return 0;
    }
    (m as f64 * v as f64 * (v as f64).ln()).ceil() as u64
}

/// Uniform integer in `[0, n)` by Lemire's multiply-and-reject method.
fn below(rng: &mut ChaCha8Rng, n: u32) -> u32 {
    let mut m = u64::from(rng.next_u32()) * u64::from(n);
    if (m as u32) < n {
        let threshold = n.wrapping_neg() % n;
        while (m as u32) < threshold {
            m = u64::from(rng.next_u32()) * u64::from(n);
        }
    }
    (m >> 32) as u32
}

/// Samples a proper coloring with `m` colors by running `steps` Glauber
/// transitions from the greedy coloring: pick a uniform vertex and recolor it
/// uniformly among the colors its neighbors do not use.
pub fn glauber_sample(
    g: &CooccurrenceGraph,
    m: usize,
    steps: u64,
    seed: u64,
) -> Result<Coloring, ColoringError> {
    let delta = g.max_degree();
    if m < delta + 1 {
        return Err(ColoringError::TooFewColors {
            m,
            max_degree: delta,
        });
    }
    if m <= 2 * delta {
        log::warn!("glauber with m={m} <= 2Δ={}: mixing is not guaranteed", 2 * delta);
    }
    let mut colors = greedy_colors(g, VertexOrder::FirstSeen);
    let nv = g.num_vertices();
    if nv == 0 {
        return Ok(Coloring::from_graph(g, colors));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stamp = vec![0u64; m];
    let (nv32, m32) = (nv as u32, m as u32);
    if m <= 64 {
        glauber_small_palette(g, &mut colors, m, steps, &mut rng);
        return Ok(Coloring::from_graph(g, colors));
    }
    for step in 1..=steps {
        let v = below(&mut rng, nv32) as usize;
        let mut blocked = 0;
        for &u in g.neighbors(v) {
            let c = colors[u as usize] as usize;
            if stamp[c] != step {
                stamp[c] = step;
                blocked += 1;
            }
        }
        let free = m - blocked;
        debug_assert!(free > 0, "vertex {v} blocked with m={m} >= Δ+1");
        colors[v] = if 2 * free >= m {
            loop {
                let c = below(&mut rng, m32);
                if stamp[c as usize] != step {
                    break c;
                }
            }
        } else {
            let r = below(&mut rng, free as u32) as usize;
            (0..m).filter(|&c| stamp[c] != step).nth(r).expect("r < free") as u32
        };
        if cfg!(debug_assertions) && step % 10_000 == 0 {
            debug_assert!(g.neighbors(v).iter().all(|&u| colors[u as usize] != colors[v]));
        }
    }
    Ok(Coloring::from_graph(g, colors))
}

/// Glauber transitions with the palette as a bitmask: the free colors of a
/// vertex are one word, and a single uniform draw picks among them.
fn glauber_small_palette(g: &CooccurrenceGraph, colors: &mut [u32], m: usize, steps: u64, rng: &mut ChaCha8Rng) {
    let palette = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
    let nv = colors.len() as u32;
    for step in 1..=steps {
        let v = below(rng, nv) as usize;
        let blocked = g
            .neighbors(v)
            .iter()
            .fold(0u64, |acc, &u| acc | 1u64 << colors[u as usize]);
        let mut free = palette & !blocked;
        debug_assert!(free != 0, "vertex {v} blocked with m={m} >= Δ+1");
        for _ in 0..below(rng, free.count_ones()) {
            free &= free - 1;
        }
        colors[v] = free.trailing_zeros();
        if cfg!(debug_assertions) && step % 10_000 == 0 {
            debug_assert!(g.neighbors(v).iter().all(|&u| colors[u as usize] != colors[v]));
        }
    }
}

/// Extends a coloring of the filtered graph with one fresh color per held-out vertex.
pub fn combine_filtered_coloring(
    fr: &FilterResult,
    inner: &Coloring,
) -> Result<Coloring, ColoringError> {
    let g = &fr.filtered_graph;
    let mut parts = Vec::with_capacity(g.num_vertices() + fr.held_out.len());
    for v in 0..g.num_vertices() {
        let f = g.vertex_id(v);
        let c = inner.color_of(f).ok_or(ColoringError::Uncovered(f))?;
        parts.push((f, c, inner.popularity_of(f).unwrap_or(g.frequency(v))));
    }
    let base = inner.num_colors();
    for (i, (&f, &p)) in fr.held_out.iter().zip(&fr.held_out_popularity).enumerate() {
        parts.push((f, base + i as u32, p));
    }
    let mut combined = Coloring::from_parts(parts);
    // keep inner's color range even if its top colors went unused
    combined.m = base + fr.held_out.len() as u32;
    Ok(combined)
}

/// Metadata written next to a coloring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColoringSummary {
    pub m: u32,
    pub method: String,
    pub order: VertexOrder,
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub requested_colors: Option<usize>,
    pub held_out: usize,
    pub delta_f: Option<usize>,
}

/// Binary color map, little-endian: magic `CLCOLOR1`, u32 m, u64 count, then
/// `(u64 feature, u32 color, u64 popularity)` records in ascending feature order.
pub fn write_coloring<W: Write>(c: &Coloring, mut out: W) -> io::Result<()> {
    out.write_all(COLORING_MAGIC)?;
    out.write_u32::<LittleEndian>(c.m)?;
    out.write_u64::<LittleEndian>(c.len() as u64)?;
    for (f, color, p) in c.iter() {
        out.write_u64::<LittleEndian>(f)?;
        out.write_u32::<LittleEndian>(color)?;
        out.write_u64::<LittleEndian>(p)?;
    }
    out.flush()
}

pub fn read_coloring<R: Read>(mut input: R) -> Result<Coloring, ColoringError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != COLORING_MAGIC {
        return Err(ColoringError::Format("bad magic header".into()));
    }
    let m = input.read_u32::<LittleEndian>()?;
    let len = input.read_u64::<LittleEndian>()? as usize;
    let mut parts = Vec::with_capacity(len);
    for _ in 0..len {
        let f = input.read_u64::<LittleEndian>()?;
        let c = input.read_u32::<LittleEndian>()?;
        let p = input.read_u64::<LittleEndian>()?;
        if c >= m {
            return Err(ColoringError::Format(format!("color {c} outside [0, {m})")));
        }
        parts.push((f, c, p));
    }
    let mut coloring = Coloring::from_parts(parts);
    coloring.m = m;
    Ok(coloring)
}
