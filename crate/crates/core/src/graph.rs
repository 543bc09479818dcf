//! Feature co-occurrence graphs.
//!
//! Edges are the union of the cliques `K(T)` over every example's active set
//! `T`. Counting is sharded: the edge hash space is split into `W = α·P`
//! shards, each worker fills one small local buffer per shard and, when a
//! buffer fills, merges it into that shard's global map while holding only
//! that shard's lock. Maps keep multiplicities, so the same pass yields the
//! edge-multiplicity histogram and every thresholded graph `G^(k)`.
//!
//! Adjacency is CSR over vertex indices. Vertex indices follow ascending
//! [`FeatureId`], so sorted neighbor lists are sorted by id as well.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::sync::Mutex;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::{xxh3_128, xxh3_64};

use crate::bloom::{BloomError, BloomFilter};
use crate::dataset::{FeatureId, SparseDataset};

const GRAPH_MAGIC: &[u8; 8] = b"CLGRAPH1";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("edge budget exhausted after {edges} distinct edges")]
    EdgeBudgetExceeded { edges: usize },
    #[error("edge references unknown vertex {0}")]
    UnknownVertex(FeatureId),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(FeatureId, FeatureId),
    #[error("threshold k must be at least {min}, got {k}")]
    Threshold { k: u32, min: u32 },
    #[error("invalid build configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Bloom(#[from] BloomError),
    #[error("graph file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Unordered feature pair stored canonically with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    u: FeatureId,
    v: FeatureId,
}

impl Edge {
    /// Canonical edge between two distinct features; `None` for a self-loop.
    pub fn new(a: FeatureId, b: FeatureId) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { u: a, v: b }),
            std::cmp::Ordering::Greater => Some(Self { u: b, v: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn u(&self) -> FeatureId {
        self.u
    }

    pub fn v(&self) -> FeatureId {
        self.v
    }

    fn key(&self) -> [u8; 16] {
        let mut key = [0u8; 16];
        key[..8].copy_from_slice(&self.u.to_le_bytes());
        key[8..].copy_from_slice(&self.v.to_le_bytes());
        key
    }

    fn hash64(&self) -> u64 {
        xxh3_64(&self.key())
    }

    fn hash128(&self) -> u128 {
        xxh3_128(&self.key())
    }
}

/// All edges of the complete graph on a sorted, duplicate-free active set.
pub fn clique_edges(active: &[FeatureId]) -> impl Iterator<Item = Edge> + '_ {
    active.iter().enumerate().flat_map(move |(i, &a)| {
        active[i + 1..].iter().map(move |&b| Edge { u: a, v: b })
    })
}

/// Count of edges by exact multiplicity `#(e)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeHistogram {
    counts: BTreeMap<u32, u64>,
}

impl EdgeHistogram {
    /// Number of edges that appear exactly `j` times.
    pub fn get(&self, j: u32) -> u64 {
        self.counts.get(&j).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts.iter().map(|(&j, &c)| (j, c))
    }

    pub fn total_edges(&self) -> u64 {
        self.counts.values().sum()
    }

    /// `|E^(k)|`, edges appearing at least `k` times.
    pub fn edges_at_least(&self, k: u32) -> u64 {
        self.counts.range(k..).map(|(_, &c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

impl FromIterator<(u32, u64)> for EdgeHistogram {
    fn from_iter<I: IntoIterator<Item = (u32, u64)>>(iter: I) -> Self {
        let mut counts = BTreeMap::new();
        for (j, c) in iter {
            if c > 0 {
                *counts.entry(j).or_insert(0) += c;
            }
        }
        Self { counts }
    }
}

/// Every distinct edge with its multiplicity, sorted by edge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeCounts {
    counts: Vec<(Edge, u32)>,
}

impl EdgeCounts {
    pub fn from_sorted(counts: Vec<(Edge, u32)>) -> Self {
        debug_assert!(counts.windows(2).all(|w| w[0].0 < w[1].0));
        Self { counts }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Edge, u32)> + '_ {
        self.counts.iter().copied()
    }

    pub fn get(&self, e: &Edge) -> u32 {
        self.counts
            .binary_search_by(|(x, _)| x.cmp(e))
            .map(|i| self.counts[i].1)
            .unwrap_or(0)
    }

    pub fn histogram(&self) -> EdgeHistogram {
        let mut counts = BTreeMap::new();
        for &(_, c) in &self.counts {
            *counts.entry(c).or_insert(0) += 1;
        }
        EdgeHistogram { counts }
    }

    /// Edges of `E^(k)`, sorted.
    pub fn threshold(&self, k: u32) -> Vec<Edge> {
        self.counts
            .iter()
            .filter(|&&(_, c)| c >= k)
            .map(|&(e, _)| e)
            .collect()
    }

    /// Counts restricted to edges accepted by `keep`.
    pub fn restrict(&self, keep: impl Fn(&Edge) -> bool) -> Self {
        Self {
            counts: self.counts.iter().filter(|(e, _)| keep(e)).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Worker threads `P`.
    pub workers: usize,
    /// Shards per worker `α`; `W = α·P` shards in total.
    pub shard_factor: usize,
    /// Local buffer capacity per shard per worker.
    pub buffer_capacity: usize,
    /// Optional cap on distinct edges; exceeding it is reported as an error.
    pub max_edges: Option<usize>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            workers: 1,
            shard_factor: 1,
            buffer_capacity: 4096,
            max_edges: None,
        }
    }
}

impl BuildConfig {
    pub fn with_workers(workers: usize) -> Self {
        Self {
            workers,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), GraphError> {
        if self.workers == 0 {
            return Err(GraphError::Config("workers must be at least 1".into()));
        }
        if self.shard_factor == 0 {
            return Err(GraphError::Config("shard factor must be at least 1".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(GraphError::Config("buffer capacity must be at least 1".into()));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool, GraphError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| GraphError::Config(e.to_string()))
    }
}

type Keep<'a> = Option<&'a (dyn Fn(&Edge) -> bool + Sync)>;

struct ShardedCounter<'a> {
    shards: Vec<Mutex<HashMap<Edge, u32>>>,
    distinct: AtomicUsize,
    overflow: AtomicBool,
    max_edges: Option<usize>,
    keep: Keep<'a>,
}

impl<'a> ShardedCounter<'a> {
    fn new(nshards: usize, max_edges: Option<usize>, keep: Keep<'a>) -> Self {
        Self {
            shards: (0..nshards).map(|_| Mutex::new(HashMap::new())).collect(),
            distinct: AtomicUsize::new(0),
            overflow: AtomicBool::new(false),
            max_edges,
            keep,
        }
    }

    fn shard_of(&self, e: &Edge) -> usize {
        ((u128::from(e.hash64()) * self.shards.len() as u128) >> 64) as usize
    }

    fn flush(&self, shard: usize, buffer: &mut Vec<Edge>) {
        let mut map = self.shards[shard].lock().expect("shard lock poisoned");
        let mut added = 0;
        for e in buffer.drain(..) {
            let count = map.entry(e).or_insert(0);
            if *count == 0 {
                added += 1;
            }
            *count += 1;
        }
        drop(map);
        let total = self.distinct.fetch_add(added, Ordering::Relaxed) + added;
        if self.max_edges.is_some_and(|max| total > max) {
            self.overflow.store(true, Ordering::Relaxed);
        }
    }

    fn run(&self, chunk: &[crate::dataset::Example], capacity: usize) {
        let mut buffers: Vec<Vec<Edge>> =
            (0..self.shards.len()).map(|_| Vec::with_capacity(capacity)).collect();
        for ex in chunk {
            if self.overflow.load(Ordering::Relaxed) {
                return;
            }
            for e in clique_edges(&ex.active) {
                if self.keep.is_some_and(|keep| !keep(&e)) {
                    continue;
                }
                let s = self.shard_of(&e);
                buffers[s].push(e);
                if buffers[s].len() >= capacity {
                    self.flush(s, &mut buffers[s]);
                }
            }
        }
        for (s, buffer) in buffers.iter_mut().enumerate() {
            if !buffer.is_empty() {
                self.flush(s, buffer);
            }
        }
    }

    fn finish(self) -> Result<EdgeCounts, GraphError> {
        if self.overflow.load(Ordering::Relaxed) {
            return Err(GraphError::EdgeBudgetExceeded {
                edges: self.distinct.load(Ordering::Relaxed),
            });
        }
        let mut counts: Vec<(Edge, u32)> = self
            .shards
            .into_iter()
            .flat_map(|m| m.into_inner().expect("shard lock poisoned"))
            .collect();
        counts.par_sort_unstable_by_key(|&(e, _)| e);
        Ok(EdgeCounts { counts })
    }
}

fn count_sharded(
    train: &SparseDataset,
    config: &BuildConfig,
    keep: Keep<'_>,
) -> Result<EdgeCounts, GraphError> {
    config.validate()?;
    let counter = ShardedCounter::new(config.workers * config.shard_factor, config.max_edges, keep);
    let chunk = train.n().div_ceil(config.workers).max(1);
    std::thread::scope(|scope| {
        for part in train.examples.chunks(chunk) {
            let counter = &counter;
            scope.spawn(move || counter.run(part, config.buffer_capacity));
        }
    });
    counter.finish()
}

/// Exact multiplicities of every co-occurring pair, independent of worker
/// count and scheduling.
pub fn count_cooccurrences(
    train: &SparseDataset,
    config: &BuildConfig,
) -> Result<EdgeCounts, GraphError> {
    count_sharded(train, config, None)
}

/// Vertex set of a dataset: sorted ids, occurrence counts and first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VertexTable {
    pub ids: Vec<FeatureId>,
    pub frequency: Vec<u64>,
    pub first_seen: Vec<u32>,
}

impl VertexTable {
    pub fn from_dataset(ds: &SparseDataset) -> Self {
        let mut ids: Vec<FeatureId> = ds.feature_freq.keys().copied().collect();
        ids.sort_unstable();
        let frequency = ids.iter().map(|f| ds.feature_freq[f]).collect();
        let mut seen = vec![false; ids.len()];
        let mut first_seen = Vec::with_capacity(ids.len());
        for ex in &ds.examples {
            for f in &ex.active {
                let i = ids.binary_search(f).expect("feature in frequency table");
                if !seen[i] {
                    seen[i] = true;
                    first_seen.push(i as u32);
                }
            }
        }
        Self {
            ids,
            frequency,
            first_seen,
        }
    }

    /// Vertices with unknown frequency; first-seen order is ascending id.
    pub fn from_ids(ids: impl IntoIterator<Item = FeatureId>) -> Self {
        let mut ids: Vec<FeatureId> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        Self {
            frequency: vec![0; ids.len()],
            first_seen: (0..ids.len() as u32).collect(),
            ids,
        }
    }
}

/// Undirected simple graph in CSR form over features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceGraph {
    vertices: Vec<FeatureId>,
    frequency: Vec<u64>,
    first_seen: Vec<u32>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    k: u32,
    max_degree: usize,
}

impl CooccurrenceGraph {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn threshold(&self) -> u32 {
        self.k
    }

    pub fn vertex_ids(&self) -> &[FeatureId] {
        &self.vertices
    }

    pub fn vertex_id(&self, v: usize) -> FeatureId {
        self.vertices[v]
    }

    /// Training occurrence count of vertex `v` (0 when unknown).
    pub fn frequency(&self, v: usize) -> u64 {
        self.frequency[v]
    }

    /// Vertex indices in order of first appearance in the training data.
    pub fn first_seen(&self) -> &[u32] {
        &self.first_seen
    }

    pub fn index_of(&self, id: FeatureId) -> Option<usize> {
        self.vertices.binary_search(&id).ok()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors(a).binary_search(&(b as u32)).is_ok()
    }

    /// Whether the features `a` and `b` are adjacent.
    pub fn has_edge_ids(&self, a: FeatureId, b: FeatureId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(a), Some(b)) => self.has_edge(a, b),
            _ => false,
        }
    }

    /// Edges as vertex-index pairs `(a, b)` with `a < b`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_vertices()).flat_map(move |a| {
            self.neighbors(a)
                .iter()
                .map(|&b| b as usize)
                .filter(move |&b| a < b)
                .map(move |b| (a, b))
        })
    }

    /// Canonical feature edges in sorted order.
    pub fn feature_edges(&self) -> Vec<Edge> {
        self.edges()
            .map(|(a, b)| Edge {
                u: self.vertices[a],
                v: self.vertices[b],
            })
            .collect()
    }

    /// Subgraph induced by the vertices with `keep[v]` set.
    pub fn induced_subgraph(&self, keep: &[bool]) -> Self {
        assert_eq!(keep.len(), self.num_vertices());
        let mut remap = vec![u32::MAX; keep.len()];
        let mut vertices = Vec::new();
        let mut frequency = Vec::new();
        for v in (0..keep.len()).filter(|&v| keep[v]) {
            remap[v] = vertices.len() as u32;
            vertices.push(self.vertices[v]);
            frequency.push(self.frequency[v]);
        }
        let mut offsets = Vec::with_capacity(vertices.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for v in (0..keep.len()).filter(|&v| keep[v]) {
            neighbors.extend(
                self.neighbors(v)
                    .iter()
                    .filter(|&&u| keep[u as usize])
                    .map(|&u| remap[u as usize]),
            );
            offsets.push(neighbors.len());
        }
        let first_seen = self
            .first_seen
            .iter()
            .filter(|&&v| keep[v as usize])
            .map(|&v| remap[v as usize])
            .collect();
        let max_degree = offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
        Self {
            vertices,
            frequency,
            first_seen,
            offsets,
            neighbors,
            k: self.k,
            max_degree,
        }
    }

    pub fn stats(&self) -> GraphStats {
        degree_stats(self)
    }
}

/// Builds CSR adjacency from canonical edges in parallel: atomic degree
/// counts, a prefix sum over degrees for offsets, then an atomic-cursor fill.
/// Neighbor lists are sorted afterwards, so the result equals a serial build.
pub fn to_adjacency(
    edges: &[Edge],
    vertices: &[FeatureId],
    workers: usize,
) -> Result<CooccurrenceGraph, GraphError> {
    assemble(VertexTable::from_ids(vertices.iter().copied()), edges, 1, workers)
}

fn assemble(
    table: VertexTable,
    edges: &[Edge],
    k: u32,
    workers: usize,
) -> Result<CooccurrenceGraph, GraphError> {
    let pool = BuildConfig::with_workers(workers.max(1)).pool()?;
    pool.install(|| {
        let ids = &table.ids;
        let lookup = |f: FeatureId| {
            ids.binary_search(&f)
                .map(|i| i as u32)
                .map_err(|_| GraphError::UnknownVertex(f))
        };
        let pairs: Vec<(u32, u32)> = edges
            .par_iter()
            .map(|e| Ok((lookup(e.u)?, lookup(e.v)?)))
            .collect::<Result<_, GraphError>>()?;

        let nv = ids.len();
        let degree: Vec<AtomicU32> = (0..nv).map(|_| AtomicU32::new(0)).collect();
        pairs.par_iter().for_each(|&(a, b)| {
            degree[a as usize].fetch_add(1, Ordering::Relaxed);
            degree[b as usize].fetch_add(1, Ordering::Relaxed);
        });
        let mut offsets = Vec::with_capacity(nv + 1);
        offsets.push(0usize);
        let mut total = 0usize;
        for d in &degree {
            total += d.load(Ordering::Relaxed) as usize;
            offsets.push(total);
        }

        let cursor: Vec<AtomicUsize> = offsets[..nv].iter().map(|&o| AtomicUsize::new(o)).collect();
        let slots: Vec<AtomicU32> = (0..total).map(|_| AtomicU32::new(0)).collect();
        pairs.par_iter().for_each(|&(a, b)| {
            let p = cursor[a as usize].fetch_add(1, Ordering::Relaxed);
            slots[p].store(b, Ordering::Relaxed);
            let q = cursor[b as usize].fetch_add(1, Ordering::Relaxed);
            slots[q].store(a, Ordering::Relaxed);
        });
        let mut neighbors: Vec<u32> = slots.into_iter().map(AtomicU32::into_inner).collect();

        let mut segments = Vec::with_capacity(nv);
        let mut rest = neighbors.as_mut_slice();
        for w in offsets.windows(2) {
            let (head, tail) = rest.split_at_mut(w[1] - w[0]);
            segments.push(head);
            rest = tail;
        }
        segments.par_iter_mut().for_each(|s| s.sort_unstable());
        for (v, s) in segments.iter().enumerate() {
            if let Some(w) = s.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateEdge(ids[v], ids[w[0] as usize]));
            }
        }

        let max_degree = offsets.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
        Ok(CooccurrenceGraph {
            vertices: table.ids,
            frequency: table.frequency,
            first_seen: table.first_seen,
            offsets,
            neighbors,
            k,
            max_degree,
        })
    })
}

/// Graph `G^(k)` from precomputed multiplicities. Vertices are every feature of
/// the training data, whether or not it keeps an edge.
pub fn graph_from_counts(
    table: &VertexTable,
    counts: &EdgeCounts,
    k: u32,
    workers: usize,
) -> Result<CooccurrenceGraph, GraphError> {
    if k == 0 {
        return Err(GraphError::Threshold { k, min: 1 });
    }
    assemble(table.clone(), &counts.threshold(k), k, workers)
}

/// The full co-occurrence graph (`k = 1`) and its multiplicity histogram.
pub fn build_cooccurrence(
    train: &SparseDataset,
    config: &BuildConfig,
) -> Result<(CooccurrenceGraph, EdgeHistogram), GraphError> {
    let counts = count_cooccurrences(train, config)?;
    let graph = graph_from_counts(&VertexTable::from_dataset(train), &counts, 1, config.workers)?;
    Ok((graph, counts.histogram()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Count all multiplicities, then keep edges with `#(e) ≥ k`.
    Exact,
    /// Rolling bloom prefilter followed by an exact count of surviving edges.
    Bloom { fp_rate: f64, expected_edges: usize },
}

/// `G^(k)` for `k ≥ 2`.
///
/// The bloom mode runs a first pass with `k` filters: an edge occurrence is
/// inserted into the first filter that does not yet contain it, so an edge
/// seen `k` times is present in all `k`. The second pass counts exactly only
/// the edges the last filter reports, so false positives cost work but never
/// change the result.
pub fn build_thresholded(
    train: &SparseDataset,
    k: u32,
    mode: ThresholdMode,
    config: &BuildConfig,
) -> Result<CooccurrenceGraph, GraphError> {
    if k < 2 {
        return Err(GraphError::Threshold { k, min: 2 });
    }
    let table = VertexTable::from_dataset(train);
    let counts = match mode {
        ThresholdMode::Exact => count_cooccurrences(train, config)?,
        ThresholdMode::Bloom {
            fp_rate,
            expected_edges,
        } => {
            let mut filters = (0..k)
                .map(|_| BloomFilter::with_rate(expected_edges, fp_rate))
                .collect::<Result<Vec<_>, _>>()?;
            for ex in &train.examples {
                for e in clique_edges(&ex.active) {
                    let h = e.hash128();
                    if let Some(f) = filters.iter_mut().find(|f| !f.contains(h)) {
                        f.insert(h);
                    }
                }
            }
            let last = filters.pop().expect("k >= 2 filters");
            let keep = move |e: &Edge| last.contains(e.hash128());
            count_sharded(train, config, Some(&keep))?
        }
    };
    assemble(table, &counts.threshold(k), k, config.workers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub k: u32,
    pub vertices: usize,
    pub edges: usize,
    pub max_degree: usize,
    pub avg_degree: f64,
}

/// Degree summary; the average is `2|E|/|V|` over all vertices present in the data.
pub fn degree_stats(g: &CooccurrenceGraph) -> GraphStats {
    let nv = g.num_vertices();
    GraphStats {
        k: g.k,
        vertices: nv,
        edges: g.num_edges(),
        max_degree: g.max_degree,
        avg_degree: if nv == 0 {
            0.0
        } else {
            2.0 * g.num_edges() as f64 / nv as f64
        },
    }
}

/// Per-example edge counts for a dataset, under both readings of "edges per example".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleEdgeStats {
    /// Mean `|K(T)|` over examples (multiset reading).
    pub pairs_per_example: f64,
    /// Distinct edges divided by example count (deduplicated reading).
    pub distinct_edges_per_example: f64,
}

pub fn example_edge_stats(ds: &SparseDataset, distinct_edges: usize) -> ExampleEdgeStats {
    let n = ds.n().max(1) as f64;
    let pairs: u64 = ds
        .examples
        .iter()
        .map(|e| {
            let t = e.active.len() as u64;
            t * t.saturating_sub(1) / 2
        })
        .sum();
    ExampleEdgeStats {
        pairs_per_example: pairs as f64 / n,
        distinct_edges_per_example: distinct_edges as f64 / n,
    }
}

/// Binary adjacency file, all little-endian: magic `CLGRAPH1`, u32 k, u64
/// vertex count, vertex ids (u64), frequencies (u64), first-seen order (u32),
/// degree array (u32), then the concatenated neighbor array (u32 indices).
pub fn write_graph<W: Write>(g: &CooccurrenceGraph, mut out: W) -> io::Result<()> {
    out.write_all(GRAPH_MAGIC)?;
    out.write_u32::<LittleEndian>(g.k)?;
    out.write_u64::<LittleEndian>(g.num_vertices() as u64)?;
    for &id in &g.vertices {
        out.write_u64::<LittleEndian>(id)?;
    }
    for &f in &g.frequency {
        out.write_u64::<LittleEndian>(f)?;
    }
    for &v in &g.first_seen {
        out.write_u32::<LittleEndian>(v)?;
    }
    for v in 0..g.num_vertices() {
        out.write_u32::<LittleEndian>(g.degree(v) as u32)?;
    }
    for &u in &g.neighbors {
        out.write_u32::<LittleEndian>(u)?;
    }
    out.flush()
}

pub fn read_graph<R: Read>(mut input: R) -> Result<CooccurrenceGraph, GraphError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != GRAPH_MAGIC {
        return Err(GraphError::Format("bad magic header".into()));
    }
    let k = input.read_u32::<LittleEndian>()?;
    let nv = input.read_u64::<LittleEndian>()? as usize;
    let mut vertices = vec![0u64; nv];
    input.read_u64_into::<LittleEndian>(&mut vertices)?;
    let mut frequency = vec![0u64; nv];
    input.read_u64_into::<LittleEndian>(&mut frequency)?;
    let mut first_seen = vec![0u32; nv];
    input.read_u32_into::<LittleEndian>(&mut first_seen)?;
    let mut degrees = vec![0u32; nv];
    input.read_u32_into::<LittleEndian>(&mut degrees)?;
    let mut offsets = Vec::with_capacity(nv + 1);
    offsets.push(0usize);
    for &d in &degrees {
        offsets.push(offsets.last().unwrap() + d as usize);
    }
    let mut neighbors = vec![0u32; offsets[nv]];
    input.read_u32_into::<LittleEndian>(&mut neighbors)?;
    if neighbors.iter().any(|&u| u as usize >= nv) {
        return Err(GraphError::Format("neighbor index out of range".into()));
    }
    let max_degree = degrees.iter().copied().max().unwrap_or(0) as usize;
    Ok(CooccurrenceGraph {
        vertices,
        frequency,
        first_seen,
        offsets,
        neighbors,
        k,
        max_degree,
    })
}
