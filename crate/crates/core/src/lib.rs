//! Chromatic compression of sparse binary feature data.
//!
//! Features that never co-occur in training can share a dense categorical
//! column. Coloring the feature co-occurrence graph assigns each feature such
//! a column (its color); categorical encoders then compress the colored
//! representation down to a fixed input budget for downstream models.
//!
//! The crate is organized by pipeline stage:
//!
//!  * [`dataset`]: libsvm ingestion, chronological and hash splits, dense feature detection.
//!  * [`graph`]: sharded parallel co-occurrence counting, thresholded graphs, adjacency.
//!  * [`coloring`]: greedy and largest-first orders, high-degree filtering, Glauber sampling.
//!  * [`fidelity`]: Good-Turing new-edge estimates, collision counts, color budgets.
//!  * [`encoders`]: chromatic submodular compression, target encoding, truncation, hashing.
//!  * [`linear`]: single-pass adaptive logistic regression and log loss.
//!  * [`synthetic`] and [`experiment`]: planted-structure data and the linear comparison.

pub mod bloom;
pub mod coloring;
pub mod dataset;
pub mod encoders;
pub mod experiment;
pub mod fidelity;
pub mod graph;
pub mod linear;
pub mod synthetic;

pub use coloring::{Coloring, FilterResult, VertexOrder};
pub use dataset::{Example, FeatureId, SparseDataset};
pub use encoders::{CollisionPolicy, EncodedExample, Encoder, EncoderKind};
pub use graph::{CooccurrenceGraph, Edge, EdgeCounts, EdgeHistogram};
pub use linear::{LinearConfig, LinearModel};
