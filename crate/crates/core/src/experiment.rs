//! The linear comparison: encode a chronologically split dataset with each
//! encoder at a given budget, train logistic regression, report log loss.
//!
//! Chromatic encoders that read labels (`CL+SM`, `CL+TE`) estimate their
//! statistics on one hash half of the training set and fit the model on the
//! other; the double-dipping variant uses the fit half for both. Encoders that
//! ignore labels train on the full training set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coloring::{greedy_color, Coloring, VertexOrder};
use crate::dataset::{
    chronological_split, detect_dense, hash_split_ratio, separate_dense, DatasetError, SparseDataset,
};
use crate::encoders::{collect_color_stats, CollisionPolicy, EncodeError, Encoder, EncoderKind, DEFAULT_SMOOTHING};
use crate::graph::{build_cooccurrence, build_thresholded, BuildConfig, GraphError, ThresholdMode};
use crate::linear::{accuracy, log_loss, train_logistic, LinearConfig, LinearError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train_fraction: f64,
    /// Share of the training set used to estimate encoder statistics.
    pub split_ratio: f64,
    /// Co-occurrence threshold of the colored graph.
    pub k: u32,
    /// Greedy order; saturation order keeps the color count, and with it the
    /// smallest feasible chromatic budget, low.
    pub order: VertexOrder,
    pub policy: CollisionPolicy,
    pub smoothing: f64,
    /// Row-frequency share above which a feature is treated as dense.
    pub dense_threshold: f64,
    pub linear: LinearConfig,
    pub workers: usize,
    /// Seed of the hashing trick.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            split_ratio: 0.5,
            k: 1,
            order: VertexOrder::Saturation,
            policy: CollisionPolicy::DropMorePopular,
            smoothing: DEFAULT_SMOOTHING,
            dense_threshold: 0.1,
            linear: LinearConfig::default(),
            workers: 1,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    // negated comparisons so that NaN fails validation
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let fail = |m: String| Err(ExperimentError::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return fail(format!("train fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return fail(format!("split ratio {} outside (0, 1)", self.split_ratio));
        }
        if self.k == 0 {
            return fail("threshold k must be at least 1".into());
        }
        if !(self.smoothing >= 0.0) {
            return fail(format!("smoothing {} must be non-negative", self.smoothing));
        }
        if !(self.dense_threshold > 0.0 && self.dense_threshold <= 1.0) {
            return fail(format!("dense threshold {} outside (0, 1]", self.dense_threshold));
        }
        if self.workers == 0 {
            return fail("workers must be at least 1".into());
        }
        if !(self.linear.learning_rate > 0.0) || self.linear.epochs == 0 {
            return fail("learning rate must be positive and epochs at least 1".into());
        }
        Ok(())
    }
}

/// Splits, dense separation and coloring shared by every encoder.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: SparseDataset,
    pub test: SparseDataset,
    pub estimate: SparseDataset,
    pub fit: SparseDataset,
    pub coloring: Coloring,
    pub dense_width: usize,
}

/// Chronological train/test split; features dense on the training set move
/// to the dense block of both sets.
pub fn split_train_test(
    ds: &SparseDataset,
    train_fraction: f64,
    dense_threshold: f64,
) -> Result<(SparseDataset, SparseDataset), DatasetError> {
    let (train, test) = chronological_split(ds, train_fraction)?;
    Ok(move_dense(train, test, dense_threshold))
}

/// Moves features dense on `train` into the dense block of both sets.
pub fn move_dense(train: SparseDataset, test: SparseDataset, dense_threshold: f64) -> (SparseDataset, SparseDataset) {
    let (dense, _) = detect_dense(&train, dense_threshold);
    if dense.is_empty() {
        return (train, test);
    }
    log::info!("{} dense features", dense.len());
    (separate_dense(&train, &dense), separate_dense(&test, &dense))
}

pub fn prepare(ds: &SparseDataset, cfg: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    cfg.validate()?;
    let (train, test) = split_train_test(ds, cfg.train_fraction, cfg.dense_threshold)?;
    let build = BuildConfig::with_workers(cfg.workers);
    let graph = if cfg.k == 1 {
        build_cooccurrence(&train, &build)?.0
    } else {
        build_thresholded(&train, cfg.k, ThresholdMode::Exact, &build)?
    };
    let coloring = greedy_color(&graph, cfg.order);
    log::info!(
        "graph: {} vertices, {} edges, max degree {}; greedy used {} colors",
        graph.num_vertices(),
        graph.num_edges(),
        graph.max_degree(),
        coloring.num_colors()
    );
    let (estimate, fit) = hash_split_ratio(&train, cfg.split_ratio);
    Ok(Prepared {
        dense_width: train.dense_ids.len(),
        train,
        test,
        estimate,
        fit,
        coloring,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub encoder: EncoderKind,
    pub budget: usize,
    pub output_dim: usize,
    /// Statistics and model fit on the same half.
    pub double_dip: bool,
    pub train_examples: usize,
    /// Mean log loss on the examples the model was trained on.
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// The set a model over `kind` trains on: the fit half for label-reading
/// encoders, the whole training set otherwise.
pub fn training_set(p: &Prepared, kind: EncoderKind) -> &SparseDataset {
    match kind {
        EncoderKind::Clsm | EncoderKind::Clte => &p.fit,
        _ => &p.train,
    }
}

/// Builds the encoder of `kind` at `budget` and the set its model trains on.
pub fn build_encoder<'a>(
    p: &'a Prepared,
    kind: EncoderKind,
    budget: usize,
    cfg: &ExperimentConfig,
    double_dip: bool,
) -> Result<(Encoder, &'a SparseDataset), ExperimentError> {
    let stats_half = if double_dip { &p.fit } else { &p.estimate };
    let enc = match kind {
        EncoderKind::Clsm => {
            let stats = collect_color_stats(&p.coloring, stats_half, cfg.policy);
            Encoder::chromatic_submodular(p.coloring.clone(), &stats, budget, cfg.policy)?
        }
        EncoderKind::Clte => {
            let stats = collect_color_stats(&p.coloring, stats_half, cfg.policy);
            Encoder::chromatic_target(p.coloring.clone(), &stats, cfg.smoothing, cfg.policy)
        }
        EncoderKind::Clft => Encoder::chromatic_truncation(p.coloring.clone(), &p.train, budget, cfg.policy)?,
        EncoderKind::Ft => Encoder::truncation(&p.train, budget)?,
        EncoderKind::Ht => Encoder::hashing(budget, cfg.seed)?,
    };
    Ok((enc.with_dense_width(p.dense_width), training_set(p, kind)))
}

pub fn evaluate_encoder(
    enc: &Encoder,
    fit_on: &SparseDataset,
    test: &SparseDataset,
    cfg: &ExperimentConfig,
) -> Result<(f64, f64, f64), ExperimentError> {
    let train_rows = enc.transform_all(fit_on);
    let model = train_logistic(&train_rows, enc.total_dim(), cfg.linear)?;
    let test_rows = enc.transform_all(test);
    Ok((
        log_loss(&model, &train_rows)?,
        log_loss(&model, &test_rows)?,
        accuracy(&model, &test_rows)?,
    ))
}

pub fn evaluate(
    p: &Prepared,
    kind: EncoderKind,
    budget: usize,
    cfg: &ExperimentConfig,
    double_dip: bool,
) -> Result<EvalRow, ExperimentError> {
    let (enc, fit_on) = build_encoder(p, kind, budget, cfg, double_dip)?;
    let (train_loss, test_loss, test_accuracy) = evaluate_encoder(&enc, fit_on, &p.test, cfg)?;
    Ok(EvalRow {
        encoder: kind,
        budget,
        output_dim: enc.output_dim,
        double_dip,
        train_examples: fit_on.n(),
        train_loss,
        test_loss,
        test_accuracy,
    })
}
