//! Pipeline configuration: a JSON file, overridden by command-line flags.
//!
//! Every random choice derives from the top-level `seed`; resolving a config
//! copies it into the sections that carry their own seed field.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use chromatic::coloring::VertexOrder;
use chromatic::encoders::{CollisionPolicy, EncoderKind, DEFAULT_SMOOTHING};
use chromatic::experiment::ExperimentConfig;
use chromatic::fidelity::{FidelityConfig, GlauberBudget};
use chromatic::graph::{BuildConfig, ThresholdMode};
use chromatic::linear::LinearConfig;
use chromatic::synthetic::SyntheticConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; never changes results.
    pub workers: usize,
    pub data: DataSettings,
    pub graph: GraphSettings,
    pub coloring: ColoringSettings,
    pub fidelity: FidelitySettings,
    pub encoder: EncoderSettings,
    pub train: LinearConfig,
    pub report: ReportSettings,
}

/// Exactly one of `input` and `synthetic` must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSettings {
    /// libsvm file, in chronological order.
    pub input: Option<PathBuf>,
    /// Planted-structure generator: `groups` mutually exclusive feature groups
    /// (the latent colors) over `features` ids, `n` examples with
    /// `min_nnz..=max_nnz` active groups each, Zipf(`zipf_exponent`) feature
    /// popularity inside a group, logistic labels from group effects
    /// (`group_scale`) plus feature deviations (`feature_scale`), flipped with
    /// probability `label_noise`.
    pub synthetic: Option<SyntheticConfig>,
    pub train_fraction: f64,
    /// Exact training-set size; overrides `train_fraction` (for inputs that
    /// are a training file followed by a test file).
    pub train_examples: Option<usize>,
    /// Features active in more than this share of training rows become dense.
    pub dense_threshold: f64,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self {
            input: None,
            synthetic: None,
            train_fraction: 0.8,
            train_examples: None,
            dense_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSettings {
    /// Edges must co-occur in at least `k` training examples.
    pub k: u32,
    /// Counting strategy for `k ≥ 2`.
    pub threshold_mode: ThresholdMode,
    pub shard_factor: usize,
    pub buffer_capacity: usize,
}

impl Default for GraphSettings {
    fn default() -> Self {
        let build = BuildConfig::default();
        Self {
            k: 1,
            threshold_mode: ThresholdMode::Exact,
            shard_factor: build.shard_factor,
            buffer_capacity: build.buffer_capacity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColoringMode {
    #[default]
    Greedy,
    /// High-degree filtering, then Glauber sampling on the filtered graph.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColoringSettings {
    pub mode: ColoringMode,
    /// Greedy visiting order.
    pub order: VertexOrder,
    /// Inner colors of the uniform mode; defaults to `2Δ_f + 1`.
    pub colors: Option<usize>,
    pub glauber: GlauberBudget,
}

impl Default for ColoringSettings {
    fn default() -> Self {
        Self {
            mode: ColoringMode::Greedy,
            order: VertexOrder::Saturation,
            colors: None,
            glauber: GlauberBudget::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelitySettings {
    pub thresholds: Vec<u32>,
    pub delta: f64,
    /// Also sample uniform colorings and their collision curves.
    pub uniform: bool,
    pub glauber: GlauberBudget,
    pub curve_factors: Vec<f64>,
}

impl Default for FidelitySettings {
    fn default() -> Self {
        let core = FidelityConfig::default();
        Self {
            thresholds: core.thresholds,
            delta: core.delta,
            uniform: true,
            glauber: GlauberBudget {
                scale: 1.0,
                max_steps: Some(50_000_000),
            },
            curve_factors: core.curve_factors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSettings {
    pub kind: EncoderKind,
    pub budget: usize,
    pub policy: CollisionPolicy,
    pub smoothing: f64,
    /// Share of the training set that estimates label statistics.
    pub split_ratio: f64,
    /// Estimate statistics on the half the model is fit on.
    pub double_dip: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Clsm,
            budget: 256,
            policy: CollisionPolicy::DropMorePopular,
            smoothing: DEFAULT_SMOOTHING,
            split_ratio: 0.5,
            double_dip: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub budgets: Vec<usize>,
    pub encoders: Vec<EncoderKind>,
    /// Add CL+SM rows with statistics estimated on the fit half.
    pub double_dip: bool,
}

impl Default for ReportSettings {
    fn default() -> Self {
        Self {
            budgets: (6..=10).map(|p| 1 << p).collect(),
            encoders: EncoderKind::ALL.to_vec(),
            double_dip: true,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            data: DataSettings::default(),
            graph: GraphSettings::default(),
            coloring: ColoringSettings::default(),
            fidelity: FidelitySettings::default(),
            encoder: EncoderSettings::default(),
            train: LinearConfig::default(),
            report: ReportSettings::default(),
        }
    }
}

fn open_interval(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Copies the top-level seed into every section that has one.
    pub fn resolve(mut self) -> Self {
        if let Some(s) = &mut self.data.synthetic {
            s.seed = self.seed;
        }
        self.train.seed = self.seed;
        self
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            train_fraction: self.data.train_fraction,
            split_ratio: self.encoder.split_ratio,
            k: self.graph.k,
            order: self.coloring.order,
            policy: self.encoder.policy,
            smoothing: self.encoder.smoothing,
            dense_threshold: self.data.dense_threshold,
            linear: self.train,
            workers: self.workers,
            seed: self.seed,
        }
    }

    pub fn build(&self) -> BuildConfig {
        BuildConfig {
            workers: self.workers,
            shard_factor: self.graph.shard_factor,
            buffer_capacity: self.graph.buffer_capacity,
            max_edges: None,
        }
    }

    pub fn fidelity_config(&self) -> FidelityConfig {
        FidelityConfig {
            thresholds: self.fidelity.thresholds.clone(),
            delta: self.fidelity.delta,
            greedy_order: self.coloring.order,
            uniform_seed: self.fidelity.uniform.then_some(self.seed),
            glauber: self.fidelity.glauber,
            curve_factors: self.fidelity.curve_factors.clone(),
            workers: self.workers,
        }
    }

    /// Checks every field; runs before any data is read.
    pub fn validate(&self) -> Result<()> {
        match (&self.data.input, &self.data.synthetic) {
            (None, None) => bail!("no data source: set data.input (--input <libsvm>) or data.synthetic (--synthetic)"),
            (Some(_), Some(_)) => bail!("data.input and data.synthetic are mutually exclusive"),
            (Some(path), None) => ensure!(path.is_file(), "input file {} does not exist", path.display()),
            (None, Some(s)) => s.validate().map_err(|e| anyhow::anyhow!("data.synthetic: {e}"))?,
        }
        self.experiment().validate()?;
        ensure!(self.data.train_examples != Some(0), "data.train_examples must be positive");
        ensure!(self.graph.shard_factor > 0, "graph.shard_factor must be at least 1");
        ensure!(self.graph.buffer_capacity > 0, "graph.buffer_capacity must be at least 1");
        if let ThresholdMode::Bloom { fp_rate, expected_edges } = self.graph.threshold_mode {
            ensure!(open_interval(fp_rate), "bloom fp_rate {fp_rate} outside (0, 1)");
            ensure!(expected_edges > 0, "bloom expected_edges must be positive");
        }
        ensure!(self.coloring.colors != Some(0), "coloring.colors must be positive");
        for (name, g) in [("coloring", self.coloring.glauber), ("fidelity", self.fidelity.glauber)] {
            ensure!(g.scale > 0.0 && g.scale.is_finite(), "{name}.glauber.scale must be positive");
        }
        ensure!(!self.fidelity.thresholds.is_empty(), "fidelity.thresholds is empty");
        ensure!(self.fidelity.thresholds.iter().all(|&k| k >= 1), "fidelity thresholds must be at least 1");
        ensure!(open_interval(self.fidelity.delta), "fidelity.delta {} outside (0, 1)", self.fidelity.delta);
        ensure!(
            self.fidelity.curve_factors.iter().all(|&x| x >= 1.0 && x.is_finite()),
            "fidelity.curve_factors must be finite and at least 1"
        );
        ensure!(self.encoder.budget > 0, "encoder.budget must be positive");
        ensure!(self.train.l2 >= 0.0, "train.l2 must be non-negative");
        ensure!(!self.report.budgets.is_empty(), "report.budgets is empty");
        ensure!(self.report.budgets.iter().all(|&b| b > 0), "report budgets must be positive");
        ensure!(!self.report.encoders.is_empty(), "report.encoders is empty");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic() -> PipelineConfig {
        PipelineConfig {
            data: DataSettings {
                synthetic: Some(SyntheticConfig::default()),
                ..DataSettings::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn defaults_need_a_data_source() {
        let err = PipelineConfig::default().validate().unwrap_err().to_string();
        assert!(err.contains("--synthetic"), "{err}");
        assert!(synthetic().validate().is_ok());
    }

    #[test]
    fn json_round_trip_and_unknown_fields() {
        let cfg = synthetic();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 1}"#).is_err());
        let partial: PipelineConfig = serde_json::from_str(r#"{"graph": {"k": 3}}"#).unwrap();
        assert_eq!(partial.graph.k, 3);
        assert_eq!(partial.encoder, EncoderSettings::default());
    }

    #[test]
    fn resolve_propagates_seed() {
        let cfg = PipelineConfig { seed: 9, ..synthetic() }.resolve();
        assert_eq!(cfg.data.synthetic.unwrap().seed, 9);
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn rejects_bad_fields() {
        let mut cfg = synthetic();
        cfg.fidelity.delta = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = synthetic();
        cfg.graph.k = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = synthetic();
        cfg.report.budgets = vec![64, 0];
        assert!(cfg.validate().is_err());
        let mut cfg = synthetic();
        cfg.data.input = Some("/nonexistent/data.svm".into());
        assert!(cfg.validate().is_err());
    }
}
