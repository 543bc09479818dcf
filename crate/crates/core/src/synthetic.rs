//! Planted-structure sparse data.
//!
//! Features are partitioned into `groups` mutually exclusive groups (feature
//! `f` belongs to group `f % groups`). Each example activates between
//! `min_nnz` and `max_nnz` distinct groups, chosen uniformly, and one feature
//! inside each, drawn from a Zipf law over the group's features. Labels follow
//! a logistic model whose per-feature weight is a group effect plus a smaller
//! feature-level deviation, and are then flipped with probability
//! `label_noise`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::dataset::{Example, FeatureId, SparseDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Number of latent groups (true colors).
    pub groups: usize,
    /// Total number of features, spread round-robin over the groups.
    pub features: usize,
    /// Number of examples.
    pub n: usize,
    pub min_nnz: usize,
    pub max_nnz: usize,
    /// Zipf exponent of feature popularity within a group.
    pub zipf_exponent: f64,
    /// Standard deviation of the per-group logit effect.
    pub group_scale: f64,
    /// Standard deviation of per-feature deviations from the group effect.
    pub feature_scale: f64,
    /// Logit intercept.
    pub bias: f64,
    /// Probability of flipping each label.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            groups: 64,
            features: 100_000,
            n: 200_000,
            min_nnz: 1,
            max_nnz: 10,
            zipf_exponent: 1.0,
            group_scale: 1.0,
            feature_scale: 0.5,
            bias: 0.0,
            label_noise: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.groups == 0 || self.features < self.groups {
            return Err(format!(
                "need at least one feature per group (groups {}, features {})",
                self.groups, self.features
            ));
        }
        if self.min_nnz == 0 || self.min_nnz > self.max_nnz || self.max_nnz > self.groups {
            return Err(format!(
                "nnz range {}..={} must be nonempty, start at 1 or more and not exceed the {} groups",
                self.min_nnz, self.max_nnz, self.groups
            ));
        }
        if !(0.0..=0.5).contains(&self.label_noise) {
            return Err(format!("label noise {} outside [0, 0.5]", self.label_noise));
        }
        if self.zipf_exponent < 0.0 || self.group_scale < 0.0 || self.feature_scale < 0.0 {
            return Err("zipf exponent and scales must be non-negative".into());
        }
        Ok(())
    }

    pub fn group_of(&self, f: FeatureId) -> usize {
        (f % self.groups as u64) as usize
    }

    fn group_size(&self, g: usize) -> usize {
        (self.features - g).div_ceil(self.groups)
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone)]
pub struct PlantedModel {
    pub group_effect: Vec<f64>,
    /// Logit weight of every feature, indexed by feature id.
    pub feature_weight: Vec<f64>,
}

pub fn planted_model(cfg: &SyntheticConfig) -> PlantedModel {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_9a7e);
    let group = Normal::new(0.0, cfg.group_scale).expect("finite scale");
    let feature = Normal::new(0.0, cfg.feature_scale).expect("finite scale");
    let group_effect: Vec<f64> = (0..cfg.groups).map(|_| group.sample(&mut rng)).collect();
    let feature_weight = (0..cfg.features)
        .map(|f| group_effect[f % cfg.groups] + feature.sample(&mut rng))
        .collect();
    PlantedModel {
        group_effect,
        feature_weight,
    }
}

/// Generates the dataset; identical configs give identical data.
pub fn generate(cfg: &SyntheticConfig) -> SparseDataset {
    cfg.validate().expect("invalid synthetic config");
    let model = planted_model(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let zipfs: Vec<Zipf<f64>> = (0..cfg.groups)
        .map(|g| Zipf::new(cfg.group_size(g) as f64, cfg.zipf_exponent).expect("valid zipf"))
        .collect();
    let examples = (0..cfg.n)
        .map(|_| {
            let nnz = rng.random_range(cfg.min_nnz..=cfg.max_nnz);
            let mut logit = cfg.bias;
            let features: Vec<FeatureId> = sample(&mut rng, cfg.groups, nnz)
                .into_iter()
                .map(|g| {
                    let rank = zipfs[g].sample(&mut rng) as usize - 1;
                    let f = g + rank * cfg.groups;
                    logit += model.feature_weight[f];
                    f as FeatureId
                })
                .collect();
            let p = 1.0 / (1.0 + (-logit).exp());
            let mut label = rng.random_bool(p);
            if rng.random_bool(cfg.label_noise) {
                label = !label;
            }
            Example::new(u8::from(label), features)
        })
        .collect();
    SparseDataset::from_examples(examples)
}
