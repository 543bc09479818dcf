//! Online logistic regression with per-coordinate adaptive step sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::EncodedExample;

/// Predictions are clipped to `[CLIP, 1 - CLIP]` before taking logs.
pub const CLIP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error("training diverged at epoch {epoch}, example {example}: {detail}")]
    Diverged {
        epoch: usize,
        example: usize,
        detail: String,
    },
    #[error("example {example} has column {column} outside the model width {dim}")]
    ColumnOutOfRange { example: usize, column: u32, dim: usize },
    #[error("cannot evaluate on an empty set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty added to every weight gradient (0 disables it).
    pub l2: f64,
    pub epsilon: f64,
    /// Recorded for provenance; training is deterministic and starts from zero.
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 1,
            l2: 0.0,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub config: LinearConfig,
    /// `dim` feature weights followed by the bias.
    pub weights: Vec<f64>,
    /// Running sums of squared gradients, shaped like `weights`.
    pub grad_sq: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Clipped binary cross-entropy of one prediction.
pub fn example_loss(p: f64, label: u8) -> f64 {
    let p = p.clamp(CLIP, 1.0 - CLIP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

impl LinearModel {
    pub fn new(dim: usize, config: LinearConfig) -> Self {
        Self {
            config,
            weights: vec![0.0; dim + 1],
            grad_sq: vec![0.0; dim + 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn margin(&self, x: &[(u32, f64)]) -> f64 {
        let bias = self.weights[self.dim()];
        x.iter().fold(bias, |acc, &(i, v)| acc + self.weights[i as usize] * v)
    }

    pub fn predict(&self, x: &[(u32, f64)]) -> f64 {
        sigmoid(self.margin(x))
    }

    fn step(&mut self, j: usize, g: f64) {
        self.grad_sq[j] += g * g;
        self.weights[j] -= self.config.learning_rate * g / (self.grad_sq[j] + self.config.epsilon).sqrt();
    }

    /// One online update; returns the example's loss before the update.
    pub fn update(&mut self, row: &EncodedExample) -> f64 {
        let p = self.predict(&row.features);
        let loss = example_loss(p, row.label);
        let residual = p - f64::from(row.label);
        let l2 = self.config.l2;
        for &(i, v) in &row.features {
            let j = i as usize;
            let g = residual * v + l2 * self.weights[j];
            self.step(j, g);
        }
        let bias = self.dim();
        self.step(bias, residual);
        loss
    }

    fn check_row(&self, idx: usize, row: &EncodedExample) -> Result<(), LinearError> {
        match row.features.iter().find(|&&(i, _)| i as usize >= self.dim()) {
            Some(&(column, _)) => Err(LinearError::ColumnOutOfRange {
                example: idx,
                column,
                dim: self.dim(),
            }),
            None => Ok(()),
        }
    }
}

/// Trains in dataset order for `config.epochs` passes.
pub fn train_logistic(
    rows: &[EncodedExample],
    dim: usize,
    config: LinearConfig,
) -> Result<LinearModel, LinearError> {
    let mut model = LinearModel::new(dim, config);
    for (idx, row) in rows.iter().enumerate() {
        model.check_row(idx, row)?;
    }
    for epoch in 0..config.epochs {
        for (idx, row) in rows.iter().enumerate() {
            model.update(row);
            let touched = row.features.iter().map(|&(i, _)| i as usize).chain([dim]);
            if let Some(j) = touched.into_iter().find(|&j| !model.weights[j].is_finite()) {
                return Err(LinearError::Diverged {
                    epoch,
                    example: idx,
                    detail: format!("weight {j} became {}", model.weights[j]),
                });
            }
        }
        log::debug!("epoch {epoch}: trained on {} examples", rows.len());
    }
    Ok(model)
}

/// Mean clipped log loss.
pub fn log_loss(model: &LinearModel, rows: &[EncodedExample]) -> Result<f64, LinearError> {
    if rows.is_empty() {
        return Err(LinearError::Empty);
    }
    let losses: Vec<f64> = rows
        .par_iter()
        .map(|r| example_loss(model.predict(&r.features), r.label))
        .collect();
    // sequential sum keeps the result independent of the thread count
    Ok(losses.iter().sum::<f64>() / rows.len() as f64)
}

pub fn accuracy(model: &LinearModel, rows: &[EncodedExample]) -> Result<f64, LinearError> {
    if rows.is_empty() {
        return Err(LinearError::Empty);
    }
    let correct = rows
        .par_iter()
        .filter(|r| (model.predict(&r.features) >= 0.5) == (r.label == 1))
        .count();
    Ok(correct as f64 / rows.len() as f64)
}
