//! Class-imbalance weighting with logarithmic smoothing and clipping, plus a
//! weighted cross-entropy reference implementation with analytic gradients.
//!
//! The smoothing formula is `w_c = clamp(ln(1 + N / max(n_c, epsilon)),
//! clip_min, clip_max)` with `N` the total count. It is isolated in one
//! function (`smoothed_weight`) so alternates are one-line swaps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelId;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("invalid weight config: {0}")]
    BadConfig(String),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("all class counts are zero")]
    AllZeroCounts,
    #[error("logits contain a non-finite value")]
    NonFiniteLogits,
    #[error("target {target} out of range for {k} classes")]
    BadTarget { target: LabelId, k: usize },
    #[error("weights length {weights} does not match {k} classes")]
    LengthMismatch { weights: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub clip_min: f64,
    pub clip_max: f64,
    /// Substitute count for empty classes.
    pub epsilon: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            clip_min: 0.1,
            clip_max: 10.0,
            epsilon: 1e-9,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<(), WeightError> {
        if !(self.clip_min > 0.0 && self.clip_min <= self.clip_max) {
            return Err(WeightError::BadConfig(format!(
                "require 0 < clip_min <= clip_max, got ({}, {})",
                self.clip_min, self.clip_max
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(WeightError::BadConfig("epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-class loss weights, indexed by label id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(k: usize) -> Self {
        ClassWeights {
            weights: vec![1.0; k],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Export record citing the exact weight vector a run used.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsArtifact {
    pub weights: Vec<f64>,
    pub config: WeightConfig,
    pub counts: Vec<usize>,
}

/// The smoothing rule for a single class.
fn smoothed_weight(count: usize, total: f64, config: &WeightConfig) -> f64 {
    let denom = if count == 0 {
        config.epsilon
    } else {
        count as f64
    };
    (1.0 + total / denom).ln().clamp(config.clip_min, config.clip_max)
}

/// Log-smoothed, clipped weights from per-class counts.
pub fn compute_weights(counts: &[usize], config: &WeightConfig) -> Result<ClassWeights, WeightError> {
    config.validate()?;
    if counts.len() < 2 {
        return Err(WeightError::TooFewClasses(counts.len()));
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(WeightError::AllZeroCounts);
    }
    let total = total as f64;
    let weights = counts
        .iter()
        .map(|&n| smoothed_weight(n, total, config))
        .collect();
    Ok(ClassWeights { weights })
}

/// Weighted cross-entropy loss with its analytic gradient.
///
/// Loss is `-w_target * ln(softmax(logits)_target)` with max-subtraction
/// stabilization; the gradient is `w_target * (softmax_j - [j = target])` and
/// sums to zero.
pub fn weighted_cross_entropy(
    logits: &[f64],
    target: LabelId,
    weights: &ClassWeights,
) -> Result<(f64, Vec<f64>), WeightError> {
    let k = logits.len();
    if k < 2 {
        return Err(WeightError::TooFewClasses(k));
    }
    if target >= k {
        return Err(WeightError::BadTarget { target, k });
    }
    if weights.len() != k {
        return Err(WeightError::LengthMismatch {
            weights: weights.len(),
            k,
        });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(WeightError::NonFiniteLogits);
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp_sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let lse = max + exp_sum.ln();
    let w = weights.weights[target];
    let loss = w * (lse - logits[target]);
    let gradient = logits
        .iter()
        .enumerate()
        .map(|(j, l)| {
            let p = (l - max).exp() / exp_sum;
            let indicator = if j == target { 1.0 } else { 0.0 };
            w * (p - indicator)
        })
        .collect();
    Ok((loss, gradient))
}
