//! Use-case weighted reward over accuracy, model size and model complexity.
//!
//! ```text
//! reward = accuracy * w_acc
//!        - lognorm(size; min_size, max_size) * w_size
//!        - lognorm(complexity; min_complexity, max_complexity) * w_complexity
//! ```
//!
//! where `lognorm(v; lo, hi) = (ln v - ln lo) / (ln hi - ln lo)`, defined as 0
//! when `lo == hi`. Rewards can be negative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repository::ModelCard;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("{what} must be strictly positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("value {value} lies outside extents [{min}, {max}]")]
    OutOfExtents { value: f64, min: f64, max: f64 },
    #[error("accuracy {0} outside [0, 1]")]
    AccuracyOutOfRange(f64),
    #[error("weight {name} = {value} is invalid")]
    InvalidWeight { name: &'static str, value: f64 },
}

/// Metric weights and the reasoning that produced them.
///
/// Weights are used as-is: they are never renormalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub weight_acc: f64,
    pub weight_size: f64,
    pub weight_complexity: f64,
    #[serde(default)]
    pub justification: String,
    #[serde(default)]
    pub tradeoffs: String,
}

impl WeightProfile {
    pub fn new(weight_acc: f64, weight_size: f64, weight_complexity: f64) -> Self {
        Self {
            weight_acc,
            weight_size,
            weight_complexity,
            justification: String::new(),
            tradeoffs: String::new(),
        }
    }

    /// Accuracy-only objective.
    pub fn accuracy_only() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }

    pub fn triple(&self) -> [f64; 3] {
        [self.weight_acc, self.weight_size, self.weight_complexity]
    }

    /// Copy with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            weight_acc: self.weight_acc * factor,
            weight_size: self.weight_size * factor,
            weight_complexity: self.weight_complexity * factor,
            ..self.clone()
        }
    }

    /// All weights finite and non-negative.
    pub fn validate(&self) -> Result<(), RewardError> {
        for (name, value) in self.named() {
            if !value.is_finite() || value < 0.0 {
                return Err(RewardError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }

    /// Stricter check used where weights come from sliders: each in `[0, 1]`.
    pub fn validate_unit(&self) -> Result<(), RewardError> {
        self.validate()?;
        for (name, value) in self.named() {
            if value > 1.0 {
                return Err(RewardError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, f64); 3] {
        [
            ("weight_acc", self.weight_acc),
            ("weight_size", self.weight_size),
            ("weight_complexity", self.weight_complexity),
        ]
    }

    /// Short label such as `acc=0.63;size=0.25;complexity=0.21`.
    pub fn label(&self) -> String {
        format!(
            "acc={};size={};complexity={}",
            self.weight_acc, self.weight_size, self.weight_complexity
        )
    }
}

/// Normalization extents for the size and complexity penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardExtents {
    pub min_size: f64,
    pub max_size: f64,
    pub min_complexity: f64,
    pub max_complexity: f64,
}

/// Normalized `[0, 1]` penalty inputs for one card.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyTerms {
    pub size: f64,
    pub complexity: f64,
}

impl PenaltyTerms {
    pub fn for_card(card: &ModelCard, extents: &RewardExtents) -> Result<Self, RewardError> {
        Ok(Self {
            size: log_normalize(card.size_mb, extents.min_size, extents.max_size)?,
            complexity: log_normalize(
                card.complexity_mmac,
                extents.min_complexity,
                extents.max_complexity,
            )?,
        })
    }

    /// Combines an accuracy with these penalty terms under `weights`.
    /// Bit-identical to [`compute_reward`] for the same card.
    pub fn reward(&self, accuracy: f64, weights: &WeightProfile) -> f64 {
        accuracy * weights.weight_acc
            - self.size * weights.weight_size
            - self.complexity * weights.weight_complexity
    }
}

/// `(ln value - ln min) / (ln max - ln min)`, or 0 when `min == max`.
pub fn log_normalize(value: f64, min: f64, max: f64) -> Result<f64, RewardError> {
    for (what, v) in [("value", value), ("min", min), ("max", max)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(RewardError::NonPositive { what, value: v });
        }
    }
    if value < min || value > max {
        return Err(RewardError::OutOfExtents { value, min, max });
    }
    if min == max || value == min {
        return Ok(0.0);
    }
    if value == max {
        return Ok(1.0);
    }
    let normalized = (value.ln() - min.ln()) / (max.ln() - min.ln());
    Ok(normalized.clamp(0.0, 1.0))
}

/// Reward of observing `accuracy` for the model described by `card`.
pub fn compute_reward(
    accuracy: f64,
    card: &ModelCard,
    weights: &WeightProfile,
    extents: &RewardExtents,
) -> Result<f64, RewardError> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(RewardError::AccuracyOutOfRange(accuracy));
    }
    let terms = PenaltyTerms::for_card(card, extents)?;
    Ok(terms.reward(accuracy, weights))
}
