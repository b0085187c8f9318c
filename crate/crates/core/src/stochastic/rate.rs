//! Learning-rate schedules for the stochastic iterations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    /// `1 / (omega + 1)`.
    Harmonic,
    Constant {
        value: f64,
    },
    /// `scale * (omega + 1)^(-exponent)`.
    Power {
        scale: f64,
        exponent: f64,
    },
    /// Explicit values; the last one repeats past the end.
    Sequence {
        values: Vec<f64>,
    },
}

impl Default for LearningRate {
    fn default() -> Self {
        LearningRate::Harmonic
    }
}

impl LearningRate {
    pub fn gamma(&self, omega: usize) -> f64 {
        match self {
            LearningRate::Harmonic => 1.0 / (omega as f64 + 1.0),
            LearningRate::Constant { value } => *value,
            LearningRate::Power { scale, exponent } => scale * (omega as f64 + 1.0).powf(-exponent),
            LearningRate::Sequence { values } => {
                *values.get(omega).or(values.last()).unwrap_or(&0.0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            LearningRate::Harmonic => true,
            LearningRate::Constant { value } => *value > 0.0 && value.is_finite(),
            LearningRate::Power { scale, exponent } => {
                *scale > 0.0 && scale.is_finite() && exponent.is_finite()
            }
            LearningRate::Sequence { values } => {
                !values.is_empty() && values.iter().all(|v| *v > 0.0 && v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "learning rates must be positive and finite: {self:?}"
            )))
        }
    }

    /// Whether `sum gamma = inf` and `sum gamma^2 < inf`. `None` for an explicit
    /// finite sequence, where the tail is not determined.
    pub fn robbins_monro(&self) -> Option<bool> {
        match self {
            LearningRate::Harmonic => Some(true),
            LearningRate::Constant { .. } => Some(false),
            LearningRate::Power { exponent, .. } => Some(*exponent > 0.5 && *exponent <= 1.0),
            LearningRate::Sequence { .. } => None,
        }
    }
}
