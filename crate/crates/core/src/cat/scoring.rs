use serde::{Deserialize, Serialize};

use crate::bank::ConversionCoefficients;
use crate::irt::logistic;

use super::CatError;

/// Control-item tallies behind the attention index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttentionCounters {
    /// Pseudowords marked as unknown.
    pub x: u32,
    /// Pseudowords presented.
    pub ax: u32,
    /// Multiple-choice definitions chosen correctly.
    pub y: u32,
    /// Multiple-choice items counted as control opportunities.
    pub ay: u32,
}

impl AttentionCounters {
    pub fn index(&self) -> Option<f64> {
        attention_index(self)
    }
}

/// `(x + y) / (ax + ay)`, undefined when no control item was seen.
pub fn attention_index(c: &AttentionCounters) -> Option<f64> {
    let den = c.ax + c.ay;
    (den > 0).then(|| f64::from(c.x + c.y) / f64::from(den))
}

/// Logistic conversion of an ability to a vocabulary size in words,
/// rounded and clamped to `[0, cap]`.
pub fn logits_to_words(theta: f64, conversion: &ConversionCoefficients) -> Result<u32, CatError> {
    conversion.validate().map_err(CatError::Configuration)?;
    if theta.is_nan() {
        return Err(CatError::Configuration("ability is NaN".into()));
    }
    let share = logistic(conversion.slope * (theta - conversion.midpoint));
    let words = (conversion.cap * share).round().clamp(0.0, conversion.cap.floor());
    Ok(words as u32)
}
