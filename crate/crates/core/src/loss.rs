//! Importance weighting of atoms near defects, and force-error losses.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::structure::Vec3;

/// Floor applied to logarithmic weights before they are used in a loss.
pub const LOG_WEIGHT_FLOOR: f64 = 1e-3;

/// `lambda1` tempers how strongly defects boost a weight; `lambda2` keeps
/// the denominator away from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceParams {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for ImportanceParams {
    /// `lambda1 = lambda2 = 1`: an atom sitting on a defect weighs 2x bulk.
    fn default() -> Self {
        ImportanceParams {
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

impl ImportanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 >= 0.0 && self.lambda2 > 0.0 && self.lambda1.is_finite() && self.lambda2.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!(
                "importance weights need lambda1 >= 0 and lambda2 > 0, got {:?}",
                self
            )))
        }
    }
}

/// Which per-atom weights multiply the squared force error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    WeightedMse,
    LogWeightedMse,
    PlainMse,
}

fn sq_dist(a: &Vec3, b: &Vec3) -> f64 {
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2])
}

/// `m_i = prod_{j in defects} (1 + lambda1 / (|r_i - r_j|^2 + lambda2))`.
pub fn importance_weights(coords: &[Vec3], defects: &[Vec3], p: &ImportanceParams) -> Vec<f64> {
    coords
        .iter()
        .map(|r| {
            defects
                .iter()
                .map(|d| 1.0 + p.lambda1 / (sq_dist(r, d) + p.lambda2))
                .product()
        })
        .collect()
}

/// Unclamped `m_i = sum_{j in defects} ln(1 / (|r_i - r_j|^2 + lambda2))`.
/// These can be negative; see [`log_importance_weights`].
pub fn raw_log_importance_weights(coords: &[Vec3], defects: &[Vec3], p: &ImportanceParams) -> Vec<f64> {
    coords
        .iter()
        .map(|r| {
            defects
                .iter()
                .map(|d| Float::ln(1.0 / (sq_dist(r, d) + p.lambda2)))
                .sum()
        })
        .collect()
}

/// Logarithmic weights floored at [`LOG_WEIGHT_FLOOR`] so they are usable as
/// loss weights.
pub fn log_importance_weights(coords: &[Vec3], defects: &[Vec3], p: &ImportanceParams) -> Vec<f64> {
    raw_log_importance_weights(coords, defects, p)
        .into_iter()
        .map(|m| m.max(LOG_WEIGHT_FLOOR))
        .collect()
}

/// Per-atom weights for `kind`.
pub fn loss_weights(kind: LossKind, coords: &[Vec3], defects: &[Vec3], p: &ImportanceParams) -> Vec<f64> {
    match kind {
        LossKind::WeightedMse => importance_weights(coords, defects, p),
        LossKind::LogWeightedMse => log_importance_weights(coords, defects, p),
        LossKind::PlainMse => alloc::vec![1.0; coords.len()],
    }
}

/// `sum_i m_i sum_j (pred_ij - actual_ij)^2`.
pub fn weighted_mse(pred: &[Vec3], actual: &[Vec3], m: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || pred.len() != m.len() {
        return Err(Error::ShapeMismatch {
            op: "weighted_mse",
            left: (pred.len(), 3),
            right: (actual.len(), m.len()),
        });
    }
    Ok(pred
        .iter()
        .zip(actual)
        .zip(m)
        .map(|((p, a), w)| w * sq_dist(p, a))
        .sum())
}
