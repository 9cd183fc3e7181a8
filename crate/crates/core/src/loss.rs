//! Loss functions behind a common trait, looked up by name.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("loss inputs are empty")]
    Empty,
    #[error("length mismatch: {preds} predictions vs {targets} targets")]
    Length { preds: usize, targets: usize },
}

/// Probability floor/ceiling applied before taking logs.
pub const CE_CLAMP: f64 = 1e-12;

pub trait Loss: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Loss contribution of one row.
    fn row_value(&self, pred: &[f64], target: &[f64]) -> f64;

    /// `d row_value / d pred`, written into `out`.
    fn row_grad(&self, pred: &[f64], target: &[f64], out: &mut [f64]);

    /// Mean over rows of row-major `preds`/`targets` with `width` columns.
    fn value(&self, preds: &[f64], targets: &[f64], width: usize) -> Result<f64, LossError> {
        if preds.len() != targets.len() {
            return Err(LossError::Length { preds: preds.len(), targets: targets.len() });
        }
        if preds.is_empty() || width == 0 {
            return Err(LossError::Empty);
        }
        let n = preds.len() / width;
        let total: f64 = preds
            .chunks_exact(width)
            .zip(targets.chunks_exact(width))
            .map(|(p, t)| self.row_value(p, t))
            .sum();
        Ok(total / n as f64)
    }
}

/// Squared error averaged over output entries.
#[derive(Debug, Clone, Copy, Default)]
pub struct Mse;

impl Loss for Mse {
    fn name(&self) -> &'static str {
        "mse"
    }

    fn row_value(&self, pred: &[f64], target: &[f64]) -> f64 {
        let w = pred.len() as f64;
        pred.iter().zip(target).map(|(p, t)| (t - p) * (t - p)).sum::<f64>() / w
    }

    fn row_grad(&self, pred: &[f64], target: &[f64], out: &mut [f64]) {
        let w = pred.len() as f64;
        for ((o, p), t) in out.iter_mut().zip(pred).zip(target) {
            *o = 2.0 * (p - t) / w;
        }
    }
}

/// Categorical cross-entropy against one-hot labels.
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl Loss for CrossEntropy {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn row_value(&self, pred: &[f64], target: &[f64]) -> f64 {
        -pred
            .iter()
            .zip(target)
            .map(|(p, t)| t * p.clamp(CE_CLAMP, 1.0 - CE_CLAMP).ln())
            .sum::<f64>()
    }

    // The clamp only guards the logarithm; the derivative keeps the
    // unclamped denominator so saturated wrong predictions still push back.
    fn row_grad(&self, pred: &[f64], target: &[f64], out: &mut [f64]) {
        for ((o, p), t) in out.iter_mut().zip(pred).zip(target) {
            *o = -t / p.max(f64::MIN_POSITIVE);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

impl LossKind {
    pub fn get(self) -> &'static dyn Loss {
        match self {
            LossKind::Mse => &Mse,
            LossKind::CrossEntropy => &CrossEntropy,
        }
    }

    pub fn name(self) -> &'static str {
        self.get().name()
    }
}

/// Registered losses by name.
pub fn registry() -> [(&'static str, LossKind); 2] {
    [("mse", LossKind::Mse), ("cross_entropy", LossKind::CrossEntropy)]
}

pub fn by_name(name: &str) -> Option<LossKind> {
    registry().into_iter().find(|(n, _)| *n == name).map(|(_, k)| k)
}

/// `(1/N) sum (y - yhat)^2`.
pub fn mse_loss(preds: &[f64], targets: &[f64]) -> Result<f64, LossError> {
    Mse.value(preds, targets, 1)
}

/// `-(1/N) sum_i sum_c label_c log(pred_c)` with predictions clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn cross_entropy_loss(preds: &[[f64; 2]], labels: &[[f64; 2]]) -> Result<f64, LossError> {
    let p: Vec<f64> = preds.iter().flatten().copied().collect();
    let l: Vec<f64> = labels.iter().flatten().copied().collect();
    CrossEntropy.value(&p, &l, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert_eq!(mse_loss(&[], &[]), Err(LossError::Empty));
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let half = cross_entropy_loss(&[[0.5, 0.5]; 3], &[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!((half - std::f64::consts::LN_2).abs() < 1e-15);
        let perfect = cross_entropy_loss(&[[1.0, 0.0], [0.0, 1.0]], &[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(perfect <= 1e-11);
        assert!(cross_entropy_loss(&[[0.5, 0.5]], &[]).is_err());
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(by_name("mse"), Some(LossKind::Mse));
        assert_eq!(by_name("cross_entropy").map(LossKind::name), Some("cross_entropy"));
        assert_eq!(by_name("hinge"), None);
    }
}
