use serde::{Deserialize, Serialize};

use super::{mc_statistic, CandidateCvRecord, SelectError};
use crate::stats::{self, StatError};

/// Agreement statistic between the training-side and validation-side MC
/// vectors.
pub trait Correlation: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    fn compute(&self, a: &[f64], b: &[f64]) -> Result<f64, StatError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Pearson;

impl Correlation for Pearson {
    fn name(&self) -> &'static str {
        "pearson"
    }
    fn compute(&self, a: &[f64], b: &[f64]) -> Result<f64, StatError> {
        stats::pearson_correlation(a, b)
    }
}

/// Pearson correlation of average ranks.
#[derive(Debug, Clone, Copy, Default)]
pub struct Spearman;

impl Correlation for Spearman {
    fn name(&self) -> &'static str {
        "spearman"
    }
    fn compute(&self, a: &[f64], b: &[f64]) -> Result<f64, StatError> {
        stats::spearman_correlation(a, b)
    }
}

static REGISTRY: [&dyn Correlation; 2] = [&Spearman, &Pearson];

pub fn correlation_by_name(name: &str) -> Result<&'static dyn Correlation, SelectError> {
    REGISTRY
        .iter()
        .copied()
        .find(|c| c.name() == name)
        .ok_or_else(|| SelectError::UnknownCorrelation(name.to_string()))
}

pub fn correlation_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|c| c.name()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid { min: 0.0, max: 1.0, step: 0.01 }
    }
}

impl LambdaGrid {
    pub fn points(&self) -> Result<Vec<f64>, SelectError> {
        if !(self.step > 0.0) || !(self.min >= 0.0) || !(self.max >= self.min) {
            return Err(SelectError::Grid(format!(
                "need 0 <= min <= max and step > 0, got min={} max={} step={}",
                self.min, self.max, self.step
            )));
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        // products of the step, rounded to ten decimals, keep grid values exact-looking
        Ok((0..count)
            .map(|i| ((self.min + i as f64 * self.step) * 1e10).round() / 1e10)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub lambda_opt: f64,
    pub best_correlation: f64,
    /// Correlation at every grid point; `None` where it is undefined.
    pub curve: Vec<(f64, Option<f64>)>,
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Grid search for the weight maximizing agreement between the training and
/// validation MC vectors over feasible candidates. Ties go to the smallest
/// weight.
pub fn lambda_search(
    records: &[CandidateCvRecord],
    full_loss_cv: f64,
    full_loss_cv_val: f64,
    grid: &LambdaGrid,
    corr: &dyn Correlation,
) -> Result<LambdaSearch, SelectError> {
    let feasible: Vec<&CandidateCvRecord> = records.iter().filter(|r| r.is_feasible()).collect();
    if feasible.len() < 2 {
        return Err(SelectError::TooFewFeasible(feasible.len()));
    }
    let mut curve = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for lambda in grid.points()? {
        let a: Vec<f64> = feasible
            .iter()
            .map(|r| mc_statistic(r.loss_cv, full_loss_cv, lambda, r.r.value))
            .collect();
        let b: Vec<f64> = feasible
            .iter()
            .map(|r| mc_statistic(r.loss_cv_val, full_loss_cv_val, lambda, r.r.value))
            .collect();
        let c = corr.compute(&a, &b).ok();
        curve.push((lambda, c));
        if let Some(c) = c {
            if best.is_none_or(|(_, bc)| c > bc + TIE_TOLERANCE) {
                best = Some((lambda, c));
            }
        }
    }
    let (lambda_opt, best_correlation) = best.ok_or(SelectError::DegenerateGrid)?;
    Ok(LambdaSearch { lambda_opt, best_correlation, curve })
}
