//! Cross-validated modified Mallows' Cp: fold plans, the MC statistic,
//! the complexity-weight search and the final choice among candidates.

mod cv;
mod lambda;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mlp::MlpError;
use crate::optim::FitError;
use crate::rng;

pub use cv::{cross_validate, run_selection, BaselineCvRecord, CandidateCvRecord, CvOutcome, SelectionConfig};
pub use lambda::{
    correlation_by_name, correlation_names, lambda_search, Correlation, LambdaGrid, LambdaSearch,
    Pearson, Spearman,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("fold count {d} must satisfy 2 <= D <= N = {n}")]
    Folds { d: usize, n: usize },
    #[error("lambda search needs at least two feasible candidates, found {0}")]
    TooFewFeasible(usize),
    #[error("correlation is undefined at every lambda in the grid; try a different grid")]
    DegenerateGrid,
    #[error("invalid lambda grid: {0}")]
    Grid(String),
    #[error("unknown correlation statistic {0:?}")]
    UnknownCorrelation(String),
    #[error("every candidate is infeasible")]
    NoFeasibleCandidate,
    #[error("no candidates supplied")]
    NoCandidates,
    #[error("reference network failed: {0}")]
    Network(#[from] MlpError),
    #[error("refit of the selected model failed: {0}")]
    Refit(#[from] FitError),
    #[error("reference network validation loss is not positive: {0}")]
    ZeroReference(f64),
}

/// Classical `C_p = SSE_k / sigma2 - N + 2 p_k`.
pub fn mallows_cp(sse_k: f64, sigma2_hat: f64, n: usize, p_k: usize) -> f64 {
    sse_k / sigma2_hat - n as f64 + 2.0 * p_k as f64
}

/// `MC = mse_k / mse_full - 1 + lambda * r_k`; infinite when `mse_k` is.
pub fn mc_statistic(mse_k: f64, mse_full: f64, lambda: f64, r_k: f64) -> f64 {
    if mse_k.is_infinite() {
        return f64::INFINITY;
    }
    mse_k / mse_full - 1.0 + lambda * r_k
}

/// Assignment of rows to `d` folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub d: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl CvPlan {
    /// Row indices of each fold, ascending.
    pub fn folds(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.d];
        for (row, &f) in self.assignments.iter().enumerate() {
            out[f].push(row);
        }
        out
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&r| self.assignments[r] != fold).collect()
    }

    pub fn val_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&r| self.assignments[r] == fold).collect()
    }
}

/// Random partition of `n` rows into `d` folds whose sizes differ by at most
/// one; the first `n mod d` folds take the extra rows.
pub fn make_cv_plan(n: usize, d: usize, seed: u64) -> Result<CvPlan, SelectError> {
    use rand::seq::SliceRandom;
    if d < 2 || d > n {
        return Err(SelectError::Folds { d, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, &[rng::tag::CV_PLAN]));
    let base = n / d;
    let extra = n % d;
    let mut assignments = vec![0; n];
    let mut at = 0;
    for f in 0..d {
        let size = base + usize::from(f < extra);
        for &row in &perm[at..at + size] {
            assignments[row] = f;
        }
        at += size;
    }
    Ok(CvPlan { d, assignments, seed })
}

/// MC values of one candidate at the chosen weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McPair {
    pub mc_cv: f64,
    pub mc_cv_val: f64,
}

/// Outcome of choosing among candidates at a fixed weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lambda: f64,
    pub mc: Vec<McPair>,
    /// Position in the record list of the chosen candidate.
    pub selected_index: usize,
    pub selected_id: usize,
    pub tie_break_applied: bool,
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Chooses the smallest validation MC at `lambda`; ties go to the smaller
/// complexity, then the smaller model id.
pub fn select_final(
    records: &[CandidateCvRecord],
    lambda: f64,
    full_loss_cv: f64,
    full_loss_cv_val: f64,
) -> Result<Selection, SelectError> {
    if records.is_empty() {
        return Err(SelectError::NoCandidates);
    }
    let mc: Vec<McPair> = records
        .iter()
        .map(|r| McPair {
            mc_cv: mc_statistic(r.loss_cv, full_loss_cv, lambda, r.r.value),
            mc_cv_val: mc_statistic(r.loss_cv_val, full_loss_cv_val, lambda, r.r.value),
        })
        .collect();
    let best = mc
        .iter()
        .map(|m| m.mc_cv_val)
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(SelectError::NoFeasibleCandidate);
    }
    let tied: Vec<usize> = (0..records.len()).filter(|&i| nearly_equal(mc[i].mc_cv_val, best)).collect();
    let selected_index = *tied
        .iter()
        .min_by(|&&a, &&b| {
            records[a]
                .r
                .value
                .total_cmp(&records[b].r.value)
                .then(records[a].model_id.cmp(&records[b].model_id))
        })
        .unwrap();
    Ok(Selection {
        lambda,
        mc,
        selected_index,
        selected_id: records[selected_index].model_id,
        tie_break_applied: tied.len() > 1,
    })
}

/// Everything a selection run produces, in report order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub records: Vec<CandidateCvRecord>,
    pub full: BaselineCvRecord,
    pub benchmark: Option<BaselineCvRecord>,
    pub lambda_opt: f64,
    pub correlation: String,
    pub lambda_curve: Vec<(f64, Option<f64>)>,
    pub selection: Selection,
    pub infeasible_ids: Vec<usize>,
    pub refit_theta: Vec<f64>,
    pub refit_train_loss: f64,
    pub plan_seed: u64,
}

impl SelectionReport {
    pub fn selected(&self) -> &CandidateCvRecord {
        &self.records[self.selection.selected_index]
    }

    /// MC values of a reference row (full or benchmark) at `lambda_opt`.
    pub fn baseline_mc(&self, b: &BaselineCvRecord) -> McPair {
        McPair {
            mc_cv: mc_statistic(b.loss_cv, self.full.loss_cv, self.lambda_opt, b.r.value),
            mc_cv_val: mc_statistic(b.loss_cv_val, self.full.loss_cv_val, self.lambda_opt, b.r.value),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cp_reference_points() {
        assert_eq!(mallows_cp(4.0 * 10.0, 4.0, 10, 0), 0.0);
        assert_eq!(mallows_cp(4.0 * 10.0, 4.0, 10, 3), 6.0);
    }

    #[test]
    fn mc_reference_points() {
        assert_eq!(mc_statistic(0.3, 0.3, 0.0, 5.0), 0.0);
        assert!((mc_statistic(0.00208, 0.00390, 0.14, 7.0) - 0.513333).abs() < 1e-5);
        assert!((mc_statistic(0.00211, 0.00460, 0.14, 7.0) - 0.438696).abs() < 1e-5);
        assert_eq!(mc_statistic(f64::INFINITY, 1.0, 0.1, 2.0), f64::INFINITY);
    }

    #[test]
    fn fold_sizes_follow_remainder_rule() {
        let sizes = |n, d| make_cv_plan(n, d, 9).unwrap().folds().iter().map(Vec::len).collect::<Vec<_>>();
        assert_eq!(sizes(1000, 5), vec![200; 5]);
        assert_eq!(sizes(928, 4), vec![232; 4]);
        assert_eq!(sizes(7, 3), vec![3, 2, 2]);
        assert!(make_cv_plan(5, 1, 0).is_err());
        assert!(make_cv_plan(5, 6, 0).is_err());
    }
}
