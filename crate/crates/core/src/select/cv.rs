use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    correlation_by_name, lambda_search, make_cv_plan, select_final, CvPlan, LambdaGrid, SelectError,
    SelectionReport,
};
use crate::data::Dataset;
use crate::expr::{CandidateModel, ComplexityKind, ComplexityMeasure};
use crate::mlp::{self, MlpSpec};
use crate::optim::{self, FitConfig};
use crate::rng::{derive_seed, tag};

/// Cross-validated losses of one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCvRecord {
    pub model_id: usize,
    pub form: String,
    pub r: ComplexityMeasure,
    pub n_params: usize,
    /// Mean over folds of the training loss on the `D - 1` training folds.
    pub loss_cv: f64,
    /// Mean over folds of the loss on the held-out fold.
    pub loss_cv_val: f64,
    pub fold_train: Vec<f64>,
    pub fold_val: Vec<f64>,
    pub acc_cv: Option<f64>,
    pub acc_cv_val: Option<f64>,
    /// Folds on which every restart failed.
    pub failed_folds: Vec<usize>,
}

impl CandidateCvRecord {
    pub fn is_feasible(&self) -> bool {
        self.loss_cv.is_finite() && self.loss_cv_val.is_finite()
    }
}

/// Cross-validated losses of a reference network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCvRecord {
    pub name: String,
    pub widths: Vec<usize>,
    pub r: ComplexityMeasure,
    pub n_params: usize,
    pub loss_cv: f64,
    pub loss_cv_val: f64,
    pub fold_train: Vec<f64>,
    pub fold_val: Vec<f64>,
    pub acc_cv: Option<f64>,
    pub acc_cv_val: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub plan: CvPlan,
    pub records: Vec<CandidateCvRecord>,
    pub full: BaselineCvRecord,
    pub benchmark: Option<BaselineCvRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub folds: usize,
    pub grid: LambdaGrid,
    pub correlation: String,
    pub fit: FitConfig,
    pub full: MlpSpec,
    pub benchmark: Option<MlpSpec>,
    pub complexity: ComplexityKind,
    pub seed: u64,
}

struct FoldData {
    train: Dataset,
    val: Dataset,
}

struct Outcome {
    train: f64,
    val: f64,
    acc_train: Option<f64>,
    acc_val: Option<f64>,
    failed: bool,
}

enum Task<'a> {
    Candidate(usize, &'a CandidateModel),
    Full,
    Benchmark(&'a MlpSpec),
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fit_candidate(model: &CandidateModel, fold: usize, f: &FoldData, cfg: &FitConfig, classify: bool) -> Outcome {
    let cfg = FitConfig {
        seed: derive_seed(cfg.seed, &[tag::CANDIDATE, fold as u64, model.model_id as u64]),
        record_trace: false,
        ..cfg.clone()
    };
    match optim::fit(model, &f.train, &cfg) {
        Ok(res) => {
            let val = optim::evaluate_loss(model, &res.theta_hat, &f.val, cfg.loss);
            let (acc_train, acc_val) = if classify {
                (
                    Some(optim::classification_accuracy(model, &res.theta_hat, &f.train)),
                    Some(optim::classification_accuracy(model, &res.theta_hat, &f.val)),
                )
            } else {
                (None, None)
            };
            Outcome { train: res.train_loss, val, acc_train, acc_val, failed: false }
        }
        Err(_) => Outcome {
            train: f64::INFINITY,
            val: f64::INFINITY,
            acc_train: classify.then_some(0.0),
            acc_val: classify.then_some(0.0),
            failed: true,
        },
    }
}

fn fit_network(spec: &MlpSpec, seed: u64, f: &FoldData, classify: bool) -> Result<Outcome, SelectError> {
    let spec = MlpSpec { seed, ..spec.clone() };
    let st = mlp::train(&spec, &f.train)?;
    let (acc_train, acc_val) = if classify {
        (Some(st.accuracy(&f.train)?), Some(st.accuracy(&f.val)?))
    } else {
        (None, None)
    };
    Ok(Outcome { train: st.loss(&f.train)?, val: st.loss(&f.val)?, acc_train, acc_val, failed: false })
}

fn baseline_record(name: &str, spec: &MlpSpec, kind: ComplexityKind, per_fold: Vec<Outcome>) -> BaselineCvRecord {
    let fold_train: Vec<f64> = per_fold.iter().map(|o| o.train).collect();
    let fold_val: Vec<f64> = per_fold.iter().map(|o| o.val).collect();
    let acc = |f: fn(&Outcome) -> Option<f64>| -> Option<f64> {
        per_fold.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| mean(&v))
    };
    BaselineCvRecord {
        name: name.to_string(),
        widths: spec.layer_widths.clone(),
        r: mlp::complexity(spec, kind),
        n_params: mlp::param_count(spec),
        loss_cv: mean(&fold_train),
        loss_cv_val: mean(&fold_val),
        acc_cv: acc(|o| o.acc_train),
        acc_cv_val: acc(|o| o.acc_val),
        fold_train,
        fold_val,
    }
}

/// Fits every candidate and the reference networks on each fold's training
/// rows and scores them on its held-out rows. Fold x model tasks run in
/// parallel; each draws from its own derived seed, so results do not depend
/// on the thread count.
pub fn cross_validate(
    candidates: &[CandidateModel],
    data: &Dataset,
    plan: &CvPlan,
    cfg: &SelectionConfig,
) -> Result<CvOutcome, SelectError> {
    if candidates.is_empty() {
        return Err(SelectError::NoCandidates);
    }
    let classify = data.is_classification();
    let folds: Vec<FoldData> = (0..plan.d)
        .map(|d| FoldData {
            train: data.select(&plan.train_rows(d)).expect("plan rows are in range"),
            val: data.select(&plan.val_rows(d)).expect("plan rows are in range"),
        })
        .collect();

    let mut tasks: Vec<(usize, Task<'_>)> = Vec::new();
    for d in 0..plan.d {
        tasks.push((d, Task::Full));
        if let Some(b) = &cfg.benchmark {
            tasks.push((d, Task::Benchmark(b)));
        }
        for (i, c) in candidates.iter().enumerate() {
            tasks.push((d, Task::Candidate(i, c)));
        }
    }
    let results: Vec<Result<Outcome, SelectError>> = tasks
        .par_iter()
        .map(|(d, task)| {
            let f = &folds[*d];
            match task {
                Task::Candidate(_, m) => Ok(fit_candidate(m, *d, f, &cfg.fit, classify)),
                Task::Full => fit_network(
                    &cfg.full,
                    derive_seed(cfg.full.seed, &[tag::FULL_DNN, *d as u64]),
                    f,
                    classify,
                ),
                Task::Benchmark(spec) => {
                    fit_network(spec, derive_seed(spec.seed, &[tag::BENCHMARK, *d as u64]), f, classify)
                }
            }
        })
        .collect();

    let mut per_candidate: Vec<Vec<Outcome>> = (0..candidates.len()).map(|_| Vec::new()).collect();
    let mut full_folds = Vec::new();
    let mut bench_folds = Vec::new();
    for ((_, task), res) in tasks.iter().zip(results) {
        let out = res?;
        match task {
            Task::Candidate(i, _) => per_candidate[*i].push(out),
            Task::Full => full_folds.push(out),
            Task::Benchmark(_) => bench_folds.push(out),
        }
    }

    let names = &data.feature_names;
    let records = candidates
        .iter()
        .zip(per_candidate)
        .map(|(m, outs)| {
            let fold_train: Vec<f64> = outs.iter().map(|o| o.train).collect();
            let fold_val: Vec<f64> = outs.iter().map(|o| o.val).collect();
            let acc = |f: fn(&Outcome) -> Option<f64>| -> Option<f64> {
                outs.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| mean(&v))
            };
            CandidateCvRecord {
                model_id: m.model_id,
                form: m.form(Some(names)),
                r: m.complexity(cfg.complexity),
                n_params: m.n_params(),
                loss_cv: mean(&fold_train),
                loss_cv_val: mean(&fold_val),
                acc_cv: acc(|o| o.acc_train),
                acc_cv_val: acc(|o| o.acc_val),
                failed_folds: outs.iter().enumerate().filter(|(_, o)| o.failed).map(|(d, _)| d).collect(),
                fold_train,
                fold_val,
            }
        })
        .collect();

    let full = baseline_record("Complex DNN", &cfg.full, cfg.complexity, full_folds);
    let benchmark = cfg
        .benchmark
        .as_ref()
        .map(|b| baseline_record("Benchmark", b, cfg.complexity, bench_folds));
    Ok(CvOutcome { plan: plan.clone(), records, full, benchmark })
}

/// Cross-validation, weight search, final choice and full-data refit.
pub fn run_selection(
    candidates: &[CandidateModel],
    data: &Dataset,
    cfg: &SelectionConfig,
) -> Result<SelectionReport, SelectError> {
    let corr = correlation_by_name(&cfg.correlation)?;
    cfg.grid.points()?;
    let plan = make_cv_plan(data.len(), cfg.folds, cfg.seed)?;
    let cv = cross_validate(candidates, data, &plan, cfg)?;
    if !(cv.full.loss_cv > 0.0) {
        return Err(SelectError::ZeroReference(cv.full.loss_cv));
    }
    if !(cv.full.loss_cv_val > 0.0) {
        return Err(SelectError::ZeroReference(cv.full.loss_cv_val));
    }
    let search = lambda_search(&cv.records, cv.full.loss_cv, cv.full.loss_cv_val, &cfg.grid, corr)?;
    let selection = select_final(&cv.records, search.lambda_opt, cv.full.loss_cv, cv.full.loss_cv_val)?;
    let winner = &candidates[selection.selected_index];
    let refit_cfg = FitConfig {
        seed: derive_seed(cfg.fit.seed, &[tag::REFIT, winner.model_id as u64]),
        record_trace: false,
        ..cfg.fit.clone()
    };
    let refit = optim::fit(winner, data, &refit_cfg)?;
    Ok(SelectionReport {
        infeasible_ids: cv.records.iter().filter(|r| !r.is_feasible()).map(|r| r.model_id).collect(),
        records: cv.records,
        full: cv.full,
        benchmark: cv.benchmark,
        lambda_opt: search.lambda_opt,
        correlation: corr.name().to_string(),
        lambda_curve: search.curve,
        selection,
        refit_theta: refit.theta_hat,
        refit_train_loss: refit.train_loss,
        plan_seed: plan.seed,
    })
}
