//! `report.csv` (one row per candidate, then the benchmark and complex-DNN
//! rows) and `report.json` (the full record of a run).

use std::io::Write;
use std::path::Path;

use interpfn_core::rng::{derive_seed, tag};
use interpfn_core::select::{BaselineCvRecord, CandidateCvRecord, McPair, SelectionReport};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::ingest::{fmt_num, IngestSummary};
use crate::pipeline::RunOutput;

pub const CSV_COLUMNS: [&str; 7] = ["model_id", "form", "r", "loss_cv", "loss_cv_val", "mc_cv", "mc_cv_val"];
pub const ACCURACY_COLUMNS: [&str; 2] = ["acc_cv", "acc_cv_val"];

fn has_accuracy(rep: &SelectionReport) -> bool {
    rep.records.iter().any(|r| r.acc_cv.is_some())
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn write_csv<W: Write>(rep: &SelectionReport, out: W) -> Result<(), csv::Error> {
    let acc = has_accuracy(rep);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = CSV_COLUMNS.to_vec();
    if acc {
        header.extend(ACCURACY_COLUMNS);
    }
    w.write_record(&header)?;
    let mut row = |id: String, form: &str, r: f64, lt: f64, lv: f64, mc: McPair, a: Option<f64>, av: Option<f64>| {
        let mut rec = vec![id, form.to_string(), fmt_num(r), fmt_num(lt), fmt_num(lv), fmt_num(mc.mc_cv), fmt_num(mc.mc_cv_val)];
        if acc {
            rec.push(opt(a));
            rec.push(opt(av));
        }
        w.write_record(&rec)
    };
    for (rec, mc) in rep.records.iter().zip(&rep.selection.mc) {
        row(rec.model_id.to_string(), &rec.form, rec.r.value, rec.loss_cv, rec.loss_cv_val, *mc, rec.acc_cv, rec.acc_cv_val)?;
    }
    let baselines = rep.benchmark.iter().map(|b| ("benchmark", b)).chain([("complex_dnn", &rep.full)]);
    for (id, b) in baselines {
        let form = format!("mlp {:?}", b.widths);
        row(id.to_string(), &form, b.r.value, b.loss_cv, b.loss_cv_val, rep.baseline_mc(b), b.acc_cv, b.acc_cv_val)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rep: &SelectionReport, path: &Path) -> Result<(), CliError> {
    let f = std::fs::File::create(path)
        .map_err(|source| CliError::Output { path: path.display().to_string(), source })?;
    write_csv(rep, std::io::BufWriter::new(f))
        .map_err(|e| CliError::Output { path: path.display().to_string(), source: e.into() })
}

#[derive(Serialize)]
struct Complexity {
    exact: f64,
    display: f64,
}

#[derive(Serialize)]
struct CandidateRow<'a> {
    model_id: usize,
    form: &'a str,
    r: Complexity,
    n_params: usize,
    loss_cv: f64,
    loss_cv_val: f64,
    mc_cv: f64,
    mc_cv_val: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc_cv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc_cv_val: Option<f64>,
    fold_train: &'a [f64],
    fold_val: &'a [f64],
    failed_folds: &'a [usize],
}

#[derive(Serialize)]
struct BaselineRow<'a> {
    name: &'a str,
    widths: &'a [usize],
    r: Complexity,
    n_params: usize,
    loss_cv: f64,
    loss_cv_val: f64,
    mc_cv: f64,
    mc_cv_val: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc_cv: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acc_cv_val: Option<f64>,
    fold_train: &'a [f64],
    fold_val: &'a [f64],
}

#[derive(Serialize)]
struct Selected<'a> {
    model_id: usize,
    form: &'a str,
    r: Complexity,
    theta_hat: &'a [f64],
    refit_train_loss: f64,
    tie_break_applied: bool,
}

#[derive(Serialize)]
struct Seeds {
    master: u64,
    cv_plan: u64,
    candidate_fits: u64,
    complex_dnn: u64,
    benchmark: u64,
    refit: u64,
}

#[derive(Serialize)]
struct DatasetInfo<'a> {
    rows: usize,
    features: &'a [String],
    targets: &'a [String],
    dropped_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    ingest: Option<&'a IngestSummary>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    study: &'a str,
    lambda_opt: f64,
    correlation: &'a str,
    selected_id: usize,
    selected: Selected<'a>,
    lambda_curve: &'a [(f64, Option<f64>)],
    candidates: Vec<CandidateRow<'a>>,
    benchmark: Option<BaselineRow<'a>>,
    complex_dnn: BaselineRow<'a>,
    infeasible_ids: &'a [usize],
    seeds: Seeds,
    dataset: DatasetInfo<'a>,
    config: &'a RunConfig,
}

fn complexity(v: f64) -> Complexity {
    Complexity { exact: v, display: (v + 0.5).floor() }
}

fn baseline<'a>(rep: &SelectionReport, b: &'a BaselineCvRecord) -> BaselineRow<'a> {
    let mc = rep.baseline_mc(b);
    BaselineRow {
        name: &b.name,
        widths: &b.widths,
        r: complexity(b.r.value),
        n_params: b.n_params,
        loss_cv: b.loss_cv,
        loss_cv_val: b.loss_cv_val,
        mc_cv: mc.mc_cv,
        mc_cv_val: mc.mc_cv_val,
        acc_cv: b.acc_cv,
        acc_cv_val: b.acc_cv_val,
        fold_train: &b.fold_train,
        fold_val: &b.fold_val,
    }
}

fn candidate<'a>(rec: &'a CandidateCvRecord, mc: &McPair) -> CandidateRow<'a> {
    CandidateRow {
        model_id: rec.model_id,
        form: &rec.form,
        r: complexity(rec.r.value),
        n_params: rec.n_params,
        loss_cv: rec.loss_cv,
        loss_cv_val: rec.loss_cv_val,
        mc_cv: mc.mc_cv,
        mc_cv_val: mc.mc_cv_val,
        acc_cv: rec.acc_cv,
        acc_cv_val: rec.acc_cv_val,
        fold_train: &rec.fold_train,
        fold_val: &rec.fold_val,
        failed_folds: &rec.failed_folds,
    }
}

/// Pretty JSON with a trailing newline. Contains no timestamps, so equal
/// configurations give byte-identical output.
pub fn json_string(run: &RunOutput) -> String {
    let rep = &run.report;
    let sel = rep.selected();
    let seed = run.config.seed;
    let doc = JsonReport {
        study: &run.config.study,
        lambda_opt: rep.lambda_opt,
        correlation: &rep.correlation,
        selected_id: rep.selection.selected_id,
        selected: Selected {
            model_id: sel.model_id,
            form: &sel.form,
            r: complexity(sel.r.value),
            theta_hat: &rep.refit_theta,
            refit_train_loss: rep.refit_train_loss,
            tie_break_applied: rep.selection.tie_break_applied,
        },
        lambda_curve: &rep.lambda_curve,
        candidates: rep.records.iter().zip(&rep.selection.mc).map(|(r, m)| candidate(r, m)).collect(),
        benchmark: rep.benchmark.as_ref().map(|b| baseline(rep, b)),
        complex_dnn: baseline(rep, &rep.full),
        infeasible_ids: &rep.infeasible_ids,
        seeds: Seeds {
            master: seed,
            cv_plan: rep.plan_seed,
            candidate_fits: seed,
            complex_dnn: seed,
            benchmark: seed,
            refit: derive_seed(seed, &[tag::REFIT, sel.model_id as u64]),
        },
        dataset: DatasetInfo {
            rows: run.dataset.len(),
            features: &run.dataset.feature_names,
            targets: &run.dataset.target_names,
            dropped_rows: run.ingest.as_ref().map_or(0, |i| i.rows_dropped),
            ingest: run.ingest.as_ref(),
        },
        config: &run.config,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_json_file(run: &RunOutput, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, json_string(run))
        .map_err(|source| CliError::Output { path: path.display().to_string(), source })
}
