//! Generate or ingest, cross-validate, select, refit, report.

use std::path::Path;

use interpfn_core::data::Dataset;
use interpfn_core::expr::{enumerate_candidates, BaseFunctionLibrary, CandidateModel};
use interpfn_core::select::{run_selection, SelectionConfig, SelectionReport};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::heatmap::{emit_heatmap, HeatmapGrid};
use crate::ingest::{write_dataset_file, IngestSummary};
use crate::report;
use crate::study::{self, StudyData};

pub struct RunOutput {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub ingest: Option<IngestSummary>,
    pub candidates: Vec<CandidateModel>,
    pub report: SelectionReport,
}

impl RunOutput {
    /// The selected candidate carrying its full-data parameters.
    pub fn selected_model(&self) -> CandidateModel {
        self.candidates[self.report.selection.selected_index]
            .clone()
            .with_theta(self.report.refit_theta.clone())
            .expect("refit parameters match the model")
    }
}

pub fn load_data(cfg: &RunConfig) -> Result<StudyData, CliError> {
    study::lookup(&cfg.study)?.load(cfg)
}

pub fn build_candidates(cfg: &RunConfig, data: &Dataset) -> Result<Vec<CandidateModel>, CliError> {
    let lib = BaseFunctionLibrary::builtin();
    let c = &cfg.candidates;
    let err = |e: interpfn_core::expr::ExprError| CliError::Config(e.to_string());
    let f1 = lib.resolve(&c.first_layer).map_err(err)?;
    let f2 = lib.resolve(&c.second_layer).map_err(err)?;
    let pool: Vec<usize> = (0..data.n_features()).collect();
    let models = enumerate_candidates(&f1, &f2, c.slots, &c.pairing, &pool, c.subset_size, c.link).map_err(err)?;
    if c.link.width() != data.n_targets() {
        return Err(CliError::Config(format!(
            "candidate link {:?} produces {} outputs but the dataset has {} target columns",
            c.link,
            c.link.width(),
            data.n_targets()
        )));
    }
    Ok(models)
}

pub fn selection_config(cfg: &RunConfig, data: &Dataset) -> SelectionConfig {
    let (m, t) = (data.n_features(), data.n_targets());
    SelectionConfig {
        folds: cfg.selection.folds,
        grid: cfg.selection.grid,
        correlation: cfg.selection.correlation.clone(),
        fit: cfg.fit.config(cfg.seed),
        full: cfg.full.spec(m, t, cfg.seed),
        benchmark: cfg.benchmark.as_ref().map(|b| b.spec(m, t, cfg.seed)),
        complexity: cfg.candidates.complexity,
        seed: cfg.seed,
    }
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let StudyData { dataset, ingest } = load_data(cfg)?;
    let candidates = build_candidates(cfg, &dataset)?;
    let sel = selection_config(cfg, &dataset);
    if sel.folds > dataset.len() {
        return Err(CliError::Config(format!("{} folds for {} rows", sel.folds, dataset.len())));
    }
    let report = run_selection(&candidates, &dataset, &sel)?;
    Ok(RunOutput { config: cfg.clone(), dataset, ingest, candidates, report })
}

fn create_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Output { path: out.display().to_string(), source })
}

pub fn heatmaps(run: &RunOutput) -> Result<Vec<HeatmapGrid>, CliError> {
    let model = run.selected_model();
    let h = &run.config.heatmap;
    h.views
        .iter()
        .filter(|v| *v != "f1" || model.second_layer.len() == 2)
        .filter(|v| match v.as_str() {
            "f2_2" => model.second_layer.len() >= 2,
            _ => true,
        })
        .map(|v| emit_heatmap(&model, &run.dataset, v, h.steps, &h.axes))
        .collect()
}

pub fn write_heatmaps(run: &RunOutput, out: &Path) -> Result<Vec<String>, CliError> {
    create_dir(out)?;
    let mut names = Vec::new();
    for g in heatmaps(run)? {
        let name = format!("heatmap_{}.csv", g.view);
        g.write_file(&out.join(&name))?;
        names.push(name);
    }
    Ok(names)
}

/// Writes `report.csv`, `report.json`, `dataset.csv` and, for studies that
/// ask for them, the heatmap grids. Returns the file names written.
pub fn write_artifacts(run: &RunOutput, out: &Path) -> Result<Vec<String>, CliError> {
    create_dir(out)?;
    let mut written = vec!["report.csv".to_string(), "report.json".to_string(), "dataset.csv".to_string()];
    report::write_csv_file(&run.report, &out.join("report.csv"))?;
    report::write_json_file(run, &out.join("report.json"))?;
    write_dataset_file(&run.dataset, &out.join("dataset.csv"))?;
    if study::lookup(&run.config.study)?.emits_heatmaps() {
        written.extend(write_heatmaps(run, out)?);
    }
    Ok(written)
}
