//! Studies known to the front end. Each one supplies a complete default
//! configuration and knows how to produce its dataset; the pipeline itself is
//! study-agnostic.

use std::sync::OnceLock;

use interpfn_core::data::Dataset;
use interpfn_core::expr::{ComplexityKind, OutputLink, PairingMode};
use interpfn_core::loss::LossKind;
use interpfn_core::mlp::OutputActivation;
use interpfn_core::select::LambdaGrid;
use interpfn_core::studies::{
    fisher_dataset, gen_trial_dataset, gng_dataset, FisherDesign, FisherSampling, GngRanges, InputMode,
    TrialRanges,
};

use crate::config::{
    CandidateSection, FisherSection, FitSection, GngSection, HeatmapSection, NetworkSection, RunConfig,
    SelectionSection, TabularSection, TargetTransform,
};
use crate::error::CliError;
use crate::ingest::{ingest_csv, IngestSummary};

pub struct StudyData {
    pub dataset: Dataset,
    /// Present for CSV-backed studies.
    pub ingest: Option<IngestSummary>,
}

pub trait Study: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn default_config(&self) -> RunConfig;
    fn load(&self, cfg: &RunConfig) -> Result<StudyData, CliError>;
    /// Whether `run` also writes heatmap grids of the refit model.
    fn emits_heatmaps(&self) -> bool {
        false
    }
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}.{i}")).collect()
}

fn regression_defaults(study: &str) -> RunConfig {
    RunConfig {
        study: study.to_string(),
        seed: 1,
        rows: 1000,
        trial: None,
        gng: None,
        fisher: None,
        tabular: None,
        candidates: CandidateSection {
            first_layer: ids("sim1.f1", 3),
            second_layer: ids("sim1.f2", 4),
            slots: 2,
            pairing: PairingMode::DistinctCombinations,
            subset_size: None,
            link: OutputLink::Identity,
            complexity: ComplexityKind::TotalParams,
        },
        selection: SelectionSection { folds: 5, grid: LambdaGrid::default(), correlation: "spearman".into() },
        fit: FitSection::new(LossKind::Mse),
        full: NetworkSection::new(&[60, 60], OutputActivation::Sigmoid, 0.005),
        benchmark: Some(NetworkSection::new(&[2], OutputActivation::Sigmoid, 0.005)),
        heatmap: HeatmapSection::default(),
    }
}

fn missing(study: &str, section: &str) -> CliError {
    CliError::Config(format!("study {study} needs a [{section}] section"))
}

/// Sample-size formula of the two-stage adaptive trial.
#[derive(Default)]
pub struct TrialStudy;

impl Study for TrialStudy {
    fn name(&self) -> &'static str {
        "sim1"
    }
    fn summary(&self) -> &'static str {
        "stage-1 sample size of an adaptive two-stage trial from (mu0, alpha, beta)"
    }
    fn default_config(&self) -> RunConfig {
        RunConfig { trial: Some(TrialRanges::default()), ..regression_defaults("sim1") }
    }
    fn load(&self, cfg: &RunConfig) -> Result<StudyData, CliError> {
        let ranges = cfg.trial.as_ref().ok_or_else(|| missing("sim1", "trial"))?;
        Ok(StudyData { dataset: gen_trial_dataset(cfg.rows, ranges, cfg.seed), ingest: None })
    }
}

/// Expected Go probability of a Bayesian Go/No-Go rule.
#[derive(Default)]
pub struct GngStudy;

impl Study for GngStudy {
    fn name(&self) -> &'static str {
        "sim2"
    }
    fn summary(&self) -> &'static str {
        "expected Go probability of a single-arm binary Go/No-Go rule"
    }
    fn default_config(&self) -> RunConfig {
        let mut cfg = regression_defaults("sim2");
        cfg.gng = Some(GngSection { input_mode: InputMode::Intermediate, ranges: GngRanges::default() });
        cfg.candidates.second_layer = ids("sim2.f2", 4);
        cfg
    }
    fn load(&self, cfg: &RunConfig) -> Result<StudyData, CliError> {
        let g = cfg.gng.as_ref().ok_or_else(|| missing("sim2", "gng"))?;
        Ok(StudyData { dataset: gng_dataset(cfg.rows, &g.ranges, g.input_mode, cfg.seed), ingest: None })
    }
}

/// Significance of a one-sided Fisher exact test as a binary outcome.
#[derive(Default)]
pub struct FisherStudy;

impl Study for FisherStudy {
    fn name(&self) -> &'static str {
        "sim3"
    }
    fn summary(&self) -> &'static str {
        "one-sided Fisher exact test decision from (q1, q2, n), binary outcome"
    }
    fn default_config(&self) -> RunConfig {
        let mut cfg = regression_defaults("sim3");
        cfg.fisher = Some(FisherSection { exhaustive: false, design: FisherDesign::default() });
        cfg.candidates.first_layer = ids("sim3.f1", 3);
        cfg.candidates.second_layer = ids("sim3.f2", 3);
        cfg.candidates.link = OutputLink::SoftmaxPair;
        cfg.candidates.complexity = ComplexityKind::AvgParamsPerLayer;
        cfg.fit = FitSection::new(LossKind::CrossEntropy);
        cfg.full = NetworkSection::new(&[60, 60], OutputActivation::Softmax, 0.0005);
        cfg.benchmark = Some(NetworkSection::new(&[2], OutputActivation::Softmax, 0.0005));
        cfg
    }
    fn load(&self, cfg: &RunConfig) -> Result<StudyData, CliError> {
        let f = cfg.fisher.as_ref().ok_or_else(|| missing("sim3", "fisher"))?;
        let sampling =
            if f.exhaustive { FisherSampling::Exhaustive } else { FisherSampling::Random { rows: cfg.rows } };
        Ok(StudyData { dataset: fisher_dataset(sampling, &f.design, cfg.seed), ingest: None })
    }
}

/// Any regression table supplied as CSV, searched over covariate pairs.
#[derive(Default)]
pub struct TabularStudy;

impl Study for TabularStudy {
    fn name(&self) -> &'static str {
        "tabular"
    }
    fn summary(&self) -> &'static str {
        "user CSV, every covariate pair crossed with the nhanes base-function families"
    }
    fn default_config(&self) -> RunConfig {
        let mut cfg = regression_defaults("tabular");
        cfg.tabular = Some(TabularSection {
            csv: "data.csv".into(),
            target: "y".into(),
            features: Vec::new(),
            target_transform: TargetTransform::LogAffine { shift: 3.0, scale: 14.0 },
            standardize: true,
        });
        cfg.selection.folds = 4;
        cfg.candidates.first_layer = ids("nhanes.f1", 3);
        cfg.candidates.second_layer = ids("nhanes.f2", 3);
        cfg.candidates.subset_size = Some(2);
        cfg
    }
    fn load(&self, cfg: &RunConfig) -> Result<StudyData, CliError> {
        let t = cfg.tabular.as_ref().ok_or_else(|| missing("tabular", "tabular"))?;
        let (dataset, summary) = ingest_csv(t)?;
        Ok(StudyData { dataset, ingest: Some(summary) })
    }
    fn emits_heatmaps(&self) -> bool {
        true
    }
}

/// Named studies, selectable from a config file or the command line.
pub struct StudyRegistry {
    studies: Vec<Box<dyn Study>>,
}

impl StudyRegistry {
    pub fn new() -> Self {
        StudyRegistry { studies: Vec::new() }
    }

    pub fn register<S: Study + Default + 'static>(&mut self) {
        self.studies.push(Box::new(S::default()));
    }

    pub fn get(&self, name: &str) -> Option<&dyn Study> {
        self.studies.iter().find(|s| s.name() == name).map(|s| s.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.studies.iter().map(|s| s.name()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Study> {
        self.studies.iter().map(|s| s.as_ref())
    }
}

impl Default for StudyRegistry {
    fn default() -> Self {
        let mut r = StudyRegistry::new();
        r.register::<TrialStudy>();
        r.register::<GngStudy>();
        r.register::<FisherStudy>();
        r.register::<TabularStudy>();
        r
    }
}

pub fn registry() -> &'static StudyRegistry {
    static REGISTRY: OnceLock<StudyRegistry> = OnceLock::new();
    REGISTRY.get_or_init(StudyRegistry::default)
}

pub fn lookup(name: &str) -> Result<&'static dyn Study, CliError> {
    registry().get(name).ok_or_else(|| {
        CliError::Config(format!("unknown study {name:?}; expected one of {:?}", registry().names()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_study_is_registered_once() {
        assert_eq!(registry().names(), vec!["sim1", "sim2", "sim3", "tabular"]);
        assert!(lookup("sim4").is_err());
        for s in registry().iter() {
            assert_eq!(s.default_config().study, s.name());
        }
    }
}
