//! Run configuration. A study supplies complete defaults; a TOML file only
//! needs the keys it changes.

use std::path::{Path, PathBuf};

use interpfn_core::expr::{ComplexityKind, OutputLink, PairingMode};
use interpfn_core::mlp::{MlpSpec, OutputActivation};
use interpfn_core::loss::LossKind;
use interpfn_core::optim::FitConfig;
use interpfn_core::select::LambdaGrid;
use interpfn_core::studies::{FisherDesign, GngRanges, InputMode, TrialRanges};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::study;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub study: String,
    pub seed: u64,
    /// Rows to generate (simulation studies only).
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial: Option<TrialRanges>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gng: Option<GngSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fisher: Option<FisherSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularSection>,
    pub candidates: CandidateSection,
    pub selection: SelectionSection,
    pub fit: FitSection,
    pub full: NetworkSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<NetworkSection>,
    pub heatmap: HeatmapSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GngSection {
    pub input_mode: InputMode,
    pub ranges: GngRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherSection {
    /// Enumerate every table instead of drawing `rows` at random.
    pub exhaustive: bool,
    pub design: FisherDesign,
}

/// Target rescaling applied at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetTransform {
    None,
    /// `(ln y + shift) / scale`
    LogAffine { shift: f64, scale: f64 },
    /// `(y + shift) / scale`
    Affine { shift: f64, scale: f64 },
}

impl TargetTransform {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            TargetTransform::None => y,
            TargetTransform::LogAffine { shift, scale } => (y.ln() + shift) / scale,
            TargetTransform::Affine { shift, scale } => (y + shift) / scale,
        }
    }

    pub fn invert(self, v: f64) -> f64 {
        match self {
            TargetTransform::None => v,
            TargetTransform::LogAffine { shift, scale } => (v * scale - shift).exp(),
            TargetTransform::Affine { shift, scale } => v * scale - shift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSection {
    /// Relative paths resolve against the config file's directory.
    pub csv: PathBuf,
    pub target: String,
    /// Covariate columns; empty means every column except the target.
    pub features: Vec<String>,
    pub target_transform: TargetTransform,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSection {
    pub first_layer: Vec<String>,
    pub second_layer: Vec<String>,
    /// Number of second-layer slots `J`.
    pub slots: usize,
    pub pairing: PairingMode,
    /// Size of each covariate subset; absent means all covariates at once.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset_size: Option<usize>,
    pub link: OutputLink,
    pub complexity: ComplexityKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub folds: usize,
    pub grid: LambdaGrid,
    pub correlation: String,
}

/// Candidate optimizer settings; the seed comes from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub init_scale: f64,
    pub refine_steps: usize,
}

impl FitSection {
    pub fn new(loss: LossKind) -> Self {
        let d = FitConfig::default();
        FitSection {
            loss,
            learning_rate: d.learning_rate,
            iterations: d.iterations,
            restarts: d.restarts,
            init_scale: d.init_scale,
            refine_steps: d.refine_steps,
        }
    }

    pub fn config(&self, seed: u64) -> FitConfig {
        FitConfig {
            loss: self.loss,
            learning_rate: self.learning_rate,
            iterations: self.iterations,
            restarts: self.restarts,
            init_scale: self.init_scale,
            seed,
            refine_steps: self.refine_steps,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub output: OutputActivation,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl NetworkSection {
    pub fn new(hidden: &[usize], output: OutputActivation, learning_rate: f64) -> Self {
        NetworkSection {
            hidden: hidden.to_vec(),
            output,
            dropout_rate: 0.2,
            epochs: 100,
            batch_size: 10,
            learning_rate,
        }
    }

    pub fn spec(&self, inputs: usize, outputs: usize, seed: u64) -> MlpSpec {
        let mut widths = vec![inputs];
        widths.extend(&self.hidden);
        widths.push(outputs);
        MlpSpec {
            dropout_rate: self.dropout_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            ..MlpSpec::new(&widths, self.output)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapSection {
    pub steps: usize,
    pub views: Vec<String>,
    /// Two covariate names for the `model` and `f2_*` views; empty means the
    /// first two covariates of the selected model. Other covariates are held
    /// at their means.
    pub axes: Vec<String>,
}

impl Default for HeatmapSection {
    fn default() -> Self {
        HeatmapSection {
            steps: 50,
            views: ["model", "f1", "f2_1", "f2_2"].iter().map(|s| s.to_string()).collect(),
            axes: Vec::new(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(existing) => merge(existing, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// One-line diagnostic: position (when known) and message.
fn toml_error(e: &toml::de::Error, text: Option<&str>) -> CliError {
    let msg = e.message().split_whitespace().collect::<Vec<_>>().join(" ");
    match (e.span(), text) {
        (Some(span), Some(text)) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            CliError::Config(format!("line {line}, column {col}: {msg}"))
        }
        _ => CliError::Config(e.to_string().split_whitespace().collect::<Vec<_>>().join(" ")),
    }
}

impl RunConfig {
    /// Defaults of `study`, overridden key by key by `overrides`.
    pub fn from_toml_str(text: &str, study_override: Option<&str>) -> Result<RunConfig, CliError> {
        let over: toml::Table = text.parse().map_err(|e| toml_error(&e, Some(text)))?;
        let name = study_override
            .map(str::to_string)
            .or_else(|| over.get("study").and_then(|v| v.as_str()).map(str::to_string))
            .ok_or_else(|| CliError::Config("no study given (set `study` or pass --study)".into()))?;
        let defaults = study::lookup(&name)?.default_config();
        let mut base = toml::Value::try_from(&defaults).map_err(|e| CliError::Config(e.to_string()))?;
        merge(&mut base, toml::Value::Table(over));
        if let toml::Value::Table(t) = &mut base {
            t.insert("study".into(), toml::Value::String(name));
        }
        let cfg: RunConfig = base.try_into().map_err(|e: toml::de::Error| toml_error(&e, None))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, study_override: Option<&str>) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, study_override)?;
        if let (Some(tab), Some(dir)) = (cfg.tabular.as_mut(), path.parent()) {
            if tab.csv.is_relative() {
                tab.csv = dir.join(&tab.csv);
            }
        }
        Ok(cfg)
    }

    pub fn defaults(study_name: &str) -> Result<RunConfig, CliError> {
        Ok(study::lookup(study_name)?.default_config())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let lib = interpfn_core::expr::BaseFunctionLibrary::builtin();
        for id in self.candidates.first_layer.iter().chain(&self.candidates.second_layer) {
            lib.get(id).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.selection.folds < 2 {
            return Err(CliError::Config(format!("selection.folds must be at least 2, got {}", self.selection.folds)));
        }
        self.selection.grid.points().map_err(|e| CliError::Config(e.to_string()))?;
        interpfn_core::select::correlation_by_name(&self.selection.correlation)
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.fit.config(self.seed).validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.heatmap.steps < 2 {
            return Err(CliError::Config("heatmap.steps must be at least 2".into()));
        }
        for v in &self.heatmap.views {
            if !crate::heatmap::VIEWS.contains(&v.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown heatmap view {v:?}; expected one of {:?}",
                    crate::heatmap::VIEWS
                )));
            }
        }
        let required = match self.study.as_str() {
            "sim1" => self.trial.is_some(),
            "sim2" => self.gng.is_some(),
            "sim3" => self.fisher.is_some(),
            "tabular" => self.tabular.is_some(),
            _ => true,
        };
        if !required {
            return Err(CliError::Config(format!("study {} is missing its data section", self.study)));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
