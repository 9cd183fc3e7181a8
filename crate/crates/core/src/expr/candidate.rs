use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tape::Workspace;
use super::{BaseFunction, ExprError, Tape};

/// Head applied to the first-layer score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputLink {
    Identity,
    Sigmoid,
    /// `(1 / (1 + e^s), e^s / (1 + e^s))`
    SoftmaxPair,
}

pub(crate) fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl OutputLink {
    pub fn width(self) -> usize {
        match self {
            OutputLink::Identity | OutputLink::Sigmoid => 1,
            OutputLink::SoftmaxPair => 2,
        }
    }

    pub fn apply(self, score: f64, out: &mut [f64]) {
        match self {
            OutputLink::Identity => out[0] = score,
            OutputLink::Sigmoid => out[0] = sigmoid(score),
            OutputLink::SoftmaxPair => {
                let p = sigmoid(score);
                out[0] = sigmoid(-score);
                out[1] = p;
            }
        }
    }

    /// `d(upstream . link(score)) / d score`.
    pub fn backprop(self, score: f64, upstream: &[f64]) -> f64 {
        match self {
            OutputLink::Identity => upstream[0],
            OutputLink::Sigmoid => {
                let p = sigmoid(score);
                upstream[0] * p * (1.0 - p)
            }
            OutputLink::SoftmaxPair => {
                let p = sigmoid(score);
                (upstream[1] - upstream[0]) * p * (1.0 - p)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityKind {
    TotalParams,
    AvgParamsPerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityMeasure {
    pub kind: ComplexityKind,
    pub value: f64,
}

impl ComplexityMeasure {
    pub fn new(kind: ComplexityKind, total_params: usize, layers: usize) -> Self {
        let value = match kind {
            ComplexityKind::TotalParams => total_params as f64,
            ComplexityKind::AvgParamsPerLayer => total_params as f64 / layers as f64,
        };
        ComplexityMeasure { kind, value }
    }

    /// Rounded half up, for tables only.
    pub fn display(&self) -> f64 {
        (self.value + 0.5).floor()
    }
}

/// How second-layer functions are assigned to the `J` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// Every `J`-combination of distinct library entries, lexicographic.
    DistinctCombinations,
    /// Explicit index tuples into the second-layer library.
    Listed(Vec<Vec<usize>>),
}

/// One functional form `F_k` with its parameter vector.
#[derive(Debug, Clone)]
pub struct CandidateModel {
    pub model_id: usize,
    pub first_layer: BaseFunction,
    pub second_layer: Vec<BaseFunction>,
    pub covariate_subset: Vec<usize>,
    pub theta: Vec<f64>,
    pub output_link: OutputLink,
    tape: Arc<Tape>,
}

impl CandidateModel {
    pub fn new(
        model_id: usize,
        first_layer: BaseFunction,
        second_layer: Vec<BaseFunction>,
        covariate_subset: Vec<usize>,
        output_link: OutputLink,
    ) -> Result<Self, ExprError> {
        if second_layer.is_empty() {
            return Err(ExprError::Config("at least one second-layer function is required".into()));
        }
        let tape = Tape::compose(&first_layer, &second_layer, &covariate_subset)?;
        let theta = vec![0.0; tape.n_params()];
        Ok(CandidateModel {
            model_id,
            first_layer,
            second_layer,
            covariate_subset,
            theta,
            output_link,
            tape: Arc::new(tape),
        })
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self, ExprError> {
        if theta.len() != self.n_params() {
            return Err(ExprError::Config(format!(
                "model {} expects {} parameters, got {}",
                self.model_id,
                self.n_params(),
                theta.len()
            )));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn n_params(&self) -> usize {
        self.tape.n_params()
    }

    pub fn layers(&self) -> usize {
        2
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    /// `first{second_1, ..., second_J}`, optionally with covariate names.
    pub fn form(&self, feature_names: Option<&[String]>) -> String {
        let inner: Vec<&str> = self.second_layer.iter().map(|f| f.id.as_str()).collect();
        let mut s = format!("{}{{{}}}", self.first_layer.id, inner.join(", "));
        if let Some(names) = feature_names {
            let cov: Vec<&str> = self
                .covariate_subset
                .iter()
                .map(|&c| names.get(c).map_or("?", |n| n.as_str()))
                .collect();
            s.push_str(&format!(" [{}]", cov.join(", ")));
        }
        s
    }

    /// Parameter range `start..end` of layer component `owner`
    /// (0 = first layer, `j + 1` = second-layer slot `j`).
    pub fn param_range(&self, owner: usize) -> std::ops::Range<usize> {
        let mut start = 0;
        let counts = std::iter::once(self.first_layer.param_count)
            .chain(self.second_layer.iter().map(|f| f.param_count));
        for (i, c) in counts.enumerate() {
            if i == owner {
                return start..start + c;
            }
            start += c;
        }
        start..start
    }

    fn check_width(&self, x: &[f64]) -> Result<(), ExprError> {
        let need = self.covariate_subset.iter().map(|c| c + 1).max().unwrap_or(0);
        if x.len() < need {
            return Err(ExprError::Config(format!(
                "input has {} values, model {} reads feature {}",
                x.len(),
                self.model_id,
                need
            )));
        }
        Ok(())
    }

    /// Pre-link score `y'` for one row.
    pub fn score(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.check_width(x)?;
        let prep = self.tape.prepare(x, x.len())?;
        let mut ws = Workspace::default();
        let s = self.tape.forward(&self.theta, &prep, &mut ws)[0];
        if !s.is_finite() {
            let id = self.tape.first_nonfinite(&ws, 1).unwrap_or_default();
            return Err(ExprError::Domain { id, detail: format!("non-finite value {s}") });
        }
        Ok(s)
    }

    /// Model output for one row: length 1 for regression heads, length 2
    /// (summing to one) for the softmax pair.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        let s = self.score(x)?;
        let mut out = vec![0.0; self.output_link.width()];
        self.output_link.apply(s, &mut out);
        Ok(out)
    }

    /// `d(upstream . evaluate(x)) / d theta` in flat parameter order.
    pub fn gradient(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>, ExprError> {
        if upstream.len() != self.output_link.width() {
            return Err(ExprError::Config(format!(
                "upstream has {} entries, output has {}",
                upstream.len(),
                self.output_link.width()
            )));
        }
        self.check_width(x)?;
        let prep = self.tape.prepare(x, x.len())?;
        let mut ws = Workspace::default();
        let s = self.tape.forward(&self.theta, &prep, &mut ws)[0];
        if !s.is_finite() {
            let id = self.tape.first_nonfinite(&ws, 1).unwrap_or_default();
            return Err(ExprError::Domain { id, detail: format!("non-finite value {s}") });
        }
        let seed = [self.output_link.backprop(s, upstream)];
        let mut grad = vec![0.0; self.n_params()];
        self.tape.backward(&seed, &mut ws, &mut grad);
        Ok(grad)
    }

    /// Output of second-layer slot `j` at raw input `x`.
    pub fn second_layer_value(&self, j: usize, x: &[f64]) -> Result<f64, ExprError> {
        let f = self
            .second_layer
            .get(j)
            .ok_or_else(|| ExprError::Config(format!("no second-layer slot {j}")))?;
        let local: Vec<f64> = self.covariate_subset.iter().map(|&c| x[c]).collect();
        let v = f.eval(&local, &self.theta[self.param_range(j + 1)]);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain { id: f.id.clone(), detail: format!("non-finite value {v}") })
        }
    }

    /// First-layer output (after the link's positive-class component) at
    /// first-layer inputs `x1`.
    pub fn first_layer_value(&self, x1: &[f64]) -> Result<f64, ExprError> {
        let s = self.first_layer.eval(x1, &self.theta[self.param_range(0)]);
        if !s.is_finite() {
            return Err(ExprError::Domain {
                id: self.first_layer.id.clone(),
                detail: format!("non-finite value {s}"),
            });
        }
        let mut out = vec![0.0; self.output_link.width()];
        self.output_link.apply(s, &mut out);
        Ok(*out.last().unwrap())
    }

    pub fn complexity(&self, kind: ComplexityKind) -> ComplexityMeasure {
        ComplexityMeasure::new(kind, self.n_params(), self.layers())
    }
}

/// Lexicographic `k`-combinations of `0..n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Builds the candidate set: first-layer index major, then second-layer
/// tuple, then covariate subset. Model ids start at 1.
pub fn enumerate_candidates(
    f1_set: &[BaseFunction],
    f2_set: &[BaseFunction],
    slots: usize,
    pairing: &PairingMode,
    covariate_pool: &[usize],
    subset_size: Option<usize>,
    link: OutputLink,
) -> Result<Vec<CandidateModel>, ExprError> {
    if f1_set.is_empty() || f2_set.is_empty() {
        return Err(ExprError::Config("base-function sets must be nonempty".into()));
    }
    if slots == 0 {
        return Err(ExprError::Config("J must be at least 1".into()));
    }
    let tuples = match pairing {
        PairingMode::DistinctCombinations => {
            if slots > f2_set.len() {
                return Err(ExprError::Config(format!(
                    "cannot choose {slots} distinct forms from {}",
                    f2_set.len()
                )));
            }
            combinations(f2_set.len(), slots)
        }
        PairingMode::Listed(list) => {
            for t in list {
                if t.len() != slots || t.iter().any(|&i| i >= f2_set.len()) {
                    return Err(ExprError::Config(format!("invalid listed tuple {t:?}")));
                }
            }
            list.clone()
        }
    };
    let subsets = match subset_size {
        None => vec![covariate_pool.to_vec()],
        Some(k) => {
            if k == 0 || k > covariate_pool.len() {
                return Err(ExprError::Config(format!(
                    "subset size {k} invalid for a pool of {}",
                    covariate_pool.len()
                )));
            }
            combinations(covariate_pool.len(), k)
                .into_iter()
                .map(|c| c.into_iter().map(|i| covariate_pool[i]).collect())
                .collect()
        }
    };
    let mut out = Vec::with_capacity(f1_set.len() * tuples.len() * subsets.len());
    for f1 in f1_set {
        for tuple in &tuples {
            for subset in &subsets {
                let second = tuple.iter().map(|&i| f2_set[i].clone()).collect();
                out.push(CandidateModel::new(
                    out.len() + 1,
                    f1.clone(),
                    second,
                    subset.clone(),
                    link,
                )?);
            }
        }
    }
    Ok(out)
}
