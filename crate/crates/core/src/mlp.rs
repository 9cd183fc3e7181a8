//! Dense ReLU networks used as the saturated reference model and as the
//! small benchmark model.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::expr::ComplexityMeasure;
use crate::loss::CE_CLAMP;
use crate::optim::Adam;

const FORMAT_TAG: &str = "interpfn-mlp 1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlpError {
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("input width {got} does not match network input width {expected}")]
    Width { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyData,
    #[error("training loss became non-finite in epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("network file line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    Relu,
}

/// Output head. Sigmoid pairs with squared error, softmax with cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Softmax,
}

impl OutputActivation {
    fn name(self) -> &'static str {
        match self {
            OutputActivation::Sigmoid => "sigmoid",
            OutputActivation::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl MlpSpec {
    /// `widths` runs input, hidden..., output. Training settings default to
    /// dropout 0.2, 100 epochs, batches of 10 and learning rate 0.005.
    pub fn new(widths: &[usize], output: OutputActivation) -> Self {
        MlpSpec {
            layer_widths: widths.to_vec(),
            hidden_activation: HiddenActivation::Relu,
            output_activation: output,
            dropout_rate: 0.2,
            epochs: 100,
            batch_size: 10,
            learning_rate: 0.005,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        let w = &self.layer_widths;
        if w.len() < 3 {
            return Err(MlpError::Spec("need input, at least one hidden layer, and output".into()));
        }
        if w.contains(&0) {
            return Err(MlpError::Spec(format!("layer widths must be positive, got {w:?}")));
        }
        if self.output_activation == OutputActivation::Softmax && w[w.len() - 1] < 2 {
            return Err(MlpError::Spec("softmax output needs at least two units".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(MlpError::Spec(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(MlpError::Spec("epochs, batch size and learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    /// Weight layers (one per consecutive pair of widths).
    pub fn layers(&self) -> usize {
        self.layer_widths.len() - 1
    }
}

/// Dense parameter count `sum (w_{l-1} * w_l + w_l)`.
pub fn param_count(spec: &MlpSpec) -> usize {
    spec.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub fn complexity(spec: &MlpSpec, kind: crate::expr::ComplexityKind) -> ComplexityMeasure {
    ComplexityMeasure::new(kind, param_count(spec), spec.layers())
}

/// Weights in one flat vector: for each layer, its `out x in` matrix
/// row-major followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpState {
    widths: Vec<usize>,
    output: OutputActivation,
    params: Vec<f64>,
    offsets: Vec<usize>,
    pub trained: bool,
}

struct Scratch {
    acts: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(widths: &[usize]) -> Self {
        Scratch {
            acts: widths.iter().map(|&w| vec![0.0; w]).collect(),
            masks: widths.iter().map(|&w| vec![1.0; w]).collect(),
            deltas: widths.iter().map(|&w| vec![0.0; w]).collect(),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softmax(z: &[f64], out: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

impl MlpState {
    pub fn zeros(spec: &MlpSpec) -> Result<Self, MlpError> {
        spec.validate()?;
        let mut offsets = Vec::with_capacity(spec.layers() + 1);
        let mut at = 0;
        for w in spec.layer_widths.windows(2) {
            offsets.push(at);
            at += w[0] * w[1] + w[1];
        }
        offsets.push(at);
        Ok(MlpState {
            widths: spec.layer_widths.clone(),
            output: spec.output_activation,
            params: vec![0.0; at],
            offsets,
            trained: false,
        })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init(spec: &MlpSpec, rng: &mut impl Rng) -> Result<Self, MlpError> {
        let mut st = Self::zeros(spec)?;
        for l in 0..st.layers() {
            let (fan_in, fan_out) = (st.widths[l], st.widths[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = st.offsets[l];
            for p in &mut st.params[start..start + fan_in * fan_out] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(st)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weight_slice(&self, l: usize) -> (&[f64], &[f64]) {
        let (fi, fo) = (self.widths[l], self.widths[l + 1]);
        let s = self.offsets[l];
        (&self.params[s..s + fi * fo], &self.params[s + fi * fo..s + fi * fo + fo])
    }

    /// Forward pass into `sc.acts`; hidden activations are multiplied by
    /// `sc.masks` (all ones at inference). The last entry of `acts` holds
    /// the head output.
    fn forward_row(&self, x: &[f64], sc: &mut Scratch) {
        sc.acts[0].copy_from_slice(x);
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (w, b) = self.weight_slice(l);
            let fi = self.widths[l];
            let (prev, next) = sc.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            for (o, row) in out.iter_mut().enumerate() {
                let wr = &w[o * fi..(o + 1) * fi];
                let mut z = b[o];
                for (a, c) in wr.iter().zip(input.iter()) {
                    z += a * c;
                }
                *row = z;
            }
            if l < last {
                let mask = &sc.masks[l + 1];
                for (v, m) in out.iter_mut().zip(mask) {
                    *v = if *v > 0.0 { *v * m } else { 0.0 };
                }
            }
        }
        let head = &mut sc.acts[last + 1];
        match self.output {
            OutputActivation::Sigmoid => head.iter_mut().for_each(|v| *v = sigmoid(*v)),
            OutputActivation::Softmax => {
                let z = head.clone();
                softmax(&z, head);
            }
        }
    }

    /// Row loss given the head output in `sc.acts`; also writes the
    /// pre-activation gradient of the head into `sc.deltas`.
    fn head_loss(&self, y: &[f64], sc: &mut Scratch) -> f64 {
        let last = self.layers();
        let p = &sc.acts[last];
        let d = &mut sc.deltas[last];
        match self.output {
            OutputActivation::Sigmoid => {
                let k = p.len() as f64;
                let mut loss = 0.0;
                for ((di, &pi), &yi) in d.iter_mut().zip(p).zip(y) {
                    let e = pi - yi;
                    loss += e * e;
                    *di = 2.0 * e * pi * (1.0 - pi) / k;
                }
                loss / k
            }
            OutputActivation::Softmax => {
                let ysum: f64 = y.iter().sum();
                let mut loss = 0.0;
                for ((di, &pi), &yi) in d.iter_mut().zip(p).zip(y) {
                    loss -= yi * pi.clamp(CE_CLAMP, 1.0 - CE_CLAMP).ln();
                    *di = pi * ysum - yi;
                }
                loss
            }
        }
    }

    /// Accumulates `scale * d(row loss)/d(params)` into `grad`.
    fn backward_row(&self, sc: &mut Scratch, grad: &mut [f64], scale: f64) {
        for l in (0..self.layers()).rev() {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let s = self.offsets[l];
            let (w, _) = self.weight_slice(l);
            let (dprev, dcur) = sc.deltas.split_at_mut(l + 1);
            let delta = &dcur[0];
            let input = &sc.acts[l];
            let (gw, gb) = grad[s..s + fi * fo + fo].split_at_mut(fi * fo);
            for o in 0..fo {
                let d = delta[o] * scale;
                if d != 0.0 {
                    for (g, a) in gw[o * fi..(o + 1) * fi].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                gb[o] += d;
            }
            if l > 0 {
                let dp = &mut dprev[l];
                dp.iter_mut().for_each(|v| *v = 0.0);
                for o in 0..fo {
                    let d = delta[o];
                    if d != 0.0 {
                        for (v, wv) in dp.iter_mut().zip(&w[o * fi..(o + 1) * fi]) {
                            *v += d * wv;
                        }
                    }
                }
                // ReLU with dropout: the stored activation is relu(z) * mask
                for (v, (&a, &m)) in dp.iter_mut().zip(input.iter().zip(&sc.masks[l])) {
                    *v = if a > 0.0 { *v * m } else { 0.0 };
                }
            }
        }
    }

    fn check_width(&self, got: usize) -> Result<(), MlpError> {
        if got != self.widths[0] {
            return Err(MlpError::Width { expected: self.widths[0], got });
        }
        Ok(())
    }

    /// Dropout-free forward pass.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        self.check_width(x.len())?;
        let mut sc = Scratch::new(&self.widths);
        self.forward_row(x, &mut sc);
        Ok(sc.acts[self.layers()].clone())
    }

    /// Mean loss over `data` without dropout, with its exact gradient.
    pub fn loss_and_grad(&self, data: &Dataset) -> Result<(f64, Vec<f64>), MlpError> {
        self.check_width(data.n_features())?;
        if data.is_empty() {
            return Err(MlpError::EmptyData);
        }
        let mut sc = Scratch::new(&self.widths);
        let mut grad = vec![0.0; self.params.len()];
        let scale = 1.0 / data.len() as f64;
        let mut total = 0.0;
        for i in 0..data.len() {
            self.forward_row(data.x(i), &mut sc);
            total += self.head_loss(data.y(i), &mut sc);
            self.backward_row(&mut sc, &mut grad, scale);
        }
        Ok((total * scale, grad))
    }

    /// Mean loss over `data` without dropout.
    pub fn loss(&self, data: &Dataset) -> Result<f64, MlpError> {
        self.check_width(data.n_features())?;
        if data.is_empty() {
            return Err(MlpError::EmptyData);
        }
        let mut sc = Scratch::new(&self.widths);
        let mut total = 0.0;
        for i in 0..data.len() {
            self.forward_row(data.x(i), &mut sc);
            total += self.head_loss(data.y(i), &mut sc);
        }
        Ok(total / data.len() as f64)
    }

    /// Fraction of rows whose argmax output matches the argmax label.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64, MlpError> {
        self.check_width(data.n_features())?;
        if data.is_empty() {
            return Err(MlpError::EmptyData);
        }
        let mut sc = Scratch::new(&self.widths);
        let mut hits = 0usize;
        for i in 0..data.len() {
            self.forward_row(data.x(i), &mut sc);
            if argmax(&sc.acts[self.layers()]) == argmax(data.y(i)) {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let widths: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(s, "{FORMAT_TAG}");
        let _ = writeln!(s, "widths {}", widths.join(" "));
        let _ = writeln!(s, "output {}", self.output.name());
        for l in 0..self.layers() {
            let (w, b) = self.weight_slice(l);
            let fi = self.widths[l];
            let _ = writeln!(s, "layer {}", l + 1);
            for row in w.chunks(fi) {
                let _ = writeln!(s, "{}", join_floats(row));
            }
            let _ = writeln!(s, "bias {}", join_floats(b));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, MlpError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| MlpError::Parse { line: 0, detail: format!("missing {what}") })
        };
        let (ln, tag) = next("header")?;
        if tag != FORMAT_TAG {
            return Err(MlpError::Parse { line: ln, detail: format!("unrecognized header {tag:?}") });
        }
        let (ln, w) = next("widths")?;
        let widths: Vec<usize> = w
            .strip_prefix("widths ")
            .ok_or_else(|| MlpError::Parse { line: ln, detail: "expected widths".into() })?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| MlpError::Parse { line: ln, detail: format!("bad width {t:?}") }))
            .collect::<Result<_, _>>()?;
        let (ln, o) = next("output")?;
        let output = match o {
            "output sigmoid" => OutputActivation::Sigmoid,
            "output softmax" => OutputActivation::Softmax,
            _ => return Err(MlpError::Parse { line: ln, detail: format!("bad output line {o:?}") }),
        };
        let mut spec = MlpSpec::new(&widths, output);
        spec.dropout_rate = 0.0;
        let mut st = MlpState::zeros(&spec).map_err(|e| MlpError::Parse { line: 2, detail: e.to_string() })?;
        for l in 0..st.layers() {
            let (fi, fo) = (widths[l], widths[l + 1]);
            let (ln, h) = next("layer header")?;
            if h != format!("layer {}", l + 1) {
                return Err(MlpError::Parse { line: ln, detail: format!("expected layer {}", l + 1) });
            }
            let s = st.offsets[l];
            for o in 0..fo {
                let (ln, row) = next("weight row")?;
                let vals = parse_floats(row, fi, ln)?;
                st.params[s + o * fi..s + (o + 1) * fi].copy_from_slice(&vals);
            }
            let (ln, b) = next("bias")?;
            let b = b
                .strip_prefix("bias ")
                .ok_or_else(|| MlpError::Parse { line: ln, detail: "expected bias".into() })?;
            let vals = parse_floats(b, fo, ln)?;
            st.params[s + fi * fo..s + fi * fo + fo].copy_from_slice(&vals);
        }
        st.trained = true;
        Ok(st)
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

fn parse_floats(s: &str, expect: usize, line: usize) -> Result<Vec<f64>, MlpError> {
    let vals: Vec<f64> = s
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| MlpError::Parse { line, detail: format!("bad number {t:?}") }))
        .collect::<Result<_, _>>()?;
    if vals.len() != expect {
        return Err(MlpError::Parse { line, detail: format!("expected {expect} values, got {}", vals.len()) });
    }
    Ok(vals)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Minibatch training with inverted dropout on hidden units and Adam
/// updates. Initialization, shuffling and dropout masks all draw from one
/// stream seeded by `spec.seed`.
pub fn train(spec: &MlpSpec, data: &Dataset) -> Result<MlpState, MlpError> {
    spec.validate()?;
    if data.is_empty() {
        return Err(MlpError::EmptyData);
    }
    if data.n_features() != spec.input_width() {
        return Err(MlpError::Width { expected: spec.input_width(), got: data.n_features() });
    }
    if data.n_targets() != spec.output_width() {
        return Err(MlpError::Spec(format!(
            "dataset has {} targets, network outputs {}",
            data.n_targets(),
            spec.output_width()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut st = MlpState::init(spec, &mut rng)?;
    let mut adam = Adam::new(st.params.len(), spec.learning_rate);
    let mut sc = Scratch::new(&st.widths);
    let mut grad = vec![0.0; st.params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let keep = 1.0 - spec.dropout_rate;
    let hidden = st.layers() - 1;
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(spec.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                if spec.dropout_rate > 0.0 {
                    for l in 1..=hidden {
                        for m in &mut sc.masks[l] {
                            *m = if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 };
                        }
                    }
                }
                st.forward_row(data.x(i), &mut sc);
                epoch_loss += st.head_loss(data.y(i), &mut sc);
                st.backward_row(&mut sc, &mut grad, scale);
            }
            adam.step(&mut st.params, &grad);
        }
        if !epoch_loss.is_finite() || st.params.iter().any(|p| !p.is_finite()) {
            return Err(MlpError::NonFinite { epoch });
        }
    }
    st.trained = true;
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(widths: &[usize], out: OutputActivation) -> MlpSpec {
        MlpSpec::new(widths, out)
    }

    #[test]
    fn param_counts() {
        assert_eq!(param_count(&spec(&[3, 60, 60, 1], OutputActivation::Sigmoid)), 3961);
        assert_eq!(param_count(&spec(&[3, 2, 1], OutputActivation::Sigmoid)), 11);
        assert_eq!(param_count(&spec(&[3, 60, 60, 2], OutputActivation::Softmax)), 4022);
    }

    #[test]
    fn zero_network_outputs() {
        let s = MlpState::zeros(&spec(&[3, 4, 1], OutputActivation::Sigmoid)).unwrap();
        assert_eq!(s.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5]);
        let s = MlpState::zeros(&spec(&[3, 4, 2], OutputActivation::Softmax)).unwrap();
        assert_eq!(s.predict(&[1.0, 2.0, 3.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(s.predict(&[1.0]), Err(MlpError::Width { expected: 3, got: 1 }));
    }

    #[test]
    fn invalid_specs() {
        assert!(spec(&[3, 1], OutputActivation::Sigmoid).validate().is_err());
        assert!(spec(&[3, 2, 1], OutputActivation::Softmax).validate().is_err());
        let mut s = spec(&[3, 2, 1], OutputActivation::Sigmoid);
        s.dropout_rate = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn text_round_trip() {
        let sp = spec(&[3, 5, 4, 2], OutputActivation::Softmax);
        let st = MlpState::init(&sp, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let back = MlpState::from_text(&st.to_text()).unwrap();
        assert_eq!(back.params(), st.params());
        assert_eq!(back.widths(), st.widths());
        assert!(MlpState::from_text("nonsense").is_err());
    }
}
