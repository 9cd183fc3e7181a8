//! Fitting candidate parameters by full-batch adaptive-moment descent with
//! random restarts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::expr::{CandidateModel, ExprError, OutputLink, Prepared, Workspace};
use crate::loss::{Loss, LossKind};

pub use crate::loss::{cross_entropy_loss, mse_loss};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("dataset is empty")]
    EmptyData,
    #[error("model {model_id}: target width {got} does not match output width {expected}")]
    TargetWidth { model_id: usize, got: usize, expected: usize },
    #[error(transparent)]
    Domain(#[from] ExprError),
    #[error("model {model_id} ({form}): every restart produced a non-finite loss")]
    AllRestartsFailed { model_id: usize, form: String },
    #[error("invalid fit configuration: {0}")]
    Config(String),
}

/// Adaptive moment estimation with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub loss: LossKind,
    pub learning_rate: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Damped Gauss-Newton steps applied to each restart's best Adam iterate;
    /// zero leaves the Adam result untouched.
    pub refine_steps: usize,
    /// Keep the best-so-far loss at every iteration of the winning restart.
    pub record_trace: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            loss: LossKind::Mse,
            learning_rate: 0.01,
            iterations: 2000,
            restarts: 5,
            init_scale: 1.0,
            seed: 0,
            refine_steps: 0,
            record_trace: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.iterations == 0 || self.restarts == 0 {
            return Err(FitError::Config("iterations and restarts must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.init_scale > 0.0) {
            return Err(FitError::Config("learning_rate and init_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    pub train_loss: f64,
    pub converged: bool,
    pub restarts_tried: usize,
    pub best_restart: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<f64>>,
}

/// Mean loss of a candidate over a prepared batch, with its gradient.
pub struct Objective<'a> {
    model: &'a CandidateModel,
    prepared: Prepared,
    targets: &'a [f64],
    kind: LossKind,
    loss: &'static dyn Loss,
}

impl<'a> Objective<'a> {
    pub fn new(model: &'a CandidateModel, data: &'a Dataset, loss: LossKind) -> Result<Self, FitError> {
        if data.is_empty() {
            return Err(FitError::EmptyData);
        }
        let width = model.output_link.width();
        if data.n_targets() != width {
            return Err(FitError::TargetWidth {
                model_id: model.model_id,
                got: data.n_targets(),
                expected: width,
            });
        }
        let prepared = model.tape().prepare(data.features(), data.n_features())?;
        Ok(Objective { model, prepared, targets: data.targets(), kind: loss, loss: loss.get() })
    }

    pub fn rows(&self) -> usize {
        self.prepared.rows()
    }

    fn pass(&self, theta: &[f64], ws: &mut Workspace, grad: Option<&mut [f64]>) -> f64 {
        let n = self.rows();
        let link = self.model.output_link;
        let width = link.width();
        let scores = self.model.tape().forward(theta, &self.prepared, ws).to_vec();
        let mut pred = [0.0; 2];
        let mut dpred = [0.0; 2];
        let mut total = 0.0;
        let want_grad = grad.is_some();
        let mut seed = if want_grad { vec![0.0; n] } else { Vec::new() };
        for (i, &s) in scores.iter().enumerate() {
            let target = &self.targets[i * width..(i + 1) * width];
            link.apply(s, &mut pred[..width]);
            total += self.loss.row_value(&pred[..width], target);
            if want_grad {
                self.loss.row_grad(&pred[..width], target, &mut dpred[..width]);
                seed[i] = link.backprop(s, &dpred[..width]) / n as f64;
            }
        }
        let value = total / n as f64;
        if let Some(g) = grad {
            if value.is_finite() {
                self.model.tape().backward(&seed, ws, g);
            }
        }
        value
    }

    pub fn value(&self, theta: &[f64], ws: &mut Workspace) -> f64 {
        self.pass(theta, ws, None)
    }

    /// Loss, gradient and the Gauss-Newton curvature `mean_i w_i J_i J_i^T`,
    /// where `J_i` is the score gradient of row `i` and `w_i` the second
    /// derivative of its loss with respect to the score.
    fn gauss_newton(&self, theta: &[f64], ws: &mut Workspace) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let n = self.rows();
        let k = theta.len();
        let link = self.model.output_link;
        let width = link.width();
        let scores = self.model.tape().forward(theta, &self.prepared, ws).to_vec();
        let mut jac = vec![0.0; n * k];
        self.model.tape().jacobian(n, ws, &mut jac);
        let mut pred = [0.0; 2];
        let mut dpred = [0.0; 2];
        let mut total = 0.0;
        let mut grad: DVector<f64> = DVector::zeros(k);
        let mut gn: DMatrix<f64> = DMatrix::zeros(k, k);
        for (i, &s) in scores.iter().enumerate() {
            let target = &self.targets[i * width..(i + 1) * width];
            link.apply(s, &mut pred[..width]);
            total += self.loss.row_value(&pred[..width], target);
            self.loss.row_grad(&pred[..width], target, &mut dpred[..width]);
            let ds = link.backprop(s, &dpred[..width]);
            let w = self.curvature(s, target);
            let row = &jac[i * k..(i + 1) * k];
            for a in 0..k {
                grad[a] += ds * row[a];
                for b in 0..=a {
                    gn[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let scale = 1.0 / n as f64;
        for a in 0..k {
            for b in 0..a {
                gn[(b, a)] = gn[(a, b)];
            }
        }
        let value = total * scale;
        (value.is_finite() && grad.iter().all(|g| g.is_finite()) && gn.iter().all(|g| g.is_finite()))
            .then(|| (value, grad * scale, gn * scale))
    }

    fn curvature(&self, s: f64, target: &[f64]) -> f64 {
        let link = self.model.output_link;
        let p = crate::expr::sigmoid(s);
        let dp = p * (1.0 - p);
        match (link, self.kind) {
            (OutputLink::Identity, LossKind::Mse) => 2.0,
            (OutputLink::Sigmoid | OutputLink::SoftmaxPair, LossKind::Mse) => 2.0 * dp * dp,
            (OutputLink::SoftmaxPair, LossKind::CrossEntropy) => dp * target.iter().sum::<f64>(),
            _ => {
                let width = link.width();
                let h = 1e-4 * s.abs().max(1.0);
                let mut pred = [0.0; 2];
                let mut row = |x: f64| {
                    link.apply(x, &mut pred[..width]);
                    self.loss.row_value(&pred[..width], target)
                };
                ((row(s + h) - 2.0 * row(s) + row(s - h)) / (h * h)).max(0.0)
            }
        }
    }

    pub fn value_grad(&self, theta: &[f64], ws: &mut Workspace, grad: &mut [f64]) -> f64 {
        self.pass(theta, ws, Some(grad))
    }
}

struct RestartOutcome {
    theta: Vec<f64>,
    loss: f64,
    converged: bool,
    trace: Vec<f64>,
}

fn run_restart(obj: &Objective<'_>, cfg: &FitConfig, restart: usize) -> Option<RestartOutcome> {
    let k = obj.model.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(restart as u64));
    let mut theta: Vec<f64> =
        (0..k).map(|_| rng.random_range(-cfg.init_scale..=cfg.init_scale)).collect();
    let mut adam = Adam::new(k, cfg.learning_rate);
    let mut ws = Workspace::default();
    let mut grad = vec![0.0; k];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let tail_start = cfg.iterations - cfg.iterations / 10;
    let mut loss_at_tail = f64::INFINITY;
    for it in 0..=cfg.iterations {
        let loss = if it < cfg.iterations {
            obj.value_grad(&theta, &mut ws, &mut grad)
        } else {
            obj.value(&theta, &mut ws)
        };
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            if loss.is_finite() && best.as_ref().is_none_or(|(b, _)| loss < *b) {
                best = Some((loss, theta.clone()));
            }
            break;
        }
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, theta.clone()));
        }
        if cfg.record_trace {
            trace.push(best.as_ref().map_or(f64::INFINITY, |b| b.0));
        }
        if it == tail_start {
            loss_at_tail = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        }
        if it < cfg.iterations {
            adam.step(&mut theta, &grad);
        }
    }
    let (mut loss, mut theta) = best?;
    let mut converged =
        loss_at_tail.is_finite() && (loss_at_tail - loss) <= 1e-6 * loss_at_tail.abs().max(1e-12);
    if cfg.refine_steps > 0 {
        let (l, t, c) = refine(obj, theta, loss, cfg.refine_steps, &mut ws, cfg.record_trace.then_some(&mut trace));
        converged |= c;
        (loss, theta) = (l, t);
    }
    Some(RestartOutcome { theta, loss, converged, trace })
}

/// Levenberg-Marquardt on the Gauss-Newton model with Marquardt's diagonal
/// scaling. Only decreasing steps are taken, so the loss never rises.
fn refine(
    obj: &Objective<'_>,
    mut theta: Vec<f64>,
    mut loss: f64,
    steps: usize,
    ws: &mut Workspace,
    mut trace: Option<&mut Vec<f64>>,
) -> (f64, Vec<f64>, bool) {
    let k = theta.len();
    let mut damping = 1e-3;
    for _ in 0..steps {
        let Some((value, grad, gn)) = obj.gauss_newton(&theta, ws) else {
            break;
        };
        loss = loss.min(value);
        let mut improved = false;
        while damping < 1e12 {
            let mut a = gn.clone();
            for i in 0..k {
                a[(i, i)] += damping * gn[(i, i)].max(1e-12);
            }
            let Some(chol) = a.cholesky() else {
                damping *= 4.0;
                continue;
            };
            let step = chol.solve(&(-&grad));
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, d)| t + d).collect();
            let v = obj.value(&cand, ws);
            if v.is_finite() && v < loss {
                let rel = (loss - v) / loss.abs().max(1e-300);
                theta = cand;
                loss = v;
                damping = (damping / 3.0).max(1e-12);
                improved = true;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(loss);
                }
                if rel < 1e-12 {
                    return (loss, theta, true);
                }
                break;
            }
            damping *= 4.0;
        }
        if !improved {
            return (loss, theta, true);
        }
    }
    (loss, theta, false)
}

/// Minimizes the mean loss of `model` over `data`. Restart `r` draws its
/// starting point from seed `cfg.seed + r`; the lowest final loss wins, ties
/// going to the earliest restart.
pub fn fit(model: &CandidateModel, data: &Dataset, cfg: &FitConfig) -> Result<FitResult, FitError> {
    cfg.validate()?;
    let obj = Objective::new(model, data, cfg.loss)?;
    let mut winner: Option<(usize, RestartOutcome)> = None;
    for r in 0..cfg.restarts {
        if let Some(out) = run_restart(&obj, cfg, r) {
            if winner.as_ref().is_none_or(|(_, w)| out.loss < w.loss) {
                winner = Some((r, out));
            }
        }
    }
    let (best_restart, out) = winner.ok_or_else(|| FitError::AllRestartsFailed {
        model_id: model.model_id,
        form: model.form(None),
    })?;
    let mut ws = Workspace::default();
    let train_loss = obj.value(&out.theta, &mut ws);
    Ok(FitResult {
        theta_hat: out.theta,
        train_loss,
        converged: out.converged,
        restarts_tried: cfg.restarts,
        best_restart,
        trace: cfg.record_trace.then_some(out.trace),
    })
}

/// Mean loss of `model` (at `theta`) on `data`; `+inf` when any row falls
/// outside the model's domain or evaluates to a non-finite value.
pub fn evaluate_loss(model: &CandidateModel, theta: &[f64], data: &Dataset, loss: LossKind) -> f64 {
    match Objective::new(model, data, loss) {
        Ok(obj) => {
            let v = obj.value(theta, &mut Workspace::default());
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Fraction of rows whose argmax prediction matches the argmax label.
pub fn classification_accuracy(model: &CandidateModel, theta: &[f64], data: &Dataset) -> f64 {
    let Ok(prep) = model.tape().prepare(data.features(), data.n_features()) else {
        return 0.0;
    };
    let mut ws = Workspace::default();
    let scores = model.tape().forward(theta, &prep, &mut ws);
    let hits = scores
        .iter()
        .enumerate()
        .filter(|(i, &s)| {
            let y = data.y(*i);
            // positive class iff score > 0 under the softmax pair
            (s > 0.0) == (y[1] > y[0])
        })
        .count();
    hits as f64 / data.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{input, param, BaseFunction, OutputLink};

    fn linear_model() -> CandidateModel {
        let f1 = BaseFunction::new("id", 1, input(0)).unwrap();
        let f2 = BaseFunction::new("lin", 1, param(0) * input(0)).unwrap();
        CandidateModel::new(1, f1, vec![f2], vec![0], OutputLink::Identity).unwrap()
    }

    fn line_data() -> Dataset {
        let mut ds = Dataset::new(vec!["x".into()], vec!["y".into()]);
        for i in 0..20 {
            let x = i as f64 / 10.0 - 1.0;
            ds.push(&[x], &[2.0 * x]).unwrap();
        }
        ds
    }

    #[test]
    fn recovers_exact_linear_family() {
        for seed in [0, 7, 123] {
            let cfg = FitConfig { seed, ..FitConfig::default() };
            let res = fit(&linear_model(), &line_data(), &cfg).unwrap();
            assert!((res.theta_hat[0] - 2.0).abs() < 1e-4, "{:?}", res.theta_hat);
            assert!(res.train_loss <= 1e-8);
        }
    }

    #[test]
    fn train_loss_matches_reevaluation() {
        let model = linear_model();
        let data = line_data();
        let res = fit(&model, &data, &FitConfig { iterations: 50, ..FitConfig::default() }).unwrap();
        let again = evaluate_loss(&model, &res.theta_hat, &data, LossKind::Mse);
        assert!((again - res.train_loss).abs() <= 1e-10);
    }

    #[test]
    fn deterministic_given_seed() {
        let cfg = FitConfig { iterations: 300, seed: 42, ..FitConfig::default() };
        let a = fit(&linear_model(), &line_data(), &cfg).unwrap();
        let b = fit(&linear_model(), &line_data(), &cfg).unwrap();
        assert_eq!(a.theta_hat, b.theta_hat);
        assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
    }

    #[test]
    fn trace_is_monotone() {
        let cfg = FitConfig { iterations: 400, record_trace: true, ..FitConfig::default() };
        let res = fit(&linear_model(), &line_data(), &cfg).unwrap();
        let trace = res.trace.unwrap();
        assert!(trace.len() >= 401);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn empty_data_and_bad_config_are_errors() {
        let empty = Dataset::new(vec!["x".into()], vec!["y".into()]);
        assert_eq!(fit(&linear_model(), &empty, &FitConfig::default()), Err(FitError::EmptyData));
        let cfg = FitConfig { restarts: 0, ..FitConfig::default() };
        assert!(matches!(fit(&linear_model(), &line_data(), &cfg), Err(FitError::Config(_))));
    }

    #[test]
    fn all_restarts_failing_is_reported() {
        // 1 / (t1 * 0) is non-finite for every start
        let f1 = BaseFunction::new("id", 1, input(0)).unwrap();
        let f2 = BaseFunction::new("bad", 1, crate::expr::constant(1.0) / (param(0) * input(0))).unwrap();
        let model = CandidateModel::new(3, f1, vec![f2], vec![0], OutputLink::Identity).unwrap();
        let mut ds = Dataset::new(vec!["x".into()], vec!["y".into()]);
        ds.push(&[0.0], &[1.0]).unwrap();
        let err = fit(&model, &ds, &FitConfig { iterations: 5, ..FitConfig::default() }).unwrap_err();
        assert!(matches!(err, FitError::AllRestartsFailed { model_id: 3, .. }));
    }
}
