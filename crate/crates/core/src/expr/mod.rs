//! Two-layer interpretable function skeleton.
//!
//! A [`BaseFunction`] is an expression tree over its local inputs and local
//! parameter slots. A [`CandidateModel`] composes one first-layer function
//! with `J` second-layer functions and compiles the composition into a
//! [`Tape`] for batched evaluation and reverse-mode gradients.

mod candidate;
mod library;
mod tape;

use std::collections::BTreeSet;
use std::fmt;
use std::ops;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use candidate::{
    enumerate_candidates, CandidateModel, ComplexityKind, ComplexityMeasure, OutputLink,
    PairingMode,
};
pub(crate) use candidate::sigmoid;
pub use library::BaseFunctionLibrary;
pub use tape::{Prepared, Tape, Workspace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("base function {id}: {detail}")]
    Malformed { id: String, detail: String },
    #[error("evaluation domain error in base function {id}: {detail}")]
    Domain { id: String, detail: String },
    #[error("unknown base function {0:?}")]
    Unknown(String),
    #[error("candidate configuration: {0}")]
    Config(String),
}

/// Per-input transform applied before the input enters an expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `Phi^{-1}(1 - x)`; requires `0 < x < 1`.
    UpperNormalQuantile,
    Square,
    Cube,
}

impl Transform {
    pub fn apply(self, x: f64) -> Option<f64> {
        match self {
            Transform::Identity => Some(x),
            Transform::Square => Some(x * x),
            Transform::Cube => Some(x * x * x),
            Transform::UpperNormalQuantile => {
                if x > 0.0 && x < 1.0 {
                    Some(crate::stats::upper_quantile(x))
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(usize),
    Input { index: usize, transform: Transform },
    Add(Vec<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Powi(Box<Expr>, i32),
    Neg(Box<Expr>),
}

/// Parameter slot `i`.
pub fn param(i: usize) -> Expr {
    Expr::Param(i)
}

/// Raw input `i`.
pub fn input(i: usize) -> Expr {
    Expr::Input { index: i, transform: Transform::Identity }
}

/// `Z_{1-x}` of input `i`.
pub fn upper_z(i: usize) -> Expr {
    Expr::Input { index: i, transform: Transform::UpperNormalQuantile }
}

pub fn constant(c: f64) -> Expr {
    Expr::Const(c)
}

impl Expr {
    pub fn powi(self, k: i32) -> Expr {
        Expr::Powi(Box::new(self), k)
    }

    pub fn square(self) -> Expr {
        self.powi(2)
    }

    pub fn cube(self) -> Expr {
        self.powi(3)
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Add(terms) => terms.iter().for_each(|t| t.visit(f)),
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Powi(a, _) | Expr::Neg(a) => a.visit(f),
            Expr::Const(_) | Expr::Param(_) | Expr::Input { .. } => {}
        }
    }

    pub fn param_slots(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Param(i) = e {
                out.insert(*i);
            }
        });
        out
    }

    pub fn max_input(&self) -> Option<usize> {
        let mut max = None;
        self.visit(&mut |e| {
            if let Expr::Input { index, .. } = e {
                max = Some(max.map_or(*index, |m: usize| m.max(*index)));
            }
        });
        max
    }

    /// Direct recursive evaluation. Used as an independent reference for the
    /// compiled tape.
    pub fn eval(&self, inputs: &[f64], params: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Param(i) => params[*i],
            Expr::Input { index, transform } => {
                transform.apply(inputs[*index]).unwrap_or(f64::NAN)
            }
            Expr::Add(terms) => terms.iter().map(|t| t.eval(inputs, params)).sum(),
            Expr::Mul(a, b) => a.eval(inputs, params) * b.eval(inputs, params),
            Expr::Div(a, b) => a.eval(inputs, params) / b.eval(inputs, params),
            Expr::Powi(a, k) => a.eval(inputs, params).powi(*k),
            Expr::Neg(a) => -a.eval(inputs, params),
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match self {
            Expr::Add(mut terms) => {
                terms.push(rhs);
                Expr::Add(terms)
            }
            lhs => Expr::Add(vec![lhs, rhs]),
        }
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self + Expr::Neg(Box::new(rhs))
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Param(i) => write!(f, "t{}", i + 1),
            Expr::Input { index, transform } => match transform {
                Transform::Identity => write!(f, "x{}", index + 1),
                Transform::UpperNormalQuantile => write!(f, "Z(x{})", index + 1),
                Transform::Square => write!(f, "x{}^2", index + 1),
                Transform::Cube => write!(f, "x{}^3", index + 1),
            },
            Expr::Add(terms) => {
                write!(f, "(")?;
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            Expr::Mul(a, b) => write!(f, "{a}*{b}"),
            Expr::Div(a, b) => write!(f, "{a}/{b}"),
            Expr::Powi(a, k) => write!(f, "{a}^{k}"),
            Expr::Neg(a) => write!(f, "-{a}"),
        }
    }
}

/// One element of a base-function library.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseFunction {
    pub id: String,
    pub arity: usize,
    pub param_count: usize,
    pub body: Expr,
}

impl BaseFunction {
    /// Validates that parameter slots are exactly `0..k` and inputs are
    /// below `arity`.
    pub fn new(id: impl Into<String>, arity: usize, body: Expr) -> Result<Self, ExprError> {
        let id = id.into();
        let slots = body.param_slots();
        let param_count = slots.len();
        if slots.iter().enumerate().any(|(i, &s)| i != s) {
            return Err(ExprError::Malformed {
                id,
                detail: format!("parameter slots {slots:?} are not contiguous from 0"),
            });
        }
        if let Some(m) = body.max_input() {
            if m >= arity {
                return Err(ExprError::Malformed {
                    id,
                    detail: format!("input {m} exceeds arity {arity}"),
                });
            }
        }
        Ok(BaseFunction { id, arity, param_count, body })
    }

    pub fn eval(&self, inputs: &[f64], params: &[f64]) -> f64 {
        self.body.eval(inputs, params)
    }
}
