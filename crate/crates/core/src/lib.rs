//! Selection of interpretable two-layer functional forms by cross-validated
//! modified Mallows' Cp, with the numerical primitives, fitting routines,
//! neural-network baselines and data generators it needs.

pub mod data;
pub mod expr;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod rng;
pub mod select;
pub mod stats;
pub mod studies;
