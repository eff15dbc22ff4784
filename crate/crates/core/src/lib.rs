//! Nonparametric multiple functional regression.
//!
//! Predicts a response curve `y(t)` from several covariate curves `x_q(s)`
//! and a vector of discrete covariates by kernel ridge regression in a
//! function-valued RKHS. The operator-valued kernel is
//!
//! ```text
//! (K(x_i, x_j) g)(t) = [k_d(x_i^d, x_j^d) + k_c(x_i^c, x_j^c)] ∫ k_y(s, t) g(s) ds
//! ```
//!
//! and the coefficients solve `(K + λI) α = Y` on the response grid.
//!
//! Modules, bottom-up: [`grid`] (quadrature and L2 geometry), [`kernels`],
//! [`estimator`] (fit / predict / objective / cross-validation), [`data`]
//! (files, synthetic data, metrics, model persistence).

pub mod data;
pub mod error;
pub mod estimator;
mod exec;
pub mod grid;
pub mod kernels;
pub mod sample;

pub use error::{Error, Result};
pub use estimator::{
    cross_validate, fit, objective, predict, predict_many, CvGrid, FitConfig, FittedModel, SolverKind,
};
pub use exec::Execution;
pub use grid::{Curve, Grid};
pub use kernels::{KernelConfig, OperatorKind};
pub use sample::{Sample, TrainingSet};
