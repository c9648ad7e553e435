//! Bayesian Poisson regression with spatially dependent global-local
//! shrinkage priors on lattice-indexed coefficients.

// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod baselines;
pub mod basis;
pub mod cli;
pub mod config;
pub mod error;
pub mod graph;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod model;
pub mod priors;
pub mod sampler;
pub mod simgen;

pub use error::{Error, Result};
