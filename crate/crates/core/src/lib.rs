//! Projection estimators of the squared diffusion coefficient of a
//! one-dimensional SDE from repeated high-frequency paths, and a harness for
//! checking their convergence rates and the lower-bound constructions.

// Negated comparisons are how NaN arguments get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bench;
pub mod cli;
pub mod config;
pub mod density;
pub mod error;
pub mod estimator;
pub mod gram;
pub mod jet;
pub mod minimax;
pub mod model;
pub mod quadrature;
pub mod regression;
pub mod risk;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
