//! Empirical Bayes effect-size estimation for batteries of chi-squared
//! statistics.
//!
//! The pipeline fits the derivatives of the marginal log-density of the
//! observed statistics, turns them into selection-corrected posterior moments
//! of the noncentrality parameter via Tweedie-type formulas, and layers FDR
//! selection and posterior classification on top.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod baselines;
pub mod error;
pub mod experiments;
pub mod gradest;
pub mod model;
pub mod mtest;
pub mod quad;
pub mod rng;
pub mod specfun;
pub mod stats;
pub mod tweedie;

pub use error::{Error, ErrorKind, Result};
pub use gradest::{FitConfig, FitMethod, GradientModel};
pub use model::{MarginalModel, PriorSpec};
pub use specfun::Df;
