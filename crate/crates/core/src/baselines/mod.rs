//! Comparison methods: the normal-transformation empirical Bayes method and
//! Benjamini–Yekutieli FCR-adjusted intervals.

pub mod by;
pub mod nt;

pub use by::by_interval;
pub use nt::{chisq_to_z, nt_posterior_interval, BackMap, NtEstimate, NtGradients, NtModel};
