//! The hierarchical model `λ ~ g`, `J | λ ~ Poi(λ/2)`, `X | J ~ χ²_{k+2J}`.

mod marginal;
mod oracle;
mod prior;
mod sample;

pub use marginal::{formal_chisq_density, ln_formal_density, MarginalModel};
pub use oracle::{oracle_posterior, OraclePosterior};
pub use prior::PriorSpec;
pub use sample::{sample, HierDraw};
pub(crate) use sample::draw;
