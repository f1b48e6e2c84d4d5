use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use super::{MarginalModel, PriorSpec};
use crate::rng::stream;

/// One draw from the hierarchical model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierDraw {
    pub lambda: f64,
    pub j: u64,
    pub x: f64,
}

/// Draws `λ ~ g`, `J | λ ~ Poi(λ/2)`, `X | J ~ χ²_{k+2J}`. Deterministic in `seed`.
pub fn sample(model: &MarginalModel, n: usize, seed: u64) -> Vec<HierDraw> {
    let mut rng = stream(seed, 0);
    (0..n).map(|_| draw(model.prior(), model.k(), &mut rng)).collect()
}

pub(crate) fn draw<R: Rng + ?Sized>(prior: &PriorSpec, k: f64, rng: &mut R) -> HierDraw {
    let lambda = draw_lambda(prior, rng);
    let j = if lambda > 0.0 {
        Poisson::new(lambda / 2.0).expect("positive Poisson mean").sample(rng) as u64
    } else {
        0
    };
    let x = ChiSquared::new(k + 2.0 * j as f64).expect("positive df").sample(rng);
    HierDraw { lambda, j, x }
}

pub(crate) fn draw_lambda<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> f64 {
    match prior {
        PriorSpec::Gamma { shape, scale } => Gamma::new(*shape, *scale).expect("validated prior").sample(rng),
        PriorSpec::Degenerate { lambda0 } => *lambda0,
        PriorSpec::PointMassMixture { pi0, base } => {
            if rng.random::<f64>() < *pi0 {
                0.0
            } else {
                draw_lambda(base, rng)
            }
        }
        PriorSpec::Tabulated { grid } => draw_tabulated(grid, rng.random::<f64>()),
    }
}

/// Inverse CDF of a piecewise-linear density.
fn draw_tabulated(grid: &[(f64, f64)], u: f64) -> f64 {
    let masses: Vec<f64> = grid.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).collect();
    let total: f64 = masses.iter().sum();
    let mut target = u * total;
    for (w, m) in grid.windows(2).zip(&masses) {
        if target > *m {
            target -= m;
            continue;
        }
        let ((l0, d0), (l1, d1)) = (w[0], w[1]);
        let width = l1 - l0;
        // Solve d0 t + (d1 - d0) t² / (2 width) = target in the form that
        // stays stable when the slope vanishes.
        let a = (d1 - d0) / (2.0 * width);
        let disc = (d0 * d0 + 4.0 * a * target).max(0.0);
        let denom = d0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * target / denom } else { 0.0 };
        return l0 + t.clamp(0.0, width);
    }
    grid.last().map(|g| g.0).unwrap_or(0.0)
}
