//! Plot tables for the one-layer and two-layer multiplicative adjustments
//! and the corrected value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradest::GradientModel;
use crate::specfun::Df;
use crate::tweedie::ratios;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub x: f64,
    /// `1 + 2 l'_k(x)`
    pub one_layer: f64,
    /// `[1 + 2 l'_{k-2}(x)] [1 + 2 l'_k(x)]`
    pub two_layer: f64,
    /// `u = x (1 + 2 l'_k)`
    pub u: f64,
    /// `v = u (1 + 2 l'_{k-2})`
    pub v: f64,
    /// `w = v - (k-4) u / x`, the posterior mean.
    pub w: f64,
}

/// Uses `1 + 2l'_k = R₂` and `1 + 2l'_{k-2} = R₄/R₂` with `R_{2i} = g_{k-2i}/g_k`.
pub fn curve_emit(g: &GradientModel, k: Df, xs: &[f64]) -> Result<Vec<CurveRow>> {
    if let Some(bad) = xs.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::domain(format!("grid points must be finite and positive, got {bad}")));
    }
    let k = k.value();
    xs.par_iter()
        .map(|&x| {
            let r = ratios(&g.derivatives(x)?);
            let one_layer = r.r2;
            let two_layer = r.r4;
            let u = x * one_layer;
            let v = x * two_layer;
            Ok(CurveRow { x, one_layer, two_layer, u, v, w: v - (k - 4.0) * u / x })
        })
        .collect()
}

/// `n` points spread evenly over `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
