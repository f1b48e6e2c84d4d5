//! Brute-force posterior moments by integrating over `λ` directly.
//!
//! This path never touches the mixture weights `p_j`: the likelihood is the
//! noncentral density and the prior enters through its density, so it serves
//! as an independent check on everything built from the series.

use super::{MarginalModel, PriorSpec};
use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::specfun::{chisq_ln_pdf, ln_gamma_pos, noncentral_ln_pdf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePosterior {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    /// `g_k(x)`, the normalizing integral.
    pub marginal: f64,
}

const OPTS: QuadOptions = QuadOptions { rel_tol: 1e-13, abs_tol: 0.0, max_intervals: 4000 };

/// `[∫ λ^r f_{k,λ}(x) g(λ) dλ]` for `r = 0, 1, 2`, unnormalized.
fn moments(prior: &PriorSpec, k: f64, x: f64) -> Result<[f64; 3]> {
    match prior {
        PriorSpec::Degenerate { lambda0 } => {
            let l = *lambda0;
            let f = noncentral_ln_pdf(x, k, l).exp();
            Ok([f, l * f, l * l * f])
        }
        PriorSpec::PointMassMixture { pi0, base } => {
            let b = moments(base, k, x)?;
            let f0 = chisq_ln_pdf(x, k).exp();
            Ok([pi0 * f0 + (1.0 - pi0) * b[0], (1.0 - pi0) * b[1], (1.0 - pi0) * b[2]])
        }
        PriorSpec::Gamma { shape, scale } => {
            let (a, b) = (*shape, *scale);
            let ln_norm = ln_gamma_pos(a) + a * b.ln();
            let integrand = |l: f64| {
                if l == 0.0 {
                    return [0.0; 3];
                }
                let w = ((a - 1.0) * l.ln() - l / b - ln_norm + noncentral_ln_pdf(x, k, l)).exp();
                [w, l * w, l * l * w]
            };
            integrate_half_line(integrand, (x + a * b).max(10.0))
        }
        PriorSpec::Tabulated { grid } => {
            let mut acc = [0.0; 3];
            for w in grid.windows(2) {
                let ((l0, d0), (l1, d1)) = (w[0], w[1]);
                let integrand = |l: f64| {
                    let g = d0 + (d1 - d0) * (l - l0) / (l1 - l0);
                    let w = g * noncentral_ln_pdf(x, k, l).exp();
                    [w, l * w, l * l * w]
                };
                let v = integrate(integrand, l0, l1, OPTS)?;
                for r in 0..3 {
                    acc[r] += v[r];
                }
            }
            Ok(acc)
        }
    }
}

/// Integrates over `[0, ∞)` in geometrically growing panels until a panel
/// adds nothing at double precision.
fn integrate_half_line<F: Fn(f64) -> [f64; 3]>(f: F, first: f64) -> Result<[f64; 3]> {
    let mut acc = [0.0; 3];
    // Split the first panel so the quadrature sees the posterior bulk.
    let mut edges = vec![0.0, first / 4.0, first / 2.0, first];
    let mut hi = first;
    for _ in 0..60 {
        hi *= 2.0;
        edges.push(hi);
    }
    for w in edges.windows(2) {
        let v = integrate(&f, w[0], w[1], OPTS)?;
        for r in 0..3 {
            acc[r] += v[r];
        }
        if w[0] > first && v.iter().zip(&acc).all(|(p, t)| p.abs() <= 1e-17 * t.abs()) {
            return Ok(acc);
        }
    }
    Err(Error::Quadrature("posterior integral did not settle on the half line".into()))
}

/// Posterior mean, second moment and variance of `λ` given `x`.
pub fn oracle_posterior(model: &MarginalModel, x: f64) -> Result<OraclePosterior> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("oracle needs finite x > 0, got {x}")));
    }
    let m = moments(model.prior(), model.k(), x)?;
    if !(m[0] > 0.0) {
        return Err(Error::Quadrature(format!("marginal density vanished at x = {x}")));
    }
    let mean = m[1] / m[0];
    let second_moment = m[2] / m[0];
    let variance = (second_moment - mean * mean).max(0.0);
    Ok(OraclePosterior { mean, second_moment, variance, marginal: m[0] })
}
