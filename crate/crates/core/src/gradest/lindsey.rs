//! Lindsey's method: Poisson regression of histogram counts on a polynomial,
//! giving a smooth log-density with analytic derivatives.
//!
//! The density itself comes out well; its higher derivatives usually do not,
//! so this is mainly a source of `g_k` for local fdr.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{extrapolate, FitConfig, GradientModel, LogDerivs};
use crate::error::{Error, Result};
use crate::stats::{quantile_sorted, sorted_copy};

const MAX_ITER: usize = 100;
const MIN_OBSERVATIONS: usize = 200;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LindseyFit {
    pub lo: f64,
    pub hi: f64,
    /// Monomial coefficients of the log expected count in `t ∈ [-1, 1]`.
    pub coefficients: Vec<f64>,
    /// `-ln(N · bin width)`, turning expected counts into a density.
    pub ln_norm: f64,
    pub bins: usize,
    pub observations: usize,
}

impl LindseyFit {
    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn scale(&self) -> f64 {
        2.0 / (self.hi - self.lo)
    }

    fn to_t(&self, x: f64) -> f64 {
        (x - self.lo) * self.scale() - 1.0
    }

    /// `η(x)` and its first four x-derivatives.
    fn eta(&self, x: f64) -> [f64; 5] {
        let t = self.to_t(x);
        let mut out = [0.0; 5];
        let mut c = self.coefficients.clone();
        let mut factor = 1.0;
        for o in out.iter_mut() {
            *o = c.iter().rev().fold(0.0, |acc, v| acc * t + v) * factor;
            c = c.iter().enumerate().skip(1).map(|(m, v)| m as f64 * v).collect();
            factor *= self.scale();
        }
        out
    }

    pub fn derivatives(&self, x: f64) -> LogDerivs {
        if x < self.lo || x > self.hi {
            let c = x.clamp(self.lo, self.hi);
            let e = self.eta(c);
            return extrapolate(e[1], e[2], c, x);
        }
        let e = self.eta(x);
        LogDerivs { d: [e[1], e[2], e[3], e[4]], extrapolated: false }
    }

    /// Fitted density; outside the range the log-density is continued
    /// quadratically, matching the derivative extrapolation rule.
    pub fn density(&self, x: f64) -> f64 {
        let c = x.clamp(self.lo, self.hi);
        let e = self.eta(c);
        let dx = x - c;
        (e[0] + e[1] * dx + 0.5 * e[2] * dx * dx + self.ln_norm).exp()
    }
}

/// Fits the log-density of positive statistics (at least 200 of them).
pub fn fit_lindsey(data: &[f64], cfg: &FitConfig) -> Result<GradientModel> {
    cfg.validate()?;
    if let Some(bad) = data.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::domain(format!("statistics must be finite and positive, got {bad}")));
    }
    fit_lindsey_real(data, cfg.basis_size, cfg.bins, cfg.quantiles).map(GradientModel::Lindsey)
}

/// Lindsey fit on the real line, also used on normal scores.
pub(crate) fn fit_lindsey_real(data: &[f64], degree: usize, bins: usize, quantiles: (f64, f64)) -> Result<LindseyFit> {
    if data.len() < MIN_OBSERVATIONS {
        return Err(Error::InsufficientData { needed: MIN_OBSERVATIONS, got: data.len() });
    }
    if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
        return Err(Error::domain(format!("non-finite observation {bad}")));
    }
    let sorted = sorted_copy(data);
    let lo = quantile_sorted(&sorted, quantiles.0);
    let hi = quantile_sorted(&sorted, quantiles.1);
    if !(hi > lo) {
        return Err(Error::Singular("all observations are equal; the histogram has no width".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for &x in &sorted {
        if x < lo || x > hi {
            continue;
        }
        let i = (((x - lo) / width) as usize).min(bins - 1);
        counts[i] += 1.0;
    }

    // Legendre design in t for conditioning; converted to monomials at the end.
    let p = degree + 1;
    let legendre = legendre_monomials(degree);
    let mut design = DMatrix::zeros(bins, p);
    for i in 0..bins {
        let t = -1.0 + (2.0 * i as f64 + 1.0) / bins as f64;
        let mut prev = 1.0;
        let mut cur = t;
        design[(i, 0)] = 1.0;
        if p > 1 {
            design[(i, 1)] = t;
        }
        for n in 1..degree {
            let next = ((2 * n + 1) as f64 * t * cur - n as f64 * prev) / (n + 1) as f64;
            prev = cur;
            cur = next;
            design[(i, n + 1)] = next;
        }
    }
    let y = DVector::from_vec(counts);
    let beta = poisson_irls(&design, &y)?;

    let mut coefficients = vec![0.0; p];
    for (n, poly) in legendre.iter().enumerate() {
        for (m, c) in poly.iter().enumerate() {
            coefficients[m] += beta[n] * c;
        }
    }
    Ok(LindseyFit {
        lo,
        hi,
        coefficients,
        ln_norm: -(data.len() as f64 * width).ln(),
        bins,
        observations: data.len(),
    })
}

/// Monomial coefficients of `P_0..P_degree`.
fn legendre_monomials(degree: usize) -> Vec<Vec<f64>> {
    let mut polys = vec![vec![1.0], vec![0.0, 1.0]];
    for n in 1..degree {
        let (pn, pm) = (&polys[n], &polys[n - 1]);
        let mut next = vec![0.0; n + 2];
        for (m, c) in pn.iter().enumerate() {
            next[m + 1] += (2 * n + 1) as f64 * c / (n + 1) as f64;
        }
        for (m, c) in pm.iter().enumerate() {
            next[m] -= n as f64 * c / (n + 1) as f64;
        }
        polys.push(next);
    }
    polys.truncate(degree + 1);
    polys
}

fn deviance(y: &DVector<f64>, mu: &DVector<f64>) -> f64 {
    2.0 * y
        .iter()
        .zip(mu.iter())
        .map(|(&y, &m)| if y > 0.0 { y * (y / m).ln() - (y - m) } else { m })
        .sum::<f64>()
}

/// Newton (IRLS) iterations for a log-link Poisson GLM with step halving.
fn poisson_irls(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let p = x.ncols();
    let mut beta = DVector::zeros(p);
    beta[0] = (y.mean().max(1e-3)).ln();
    let mu_of = |b: &DVector<f64>| (x * b).map(|e: f64| e.min(700.0).exp());
    let mut mu = mu_of(&beta);
    let mut dev = deviance(y, &mu);
    for _ in 0..MAX_ITER {
        let w = mu.clone();
        let grad = x.transpose() * (y - &mu);
        let mut info = DMatrix::zeros(p, p);
        for (i, wi) in w.iter().enumerate() {
            let row = x.row(i);
            info += row.transpose() * row * *wi;
        }
        let step = info
            .cholesky()
            .map(|c| c.solve(&grad))
            .ok_or_else(|| Error::Singular("Poisson regression information matrix".into()))?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = &beta + &step * t;
            let cand_mu = mu_of(&cand);
            let cand_dev = deviance(y, &cand_mu);
            if cand_dev.is_finite() && cand_dev <= dev + 1e-12 * dev.abs() {
                accepted = Some((cand, cand_mu, cand_dev));
                break;
            }
            t *= 0.5;
        }
        let Some((b, m, d)) = accepted else {
            return Err(Error::NonConvergence { routine: "Lindsey step halving", iterations: 30 });
        };
        let change = (dev - d).abs();
        beta = b;
        mu = m;
        dev = d;
        if change <= 1e-10 * (dev.abs() + 1.0) {
            return Ok(beta);
        }
    }
    Err(Error::NonConvergence { routine: "Lindsey Poisson regression", iterations: MAX_ITER })
}
