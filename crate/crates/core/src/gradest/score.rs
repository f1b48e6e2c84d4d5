//! Penalized least-squares score matching for `ψ = l'` on a B-spline basis.
//!
//! The plain objective `(1/n) Σ [½ψ² + ψ']` needs boundary terms to vanish,
//! which fails on a truncated interval. We use the weighted form
//! `(1/n) Σ [½wψ² + wψ' + w'ψ]`, with `w` ramping from 0 at the interval ends
//! to 1 in the interior, which is unbiased for any `ψ` on `[a, b]`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{extrapolate, BSplineBasis, FitConfig, LogDerivs};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats::{quantile_sorted, sorted_copy};

pub(crate) const DEGREE: usize = 5;
/// Floor on `1 + 2ψ` enforced after fitting.
pub const POSITIVITY_FLOOR: f64 = 1e-3;
/// Width of each boundary ramp as a fraction of `ln(b/a)`.
const RAMP_FRACTION: f64 = 0.1;
const CV_GRID: usize = 10;
const CV_RHO_RANGE: (f64, f64) = (1e-6, 10.0);
const PROJECTION_GRID: usize = 400;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplineFit {
    pub basis: BSplineBasis,
    pub coefficients: Vec<f64>,
    pub penalty: f64,
    pub observations: usize,
    /// Whether the positivity projection changed the fit.
    pub projected: bool,
}

impl SplineFit {
    pub fn interval(&self) -> (f64, f64) {
        self.basis.domain()
    }

    pub fn derivatives(&self, x: f64) -> LogDerivs {
        let (a, b) = self.interval();
        if x < a || x > b {
            let c = if x < a { a } else { b };
            let v = self.basis.eval_combination(&self.coefficients, c, 1);
            return extrapolate(v[0], v[1], c, x);
        }
        let v = self.basis.eval_combination(&self.coefficients, x, 3);
        LogDerivs { d: [v[0], v[1], v[2], v[3]], extrapolated: false }
    }
}

/// `w(x)` and `w'(x)`: product of quadratic ramps in `ln x` at both ends.
fn ramp_weight(x: f64, a: f64, b: f64) -> (f64, f64) {
    let width = RAMP_FRACTION * (b / a).ln();
    let ramp = |s: f64| if s < 1.0 { (s * (2.0 - s), 2.0 - 2.0 * s) } else { (1.0, 0.0) };
    let (ra, dra) = ramp(((x / a).ln() / width).max(0.0));
    let (rb, drb) = ramp(((b / x).ln() / width).max(0.0));
    (ra * rb, (dra * rb - ra * drb) / (x * width))
}

/// Sufficient statistics `Σ wφφᵀ` and `Σ (wφ' + w'φ)` of one fold.
struct FoldStats {
    g: DMatrix<f64>,
    h: DVector<f64>,
    n: usize,
}

fn solve_ridge(g: &DMatrix<f64>, h: &DVector<f64>, n: usize, rho: f64) -> Option<DVector<f64>> {
    let size = g.nrows();
    let a = g / n as f64 + DMatrix::identity(size, size) * (2.0 * rho);
    let rhs = -h / n as f64;
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(&rhs));
    }
    let sol = a.lu().solve(&rhs)?;
    sol.iter().all(|v| v.is_finite()).then_some(sol)
}

/// Fits `ψ = l'` by weighted score matching with a ridge penalty chosen by
/// K-fold cross-validation (one-standard-error rule toward larger penalties).
pub fn fit_score_matching(data: &[f64], cfg: &FitConfig) -> Result<super::GradientModel> {
    cfg.validate()?;
    let needed = 10 * cfg.basis_size;
    if data.len() < needed {
        return Err(Error::InsufficientData { needed, got: data.len() });
    }
    if let Some(bad) = data.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
        return Err(Error::domain(format!("statistics must be finite and positive, got {bad}")));
    }
    let sorted = sorted_copy(data);
    let a = quantile_sorted(&sorted, cfg.quantiles.0);
    let b = quantile_sorted(&sorted, cfg.quantiles.1);
    if !(b > a) {
        return Err(Error::Singular("fitting interval has zero width".into()));
    }
    let basis = BSplineBasis::log_spaced(a, b, cfg.basis_size, DEGREE)?;
    let size = basis.size();

    let mut inside: Vec<f64> = data.iter().copied().filter(|&x| x >= a && x <= b).collect();
    inside.shuffle(&mut stream(cfg.seed, 0));
    let mut folds: Vec<FoldStats> = (0..cfg.folds)
        .map(|_| FoldStats { g: DMatrix::zeros(size, size), h: DVector::zeros(size), n: 0 })
        .collect();
    for (idx, &x) in inside.iter().enumerate() {
        let f = &mut folds[idx % cfg.folds];
        let (first, ders) = basis.eval_nonzero(x, 1);
        let (w, dw) = ramp_weight(x, a, b);
        for (i, (pi, di)) in ders[0].iter().zip(&ders[1]).enumerate() {
            f.h[first + i] += w * di + dw * pi;
            for (j, pj) in ders[0].iter().enumerate() {
                f.g[(first + i, first + j)] += w * pi * pj;
            }
        }
        f.n += 1;
    }
    let n: usize = folds.iter().map(|f| f.n).sum();
    if folds.iter().any(|f| f.n == 0) {
        return Err(Error::InsufficientData { needed: cfg.folds, got: n });
    }
    let g_all = folds.iter().fold(DMatrix::zeros(size, size), |acc, f| acc + &f.g);
    let h_all = folds.iter().fold(DVector::zeros(size), |acc, f| acc + &f.h);

    let rho = match cfg.penalty {
        Some(r) => r,
        None => cross_validate(&folds, &g_all, &h_all)?,
    };
    let theta = solve_ridge(&g_all, &h_all, n, rho)
        .ok_or_else(|| Error::Singular(format!("score-matching system at penalty {rho}")))?;
    let mut fit = SplineFit {
        basis,
        coefficients: theta.iter().copied().collect(),
        penalty: rho,
        observations: n,
        projected: false,
    };
    enforce_positivity(&mut fit)?;
    Ok(super::GradientModel::ScoreMatching(fit))
}

fn cv_grid() -> Vec<f64> {
    let (lo, hi) = (CV_RHO_RANGE.0.ln(), CV_RHO_RANGE.1.ln());
    (0..CV_GRID).map(|i| (lo + (hi - lo) * i as f64 / (CV_GRID - 1) as f64).exp()).collect()
}

/// Picks the largest penalty whose mean held-out loss is within one standard
/// error of the best.
fn cross_validate(folds: &[FoldStats], g_all: &DMatrix<f64>, h_all: &DVector<f64>) -> Result<f64> {
    let n_all: usize = folds.iter().map(|f| f.n).sum();
    let k = folds.len() as f64;
    let mut scores = Vec::new();
    for rho in cv_grid() {
        let mut losses = Vec::with_capacity(folds.len());
        for f in folds {
            let g_train = g_all - &f.g;
            let h_train = h_all - &f.h;
            let Some(theta) = solve_ridge(&g_train, &h_train, n_all - f.n, rho) else {
                break;
            };
            let quad = (theta.transpose() * &f.g * &theta)[(0, 0)];
            losses.push((0.5 * quad + f.h.dot(&theta)) / f.n as f64);
        }
        if losses.len() == folds.len() {
            let mean = losses.iter().sum::<f64>() / k;
            let var = losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (k - 1.0);
            scores.push((rho, mean, (var / k).sqrt()));
        }
    }
    let best = scores
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Singular("score-matching system at every penalty candidate".into()))?;
    let threshold = best.1 + best.2;
    Ok(scores.iter().filter(|s| s.1 <= threshold).map(|s| s.0).fold(best.0, f64::max))
}

/// Keeps `1 + 2ψ ≥ ε` on a grid: clip `ψ` from below and refit the spline to
/// the clipped values by least squares, repeating with a growing margin.
fn enforce_positivity(fit: &mut SplineFit) -> Result<()> {
    let (a, b) = fit.interval();
    let floor = (POSITIVITY_FLOOR - 1.0) / 2.0;
    let grid: Vec<f64> = (0..PROJECTION_GRID)
        .map(|i| (a.ln() + (b / a).ln() * i as f64 / (PROJECTION_GRID - 1) as f64).exp())
        .collect();
    let size = fit.basis.size();
    let mut design = DMatrix::zeros(grid.len(), size);
    for (r, &x) in grid.iter().enumerate() {
        let (first, ders) = fit.basis.eval_nonzero(x, 0);
        for (i, v) in ders[0].iter().enumerate() {
            design[(r, first + i)] = *v;
        }
    }
    let normal = design.transpose() * &design + DMatrix::identity(size, size) * 1e-12;
    let chol = normal.cholesky().ok_or_else(|| Error::Singular("positivity projection".into()))?;
    for iter in 0..50 {
        let theta = DVector::from_column_slice(&fit.coefficients);
        let psi = &design * &theta;
        if psi.iter().all(|&p| p >= floor) {
            return Ok(());
        }
        let margin = POSITIVITY_FLOOR * 0.5 * (iter + 1) as f64;
        let target = psi.map(|p| p.max(floor + margin));
        fit.coefficients = chol.solve(&(design.transpose() * target)).iter().copied().collect();
        fit.projected = true;
    }
    Ok(())
}
