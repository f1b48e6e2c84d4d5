use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::specfun::{ln_gamma_pos, poisson_window};

/// Prior `g(λ)` on the noncentrality parameter.
///
/// Serialized as `{"kind": ..., "parameters": {...}}`. An `exponential`
/// kind with a `rate` is accepted on input and stored as `Gamma(1, 1/rate)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRepr", into = "PriorRepr")]
pub enum PriorSpec {
    Gamma { shape: f64, scale: f64 },
    Degenerate { lambda0: f64 },
    PointMassMixture { pi0: f64, base: Box<PriorSpec> },
    /// Piecewise-linear density through `(λ, g(λ))` knots.
    Tabulated { grid: Vec<(f64, f64)> },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "parameters", rename_all = "snake_case")]
enum PriorRepr {
    Gamma { shape: f64, scale: f64 },
    Exponential { rate: f64 },
    Degenerate { lambda0: f64 },
    PointMassMixture { pi0: f64, base: Box<PriorRepr> },
    Tabulated { grid: Vec<(f64, f64)> },
}

impl TryFrom<PriorRepr> for PriorSpec {
    type Error = Error;
    fn try_from(r: PriorRepr) -> Result<Self> {
        let spec = match r {
            PriorRepr::Gamma { shape, scale } => PriorSpec::Gamma { shape, scale },
            PriorRepr::Exponential { rate } => PriorSpec::exponential(rate)?,
            PriorRepr::Degenerate { lambda0 } => PriorSpec::Degenerate { lambda0 },
            PriorRepr::PointMassMixture { pi0, base } => {
                PriorSpec::PointMassMixture { pi0, base: Box::new(PriorSpec::try_from(*base)?) }
            }
            PriorRepr::Tabulated { grid } => PriorSpec::Tabulated { grid },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<PriorSpec> for PriorRepr {
    fn from(p: PriorSpec) -> Self {
        match p {
            PriorSpec::Gamma { shape, scale } => PriorRepr::Gamma { shape, scale },
            PriorSpec::Degenerate { lambda0 } => PriorRepr::Degenerate { lambda0 },
            PriorSpec::PointMassMixture { pi0, base } => {
                PriorRepr::PointMassMixture { pi0, base: Box::new(PriorRepr::from(*base)) }
            }
            PriorSpec::Tabulated { grid } => PriorRepr::Tabulated { grid },
        }
    }
}

/// Tolerance on the total mass of a tabulated density.
const TABULATED_MASS_TOL: f64 = 1e-6;

impl PriorSpec {
    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        let p = PriorSpec::Gamma { shape, scale };
        p.validate()?;
        Ok(p)
    }

    /// `rate · e^{-rate λ}`, stored as `Gamma(1, 1/rate)`.
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidPrior(format!("exponential rate must be positive, got {rate}")));
        }
        PriorSpec::gamma(1.0, 1.0 / rate)
    }

    pub fn degenerate(lambda0: f64) -> Result<Self> {
        let p = PriorSpec::Degenerate { lambda0 };
        p.validate()?;
        Ok(p)
    }

    pub fn null() -> Self {
        PriorSpec::Degenerate { lambda0: 0.0 }
    }

    pub fn point_mass_mixture(pi0: f64, base: PriorSpec) -> Result<Self> {
        let p = PriorSpec::PointMassMixture { pi0, base: Box::new(base) };
        p.validate()?;
        Ok(p)
    }

    pub fn tabulated(grid: Vec<(f64, f64)>) -> Result<Self> {
        let p = PriorSpec::Tabulated { grid };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPrior(m));
        match self {
            PriorSpec::Gamma { shape, scale } => {
                if !(*shape > 0.0 && shape.is_finite() && *scale > 0.0 && scale.is_finite()) {
                    return bad(format!("gamma needs positive finite shape and scale, got ({shape}, {scale})"));
                }
            }
            PriorSpec::Degenerate { lambda0 } => {
                if !(*lambda0 >= 0.0 && lambda0.is_finite()) {
                    return bad(format!("degenerate location must be finite and >= 0, got {lambda0}"));
                }
            }
            PriorSpec::PointMassMixture { pi0, base } => {
                if !(0.0..=1.0).contains(pi0) {
                    return bad(format!("pi0 must lie in [0,1], got {pi0}"));
                }
                base.validate()?;
                if base.mass_at_zero() > 0.0 {
                    return bad("mixture base must not place mass at exactly zero".into());
                }
            }
            PriorSpec::Tabulated { grid } => {
                if grid.len() < 2 {
                    return bad("tabulated prior needs at least two knots".into());
                }
                if grid.iter().any(|&(l, d)| !(l >= 0.0 && l.is_finite() && d >= 0.0 && d.is_finite())) {
                    return bad("tabulated knots need finite λ >= 0 and density >= 0".into());
                }
                if grid.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("tabulated λ grid must be strictly increasing".into());
                }
                let mass = tabulated_moment(grid, 0);
                if (mass - 1.0).abs() > TABULATED_MASS_TOL {
                    return bad(format!("tabulated density integrates to {mass}, not 1"));
                }
            }
        }
        Ok(())
    }

    /// Probability of `λ = 0` exactly.
    pub fn mass_at_zero(&self) -> f64 {
        match self {
            PriorSpec::Degenerate { lambda0 } if *lambda0 == 0.0 => 1.0,
            PriorSpec::PointMassMixture { pi0, base } => pi0 + (1.0 - pi0) * base.mass_at_zero(),
            _ => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            PriorSpec::Gamma { shape, scale } => shape * scale,
            PriorSpec::Degenerate { lambda0 } => *lambda0,
            PriorSpec::PointMassMixture { pi0, base } => (1.0 - pi0) * base.mean(),
            PriorSpec::Tabulated { grid } => tabulated_moment(grid, 1),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            PriorSpec::Gamma { shape, scale } => shape * scale * scale,
            PriorSpec::Degenerate { .. } => 0.0,
            PriorSpec::PointMassMixture { pi0, base } => {
                let m = base.mean();
                let second = (1.0 - pi0) * (base.variance() + m * m);
                second - self.mean().powi(2)
            }
            PriorSpec::Tabulated { grid } => tabulated_moment(grid, 2) - tabulated_moment(grid, 1).powi(2),
        }
    }

    /// Mixture weights `p_j = P(J = j)` with `J | λ ~ Poi(λ/2)`, from `j = 0`
    /// until the remaining mass is far below any tolerance in use.
    pub(crate) fn mixture_weights(&self) -> Result<Vec<f64>> {
        match self {
            PriorSpec::Gamma { shape, scale } => Ok(negative_binomial_weights(*shape, *scale)),
            PriorSpec::Degenerate { lambda0 } => {
                let (start, w) = poisson_window(lambda0 / 2.0, WEIGHT_TAIL);
                let mut p = vec![0.0; start];
                p.extend(w);
                Ok(p)
            }
            PriorSpec::PointMassMixture { pi0, base } => {
                let mut p: Vec<f64> = base.mixture_weights()?.into_iter().map(|w| (1.0 - pi0) * w).collect();
                p[0] += pi0;
                Ok(p)
            }
            PriorSpec::Tabulated { grid } => tabulated_weights(grid),
        }
    }
}

/// Tail mass left out of cached weight series. Much smaller than the
/// 1e-12 truncation floor so that far-tail posterior evaluations stay exact.
const WEIGHT_TAIL: f64 = 1e-40;

/// `Γ(α+j)/(Γ(α) j!) (1-q)^α q^j` with `q = (β/2)/(1+β/2)`.
fn negative_binomial_weights(alpha: f64, beta: f64) -> Vec<f64> {
    let q = (beta / 2.0) / (1.0 + beta / 2.0);
    let mut w = (alpha * (1.0 - q).ln()).exp();
    let mut p = vec![w];
    let mut j = 0.0;
    let mut mass = w;
    loop {
        w *= q * (alpha + j) / (j + 1.0);
        j += 1.0;
        p.push(w);
        mass += w;
        // Beyond the mode the ratio of successive weights is below r < 1,
        // so the tail is bounded by w r / (1 - r).
        let r = q * (alpha + j) / (j + 1.0);
        if r < 1.0 && w * r / (1.0 - r) < WEIGHT_TAIL * mass {
            break;
        }
    }
    p
}

/// `∫ λ^r g(λ) dλ` for a piecewise-linear density (exact by Gauss–Kronrod).
fn tabulated_moment(grid: &[(f64, f64)], r: i32) -> f64 {
    grid.windows(2)
        .map(|w| {
            let ((l0, d0), (l1, d1)) = (w[0], w[1]);
            let f = |l: f64| [l.powi(r) * (d0 + (d1 - d0) * (l - l0) / (l1 - l0))];
            integrate(f, l0, l1, QuadOptions::default()).map(|v| v[0]).unwrap_or(f64::NAN)
        })
        .sum()
}

/// `p_j = ∫ Poi(λ/2)(j) g(λ) dλ`, integrated segment by segment.
fn tabulated_weights(grid: &[(f64, f64)]) -> Result<Vec<f64>> {
    let opts = QuadOptions { rel_tol: 1e-13, abs_tol: 1e-300, ..Default::default() };
    let lambda_max = grid.last().map(|g| g.0).unwrap_or(0.0);
    let mut p = Vec::new();
    let mut mass = 0.0;
    for j in 0.. {
        let jf = j as f64;
        let ln_fact = ln_gamma_pos(jf + 1.0);
        let mut pj = 0.0;
        for w in grid.windows(2) {
            let ((l0, d0), (l1, d1)) = (w[0], w[1]);
            let dens = |l: f64| d0 + (d1 - d0) * (l - l0) / (l1 - l0);
            let f = |l: f64| {
                let h = l / 2.0;
                let pois = if h == 0.0 {
                    if j == 0 { 1.0 } else { 0.0 }
                } else {
                    (-h + jf * h.ln() - ln_fact).exp()
                };
                [pois * dens(l)]
            };
            pj += integrate(f, l0, l1, opts)?[0];
        }
        p.push(pj);
        mass += pj;
        // The support is bounded, so past λ_max/2 the weights fall faster
        // than a geometric series with ratio (λ_max/2)/(j+1).
        let r = (lambda_max / 2.0) / (jf + 2.0);
        if r < 1.0 && pj * r / (1.0 - r) < WEIGHT_TAIL * mass {
            break;
        }
        if j > 100_000 {
            return Err(Error::NonConvergence { routine: "tabulated prior weights", iterations: j });
        }
    }
    // Renormalize away the quadrature rounding of the grid mass.
    let total: f64 = p.iter().sum();
    Ok(p.into_iter().map(|w| w / total).collect())
}
