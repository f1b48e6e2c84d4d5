//! Estimation of the derivatives of the marginal log-density `l_k = ln g_k`.
//!
//! Every posterior formula downstream consumes a [`GradientModel`]; it can be
//! exact (known prior), a score-matching spline fit, or a Lindsey fit.

mod bspline;
mod lindsey;
mod score;

use serde::{Deserialize, Serialize};

pub use bspline::BSplineBasis;
pub use lindsey::{fit_lindsey, LindseyFit};
pub(crate) use lindsey::fit_lindsey_real;
pub use score::{fit_score_matching, SplineFit};

use crate::error::{Error, Result};
use crate::model::MarginalModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    ScoreMatching,
    Lindsey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    /// Number of spline functions, or polynomial degree for Lindsey.
    pub basis_size: usize,
    /// Fixed ridge weight; `None` selects it by cross-validation.
    pub penalty: Option<f64>,
    pub folds: usize,
    /// Fitting interval as data quantiles.
    pub quantiles: (f64, f64),
    /// Histogram bins (Lindsey only).
    pub bins: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig::score_matching()
    }
}

impl FitConfig {
    pub fn score_matching() -> Self {
        FitConfig {
            method: FitMethod::ScoreMatching,
            basis_size: 12,
            penalty: None,
            folds: 5,
            quantiles: (0.005, 0.995),
            bins: 120,
            seed: 0,
        }
    }

    pub fn lindsey() -> Self {
        FitConfig {
            method: FitMethod::Lindsey,
            basis_size: 7,
            quantiles: (0.0, 1.0),
            ..FitConfig::score_matching()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_quantiles(mut self, lo: f64, hi: f64) -> Self {
        self.quantiles = (lo, hi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.basis_size < 4 {
            return bad(format!("basis size must be at least 4, got {}", self.basis_size));
        }
        if self.method == FitMethod::ScoreMatching && self.basis_size < score::DEGREE + 1 {
            return bad(format!(
                "score matching uses degree-{} splines and needs at least {} basis functions",
                score::DEGREE,
                score::DEGREE + 1
            ));
        }
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        let (lo, hi) = self.quantiles;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad(format!("fitting quantiles must satisfy 0 <= lo < hi <= 1, got ({lo}, {hi})"));
        }
        if let Some(r) = self.penalty {
            if !(r >= 0.0 && r.is_finite()) {
                return bad(format!("penalty must be finite and >= 0, got {r}"));
            }
        }
        if self.bins < 10 {
            return bad(format!("need at least 10 histogram bins, got {}", self.bins));
        }
        Ok(())
    }
}

/// `l'..l''''` at a point, and whether the extrapolation rule was applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDerivs {
    pub d: [f64; 4],
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged {
    pub value: f64,
    pub extrapolated: bool,
}

/// Evaluator for `l_k^{(r)}(x)`, `r = 1..=4`.
///
/// Fitted models live on an interval `[a, b]`. Outside it `l'` is continued
/// linearly (constant `l''`, zero `l'''` and `l''''`) and results are flagged.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum GradientModel {
    Exact(MarginalModel),
    ScoreMatching(SplineFit),
    Lindsey(LindseyFit),
}

impl GradientModel {
    pub fn exact(model: MarginalModel) -> Self {
        GradientModel::Exact(model)
    }

    pub fn fit(data: &[f64], cfg: &FitConfig) -> Result<Self> {
        match cfg.method {
            FitMethod::ScoreMatching => fit_score_matching(data, cfg),
            FitMethod::Lindsey => fit_lindsey(data, cfg),
        }
    }

    pub fn method(&self) -> &'static str {
        match self {
            GradientModel::Exact(_) => "exact",
            GradientModel::ScoreMatching(_) => "score-matching",
            GradientModel::Lindsey(_) => "lindsey",
        }
    }

    /// Interval on which no extrapolation happens.
    pub fn interval(&self) -> (f64, f64) {
        match self {
            GradientModel::Exact(_) => (0.0, f64::INFINITY),
            GradientModel::ScoreMatching(s) => s.interval(),
            GradientModel::Lindsey(l) => l.interval(),
        }
    }

    pub fn derivatives(&self, x: f64) -> Result<LogDerivs> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::domain(format!("gradients need finite x > 0, got {x}")));
        }
        match self {
            GradientModel::Exact(m) => Ok(LogDerivs { d: m.log_derivatives(x)?, extrapolated: false }),
            GradientModel::ScoreMatching(s) => Ok(s.derivatives(x)),
            GradientModel::Lindsey(l) => Ok(l.derivatives(x)),
        }
    }

    /// `l^{(order)}(x)` for `order` in `1..=4`.
    pub fn gradients_at(&self, x: f64, order: usize) -> Result<Flagged> {
        if !(1..=4).contains(&order) {
            return Err(Error::domain(format!("derivative order must be 1..=4, got {order}")));
        }
        let d = self.derivatives(x)?;
        Ok(Flagged { value: d.d[order - 1], extrapolated: d.extrapolated })
    }

    /// Marginal density `g_k(x)` when the model knows its normalization.
    pub fn density(&self, x: f64) -> Option<Result<f64>> {
        match self {
            GradientModel::Exact(m) => Some(m.ln_marginal(x).map(f64::exp)),
            GradientModel::Lindsey(l) => Some(Ok(l.density(x))),
            GradientModel::ScoreMatching(_) => None,
        }
    }
}

/// Linear continuation of `l'` from a boundary value `(l', l'')` at `c`.
fn extrapolate(l1: f64, l2: f64, c: f64, x: f64) -> LogDerivs {
    LogDerivs { d: [l1 + l2 * (x - c), l2, 0.0, 0.0], extrapolated: true }
}
