//! Tweedie-type posterior moments of the noncentrality `λ` from the
//! derivatives of the marginal log-density.
//!
//! With `R_{2i} = g_{k-2i}/g_k` written through `l' .. l''''`:
//! - effect dof `M1 = E_{k-2}(2J|x) = x R4/R2 - (k-4)`
//! - posterior mean `E(λ|x) = M1 R2 = x R4 - (k-4) R2`
//! - second factorial moment `M2 = E_{k-4}[4J(J-1)|x]`
//! - posterior variance `4 M2 l'' + (M2 - M1²) R2²`

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradest::{GradientModel, LogDerivs};
use crate::specfun::{chisq_ln_pdf, norm_quantile, Df};

/// Floor on `R2 = 1 + 2l'`.
pub const R2_FLOOR: f64 = 1e-3;
/// Floor on `R4` where it is used as a divisor.
pub const R4_FLOOR: f64 = 1e-6;
/// `fdr` at or above `1 - ALL_NULL_EPS` means there is no non-null mass left.
pub const ALL_NULL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub clamped_mean: bool,
    pub clamped_variance: bool,
    pub extrapolated_gradient: bool,
    /// `1 + 2l'` fell below [`R2_FLOOR`].
    pub positivity_floor: bool,
    /// `|R4|` fell below [`R4_FLOOR`] in the second factorial moment.
    pub ratio_floor: bool,
    /// Clamped second factorial moment.
    pub clamped_factorial_moment: bool,
    /// Local fdr was numerically 1; the summary is set to zero.
    pub all_null: bool,
}

impl Flags {
    pub fn labels(&self) -> Vec<&'static str> {
        let all = [
            (self.clamped_mean, "clamped_mean"),
            (self.clamped_variance, "clamped_variance"),
            (self.extrapolated_gradient, "extrapolated_gradient"),
            (self.positivity_floor, "positivity_floor"),
            (self.ratio_floor, "ratio_floor"),
            (self.clamped_factorial_moment, "clamped_factorial_moment"),
            (self.all_null, "all_null"),
        ];
        all.iter().filter(|(on, _)| *on).map(|(_, l)| *l).collect()
    }

    pub fn any(&self) -> bool {
        !self.labels().is_empty()
    }

    pub fn merge(&mut self, other: Flags) {
        self.clamped_mean |= other.clamped_mean;
        self.clamped_variance |= other.clamped_variance;
        self.extrapolated_gradient |= other.extrapolated_gradient;
        self.positivity_floor |= other.positivity_floor;
        self.ratio_floor |= other.ratio_floor;
        self.clamped_factorial_moment |= other.clamped_factorial_moment;
        self.all_null |= other.all_null;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectDofEstimates {
    /// `(x - k + 4)₊`
    pub ml_style: f64,
    /// `(x - k + 2)₊`
    pub moment_style: f64,
    /// `E_{k-2}(2J | x)`
    pub tweedie: f64,
}

/// The two soft-thresholded estimates of the effect degrees of freedom.
pub fn naive_effect_dof(x: f64, k: Df) -> Result<(f64, f64)> {
    check_x(x)?;
    let k = k.value();
    Ok(((x - k + 4.0).max(0.0), (x - k + 2.0).max(0.0)))
}

pub fn effect_dof_estimates(g: &GradientModel, x: f64, k: Df) -> Result<EffectDofEstimates> {
    let (ml_style, moment_style) = naive_effect_dof(x, k)?;
    Ok(EffectDofEstimates { ml_style, moment_style, tweedie: posterior_effect_dof(g, x, k)?.value })
}

fn check_x(x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("statistic must be finite and positive, got {x}")));
    }
    Ok(())
}

/// A value together with the flags raised while computing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub flags: Flags,
}

/// The density ratios `R2, R4, R6, R8` from log-derivatives, with the `R2`
/// floor applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratios {
    pub r2: f64,
    pub r4: f64,
    pub r6: f64,
    pub r8: f64,
    pub flags: Flags,
}

pub fn ratios(d: &LogDerivs) -> Ratios {
    let [l1, l2, l3, l4] = d.d;
    let mut flags = Flags { extrapolated_gradient: d.extrapolated, ..Flags::default() };
    let mut r2 = 1.0 + 2.0 * l1;
    if !(r2 >= R2_FLOOR) {
        r2 = R2_FLOOR;
        flags.positivity_floor = true;
    }
    let r4 = 4.0 * l2 + r2 * r2;
    let r6 = 8.0 * l3 + 12.0 * l2 * r2 + r2.powi(3);
    let r8 = 16.0 * l4 + 32.0 * l3 * r2 + 24.0 * l2 * r2 * r2 + 48.0 * l2 * l2 + r2.powi(4);
    Ratios { r2, r4, r6, r8, flags }
}

/// Posterior moments before any clamping, with the flags that clamping
/// would raise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    /// `E_{k-2}(2J | x)`
    pub effect_dof: f64,
    pub mean: f64,
    /// `E_{k-4}[4J(J-1) | x]`, clamped at zero when `k > 4`.
    pub factorial_moment: f64,
    pub variance: f64,
    pub flags: Flags,
}

fn effect_dof_from(x: f64, k: f64, d: &LogDerivs, r: &Ratios) -> f64 {
    let [l1, l2, ..] = d.d;
    2.0 * x * (2.0 * l2 / r.r2 + l1) + (x - k + 4.0)
}

/// Raw moment computation shared by the public operations.
pub fn moments_from_derivs(d: &LogDerivs, x: f64, k: f64) -> Moments {
    let r = ratios(d);
    let mut flags = r.flags;
    let m1 = effect_dof_from(x, k, d, &r);
    let mean = m1 * r.r2;

    // M2·R4, free of the division by R4.
    let p = x * x * r.r8 - 2.0 * (k - 6.0) * x * r.r6 + (k - 4.0) * (k - 6.0) * r.r4;
    // For k > 4, g_{k-4} is a density, so R4 > 0 and M2 >= 0. Below that
    // g_{k-4} is a formal signed function and only |R4| is guarded.
    let proper = k > 4.0;
    let r4 = if proper && r.r4 < R4_FLOOR {
        flags.ratio_floor = true;
        R4_FLOOR
    } else if !proper && r.r4.abs() < R4_FLOOR {
        flags.ratio_floor = true;
        R4_FLOOR.copysign(r.r4)
    } else {
        r.r4
    };
    let mut m2 = p / r4;
    if proper && m2 < 0.0 {
        m2 = 0.0;
        flags.clamped_factorial_moment = true;
    }
    // var = 4 M2 l'' + (M2 - M1²)(1+2l')², which equals M2·R4 - mean² since
    // 4l'' = R4 - R2². The product form is used unless a guard changed M2.
    let variance = if flags.ratio_floor || flags.clamped_factorial_moment {
        4.0 * m2 * d.d[1] + (m2 - m1 * m1) * r.r2 * r.r2
    } else {
        p - mean * mean
    };
    Moments { effect_dof: m1, mean, factorial_moment: m2, variance, flags }
}

/// `E_{k-2}(2J | x) = 2x[2l''/(1+2l') + l'] + (x - k + 4)`.
pub fn posterior_effect_dof(g: &GradientModel, x: f64, k: Df) -> Result<Estimate> {
    check_x(x)?;
    let d = g.derivatives(x)?;
    let r = ratios(&d);
    Ok(Estimate { value: effect_dof_from(x, k.value(), &d, &r), flags: r.flags })
}

/// Posterior mean `[(x-k+4) + 2x(2l''/(1+2l') + l')](1+2l')`, clamped at 0.
pub fn posterior_mean(g: &GradientModel, x: f64, k: Df) -> Result<Estimate> {
    check_x(x)?;
    let m = moments_from_derivs(&g.derivatives(x)?, x, k.value());
    let mut flags = m.flags;
    let value = if m.mean < 0.0 {
        flags.clamped_mean = true;
        0.0
    } else {
        m.mean
    };
    Ok(Estimate { value, flags })
}

/// The two-layer form `x (1+2l'_{k-2})(1+2l'_k) - (k-4)(1+2l'_k)`, where
/// `1+2l'_{k-2} = R4/R2`. Unclamped.
pub fn posterior_mean_two_layer(g: &GradientModel, x: f64, k: Df) -> Result<f64> {
    check_x(x)?;
    let r = ratios(&g.derivatives(x)?);
    Ok(x * (r.r4 / r.r2) * r.r2 - (k.value() - 4.0) * r.r2)
}

/// `E_{k-4}[4J(J-1) | x] = x²R8/R4 - 2(k-6)x R6/R4 + (k-4)(k-6)`, clamped at 0
/// when `k > 4` (below that it is an expectation under a signed measure).
pub fn second_factorial_moment(g: &GradientModel, x: f64, k: Df) -> Result<Estimate> {
    check_x(x)?;
    let m = moments_from_derivs(&g.derivatives(x)?, x, k.value());
    Ok(Estimate { value: m.factorial_moment, flags: m.flags })
}

/// `var(λ|x) = 4 M2 l'' + (M2 - M1²)(1+2l')²`, clamped at 0.
pub fn posterior_variance(g: &GradientModel, x: f64, k: Df) -> Result<Estimate> {
    check_x(x)?;
    let m = moments_from_derivs(&g.derivatives(x)?, x, k.value());
    let mut flags = m.flags;
    let value = if m.variance < 0.0 {
        flags.clamped_variance = true;
        0.0
    } else {
        m.variance
    };
    Ok(Estimate { value, flags })
}

/// `fdr(x) = π₀ f_k(x) / g_k(x)`, clamped to `[0, 1]`.
pub fn local_fdr(x: f64, k: Df, pi0: f64, g_k_at_x: f64) -> Result<f64> {
    check_x(x)?;
    if !(0.0..=1.0).contains(&pi0) {
        return Err(Error::domain(format!("pi0 must lie in [0,1], got {pi0}")));
    }
    if !(g_k_at_x > 0.0) || !g_k_at_x.is_finite() {
        return Err(Error::domain(format!("marginal density must be positive, got {g_k_at_x}")));
    }
    if pi0 == 0.0 {
        return Ok(0.0);
    }
    let k = k.value();
    if !(k > 0.0) {
        return Err(Error::domain(format!("df must be positive, got {k}")));
    }
    Ok((pi0 * (chisq_ln_pdf(x, k) - g_k_at_x.ln()).exp()).clamp(0.0, 1.0))
}

/// Converts posterior moments under the full mixture `π₀f_k + (1-π₀)g¹_k`
/// into moments given the case is non-null:
/// `E¹ = E/(1-fdr)`, `var¹ = var/(1-fdr) - fdr·(E¹)²`.
pub fn adjust_for_null(mean: f64, variance: f64, fdr: f64) -> Result<(f64, f64, Flags)> {
    if !(0.0..=1.0).contains(&fdr) {
        return Err(Error::domain(format!("fdr must lie in [0,1], got {fdr}")));
    }
    if fdr >= 1.0 - ALL_NULL_EPS {
        return Err(Error::AllNull { fdr });
    }
    let mut flags = Flags::default();
    let m1 = mean / (1.0 - fdr);
    let mut v1 = variance / (1.0 - fdr) - fdr * m1 * m1;
    if v1 < 0.0 {
        v1 = 0.0;
        flags.clamped_variance = true;
    }
    Ok((m1, v1, flags))
}

/// `mean ± z_{(1+level)/2} √variance`, both ends clamped at 0.
pub fn posterior_interval(mean: f64, variance: f64, level: f64) -> Result<(f64, f64)> {
    if !(variance >= 0.0) {
        return Err(Error::domain(format!("variance must be >= 0, got {variance}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("interval level must lie in (0,1), got {level}")));
    }
    let z = norm_quantile(0.5 + level / 2.0)?;
    let half = z * variance.sqrt();
    Ok(((mean - half).max(0.0), (mean + half).max(0.0)))
}

/// Plug-in null proportion: twice the fraction of p-values above 1/2, capped at 1.
pub fn estimate_pi0(p_values: &[f64]) -> f64 {
    if p_values.is_empty() {
        return 1.0;
    }
    let above = p_values.iter().filter(|&&p| p > 0.5).count() as f64;
    (2.0 * above / p_values.len() as f64).min(1.0)
}

/// Where the local fdr came from.
#[derive(Debug, Clone, Copy)]
pub struct NullAdjustment<'a> {
    pub pi0: f64,
    /// Model providing `g_k(x)`; must know its normalization.
    pub density: &'a GradientModel,
}

#[derive(Debug, Clone, Copy)]
pub struct SummaryOptions<'a> {
    pub level: f64,
    pub null: Option<NullAdjustment<'a>>,
}

impl Default for SummaryOptions<'_> {
    fn default() -> Self {
        SummaryOptions { level: 0.9, null: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub x: f64,
    pub k: f64,
    pub mean: f64,
    pub variance: f64,
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub fdr: Option<f64>,
    /// Method of the model that supplied `g_k` for the fdr.
    pub fdr_source: Option<String>,
    pub flags: Flags,
}

/// Posterior mean, variance and interval for one statistic. When a null
/// adjustment is supplied the moments are converted to the non-null
/// conditional ones.
pub fn summarize(g: &GradientModel, x: f64, k: Df, opts: &SummaryOptions) -> Result<PosteriorSummary> {
    check_x(x)?;
    let m = moments_from_derivs(&g.derivatives(x)?, x, k.value());
    let mut flags = m.flags;
    let (mut mean, mut variance) = (m.mean, m.variance);
    let mut fdr = None;
    let mut fdr_source = None;

    if let Some(null) = opts.null {
        let density = null.density.density(x).ok_or_else(|| {
            Error::InvalidConfig(format!("a {} model cannot supply g_k for the local fdr", null.density.method()))
        })??;
        let f = local_fdr(x, k, null.pi0, density)?;
        fdr = Some(f);
        fdr_source = Some(null.density.method().to_string());
        match adjust_for_null(mean, variance, f) {
            Ok((m1, v1, extra)) => {
                mean = m1;
                variance = v1;
                flags.merge(extra);
            }
            Err(Error::AllNull { .. }) => {
                mean = 0.0;
                variance = 0.0;
                flags.all_null = true;
            }
            Err(e) => return Err(e),
        }
    }
    if mean < 0.0 {
        mean = 0.0;
        flags.clamped_mean = true;
    }
    if variance < 0.0 {
        variance = 0.0;
        flags.clamped_variance = true;
    }
    let (interval_lo, interval_hi) = posterior_interval(mean, variance, opts.level)?;
    Ok(PosteriorSummary {
        x,
        k: k.value(),
        mean,
        variance,
        interval_lo,
        interval_hi,
        fdr,
        fdr_source,
        flags,
    })
}

/// [`summarize`] over many statistics in parallel; output order follows input.
pub fn summarize_all(g: &GradientModel, xs: &[f64], k: Df, opts: &SummaryOptions) -> Vec<Result<PosteriorSummary>> {
    xs.par_iter().map(|&x| summarize(g, x, k, opts)).collect()
}
