use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::PriorSpec;
use crate::error::{Error, Result};
use crate::specfun::{is_nonpositive_even, ln_gamma_signed, Df};

/// `f_m(x) = x^{m/2-1} e^{-x/2} / (2^{m/2} Γ(m/2))` for any real `m` that is
/// not a non-positive even integer. Negative `m` gives a signed formal density.
pub fn formal_chisq_density(x: f64, m: f64) -> Result<f64> {
    let (ln_abs, sign) = ln_formal_density(x, m)?;
    Ok(sign * ln_abs.exp())
}

/// `(ln |f_m(x)|, sign f_m(x))`.
pub fn ln_formal_density(x: f64, m: f64) -> Result<(f64, f64)> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("formal density needs finite x > 0, got {x}")));
    }
    if !m.is_finite() {
        return Err(Error::domain(format!("df must be finite, got {m}")));
    }
    if is_nonpositive_even(m) {
        return Err(Error::Pole(m / 2.0));
    }
    let h = m / 2.0;
    let (lg, sign) = ln_gamma_signed(h);
    Ok(((h - 1.0) * x.ln() - x / 2.0 - h * LN_2 - lg, sign))
}

/// Marginal density machinery for a known prior: `g_k(x) = Σ_j p_j f_{k+2j}(x)`.
///
/// Immutable after construction; the mixture weights are computed eagerly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MarginalRepr", into = "MarginalRepr")]
pub struct MarginalModel {
    prior: PriorSpec,
    k: Df,
    weights: Vec<f64>,
    ln_weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MarginalRepr {
    prior: PriorSpec,
    k: f64,
}

impl TryFrom<MarginalRepr> for MarginalModel {
    type Error = Error;
    fn try_from(r: MarginalRepr) -> Result<Self> {
        MarginalModel::new(r.prior, r.k)
    }
}

impl From<MarginalModel> for MarginalRepr {
    fn from(m: MarginalModel) -> Self {
        MarginalRepr { prior: m.prior, k: m.k.value() }
    }
}

/// Posterior weights of `J` given `x`, normalized, plus `ln g_k(x)`.
pub(crate) struct JPosterior {
    pub weights: Vec<f64>,
    pub ln_marginal: f64,
}

/// Relative size below which a series term is dropped.
const TERM_EPS: f64 = 1e-18;

impl MarginalModel {
    pub fn new(prior: PriorSpec, k: f64) -> Result<Self> {
        prior.validate()?;
        let k = Df::positive(k)?;
        let weights = prior.mixture_weights()?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidPrior(format!("mixture weights sum to {total}")));
        }
        let ln_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(MarginalModel { prior, k, weights, ln_weights })
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn k(&self) -> f64 {
        self.k.value()
    }

    /// Cached `p_j`, starting at `j = 0`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Posterior law of `J` given `x` under the model, i.e. weights
    /// proportional to `p_j f_{k+2j}(x)`.
    pub(crate) fn j_posterior(&self, x: f64) -> Result<JPosterior> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::domain(format!("marginal needs finite x > 0, got {x}")));
        }
        let k = self.k();
        let ln_half_x = (x / 2.0).ln();
        // ln f_{k+2j}(x), advanced by ln(x/2) - ln(k/2 + j).
        let mut ln_f = ln_formal_density(x, k)?.0;
        let mut ln_terms = Vec::with_capacity(self.ln_weights.len());
        for (j, lw) in self.ln_weights.iter().enumerate() {
            ln_terms.push(lw + ln_f);
            ln_f += ln_half_x - (k / 2.0 + j as f64).ln();
        }
        let max = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::domain(format!("marginal density underflows at x = {x}")));
        }
        let mut weights: Vec<f64> = ln_terms.iter().map(|t| (t - max).exp()).collect();
        let sum: f64 = weights.iter().sum();
        // A still-significant last term means the cached series is too short for this x.
        if weights.last().copied().unwrap_or(0.0) > TERM_EPS * sum && self.weights.len() > 1 {
            return Err(Error::domain(format!("x = {x} lies beyond the range of the cached mixture series")));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(JPosterior { weights, ln_marginal: max + sum.ln() })
    }

    pub fn ln_marginal(&self, x: f64) -> Result<f64> {
        Ok(self.j_posterior(x)?.ln_marginal)
    }

    /// `g_{k-2i}(x) = Σ_j p_j f_{k-2i+2j}(x)`, summed directly from formal
    /// densities (which are signed when `k - 2i + 2j < 0`).
    pub fn marginal_density(&self, x: f64, shift: u32) -> Result<f64> {
        let m = self.k() - 2.0 * shift as f64;
        if is_nonpositive_even(m) {
            return Err(Error::Pole(m / 2.0));
        }
        let mut terms = Vec::with_capacity(self.weights.len());
        for (j, &p) in self.weights.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mj = m + 2.0 * j as f64;
            if is_nonpositive_even(mj) {
                // 1/Γ has a zero here, so f_{mj} vanishes.
                continue;
            }
            let (ln_abs, sign) = ln_formal_density(x, mj)?;
            terms.push((p.ln() + ln_abs, sign));
        }
        let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Ok(0.0);
        }
        let s: f64 = terms.iter().map(|(l, s)| s * (l - max).exp()).sum();
        Ok(s * max.exp())
    }

    /// Ratios `R_{2i}(x) = g_{k-2i}(x) / g_k(x)` for `i = 1..=4`.
    ///
    /// Each is the posterior expectation of `Π_{s=1..i} (k+2J-2s)/x`, since
    /// `f_{m-2}(x) = (m-2)/x · f_m(x)`.
    pub fn density_ratios(&self, x: f64) -> Result<[f64; 4]> {
        let post = self.j_posterior(x)?;
        let k = self.k();
        let mut r = [0.0; 4];
        for (j, w) in post.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let m = k + 2.0 * j as f64;
            let mut rho = 1.0;
            for (i, ri) in r.iter_mut().enumerate() {
                rho *= (m - 2.0 * (i as f64 + 1.0)) / x;
                *ri += w * rho;
            }
        }
        Ok(r)
    }

    /// `l_k^{(r)}(x)` for `r = 1..=4`, recovered from the density ratios.
    pub fn log_derivatives(&self, x: f64) -> Result<[f64; 4]> {
        Ok(derivatives_from_ratios(self.density_ratios(x)?))
    }
}

/// Inverts the ratio identities
/// `R2 = 1+2l'`, `R4 = 4l''+R2²`, `R6 = 8l'''+12l''R2+R2³`,
/// `R8 = 16l''''+32l'''R2+24l''R2²+48l''²+R2⁴`.
pub(crate) fn derivatives_from_ratios(r: [f64; 4]) -> [f64; 4] {
    let [r2, r4, r6, r8] = r;
    let l1 = (r2 - 1.0) / 2.0;
    let l2 = (r4 - r2 * r2) / 4.0;
    let l3 = (r6 - 12.0 * l2 * r2 - r2.powi(3)) / 8.0;
    let l4 = (r8 - 32.0 * l3 * r2 - 24.0 * l2 * r2 * r2 - 48.0 * l2 * l2 - r2.powi(4)) / 16.0;
    [l1, l2, l3, l4]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_model(k: f64) -> MarginalModel {
        MarginalModel::new(PriorSpec::gamma(2.0, 10.0).unwrap(), k).unwrap()
    }

    #[test]
    fn formal_density_closed_forms() {
        let f = formal_chisq_density(2.0, 2.0).unwrap();
        assert!((f - (-1.0f64).exp() / 2.0).abs() < 1e-15);
        assert!(matches!(formal_chisq_density(1.0, 0.0), Err(Error::Pole(_))));
        assert!(matches!(formal_chisq_density(1.0, -4.0), Err(Error::Pole(_))));
        // Γ(-1/2) < 0, so f_{-1} is negative.
        assert!(formal_chisq_density(3.0, -1.0).unwrap() < 0.0);
        assert!(formal_chisq_density(3.0, -3.0).unwrap() > 0.0);
    }

    #[test]
    fn formal_density_derivative_identity() {
        // d/dx f_{m}(x) = ½ [f_{m-2}(x) - f_m(x)] at (x, m) = (5, 7)
        let (x, m, h) = (5.0, 7.0, 1e-5);
        let d = (formal_chisq_density(x + h, m).unwrap() - formal_chisq_density(x - h, m).unwrap()) / (2.0 * h);
        let rhs = 0.5 * (formal_chisq_density(x, m - 2.0).unwrap() - formal_chisq_density(x, m).unwrap());
        assert!((d - rhs).abs() < 1e-6);
        for m in [-3.0, -1.0, 1.0, 3.0] {
            let d = (formal_chisq_density(x + h, m).unwrap() - formal_chisq_density(x - h, m).unwrap()) / (2.0 * h);
            let rhs = 0.5 * (formal_chisq_density(x, m - 2.0).unwrap() - formal_chisq_density(x, m).unwrap());
            assert!((d - rhs).abs() < 1e-6 * rhs.abs().max(1e-3), "m={m}");
        }
    }

    #[test]
    fn formal_density_recurrence() {
        // x f_{m-4+2j}(x) = (m-4+2j) f_{m-2+2j}(x) at x=3, m=7, j=2
        let (x, m, j) = (3.0, 7.0, 2.0);
        let lhs = x * formal_chisq_density(x, m - 4.0 + 2.0 * j).unwrap();
        let rhs = (m - 4.0 + 2.0 * j) * formal_chisq_density(x, m - 2.0 + 2.0 * j).unwrap();
        assert!((lhs - rhs).abs() < 1e-10);
        let lhs = 3.0 * formal_chisq_density(3.0, -1.0).unwrap();
        let rhs = -1.0 * formal_chisq_density(3.0, 1.0).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn null_model_reduces_to_central() {
        let m = MarginalModel::new(PriorSpec::null(), 7.0).unwrap();
        for x in [0.5, 5.0, 20.0, 90.0] {
            let g = m.marginal_density(x, 0).unwrap();
            assert!((g / formal_chisq_density(x, 7.0).unwrap() - 1.0).abs() < 1e-14);
            let d = m.log_derivatives(x).unwrap();
            assert!((d[0] - (2.5 / x - 0.5)).abs() < 1e-14);
            assert!((d[1] + 2.5 / (x * x)).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_marginal_is_noncentral_density() {
        let m = MarginalModel::new(PriorSpec::degenerate(6.0).unwrap(), 7.0).unwrap();
        for x in [1.0, 13.0, 40.0] {
            let g = m.marginal_density(x, 0).unwrap();
            let f = crate::specfun::noncentral_chisq_pdf(x, 7.0, 6.0).unwrap();
            assert!((g / f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_df_density_identity() {
        let m = gamma_model(7.0);
        for i in 1..=60 {
            let x = i as f64;
            let h = 1e-4 * x;
            let g = m.marginal_density(x, 0).unwrap();
            let dg = (m.marginal_density(x + h, 0).unwrap() - m.marginal_density(x - h, 0).unwrap()) / (2.0 * h);
            let g5 = m.marginal_density(x, 1).unwrap();
            assert!((g5 - 2.0 * dg - g).abs() <= 1e-8 * g, "x={x}");
        }
    }

    #[test]
    fn ratio_route_matches_formal_densities() {
        // Ratios from posterior J expectations vs direct formal sums at
        // negative df, k = 7 means g_{-1} enters through R8.
        let m = gamma_model(7.0);
        for x in [3.0, 10.0, 20.0, 45.0] {
            let g = m.marginal_density(x, 0).unwrap();
            let r = m.density_ratios(x).unwrap();
            for i in 1..=4u32 {
                let direct = m.marginal_density(x, i).unwrap() / g;
                assert!((r[i as usize - 1] - direct).abs() <= 1e-10 * direct.abs().max(1.0), "x={x}, i={i}");
            }
        }
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        let m = gamma_model(7.0);
        for x in [4.0, 12.0, 30.0] {
            let d = m.log_derivatives(x).unwrap();
            let h = 1e-4;
            let lp = |x: f64| m.log_derivatives(x).unwrap();
            let (up, dn) = (lp(x + h), lp(x - h));
            let l0 = |x: f64| m.ln_marginal(x).unwrap();
            let fd1 = (l0(x + h) - l0(x - h)) / (2.0 * h);
            assert!((fd1 - d[0]).abs() < 1e-7, "l' at {x}");
            for r in 1..4 {
                let fd = (up[r - 1] - dn[r - 1]) / (2.0 * h);
                assert!((fd - d[r]).abs() < 1e-6 * d[r].abs().max(1e-4), "order {} at {x}: {fd} vs {}", r + 1, d[r]);
            }
        }
    }

    #[test]
    fn shrinkage_multiplier_crosses_one_near_k() {
        let m = MarginalModel::new(PriorSpec::exponential(0.25).unwrap(), 7.0).unwrap();
        let r2 = |x: f64| m.density_ratios(x).unwrap()[0];
        assert!(r2(1.0) > 1.0);
        assert!(r2(40.0) < 1.0);
        let mut prev = r2(1.0);
        let mut crossing = None;
        for i in 2..400 {
            let x = i as f64 * 0.05;
            let v = r2(x);
            if prev > 1.0 && v <= 1.0 {
                crossing = Some(x);
            }
            prev = v;
        }
        let c = crossing.expect("1+2l' crosses 1");
        assert!((c - 7.0).abs() < 3.0, "crossing at {c}");
    }

    #[test]
    fn gamma_multiplier_above_one_then_below() {
        let m = gamma_model(7.0);
        let r2 = |x: f64| m.density_ratios(x).unwrap()[0];
        assert!(r2(1.0) > 1.0 && r2(7.0) > 1.0);
        assert!(r2(30.0) < 1.0 && r2(80.0) < 1.0);
    }

    #[test]
    fn serde_rebuilds_weights() {
        let m = gamma_model(5.0);
        let s = serde_json::to_string(&m).unwrap();
        let back: MarginalModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back.weights(), m.weights());
    }
}
