//! Normal-transformation (NT) baseline: map `x` to `z = Φ⁻¹(F_k(x))`, apply
//! Tweedie's formula for unit-variance normal data on the z scale, and map
//! the posterior interval for `μ = E(Z)` back to the noncentrality scale.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradest::{fit_lindsey_real, LindseyFit};
use crate::model::MarginalModel;
use crate::quad::{integrate, QuadOptions};
use crate::specfun::{chisq_cdf, chisq_ln_pdf, chisq_sf, norm_quantile, poisson_window, Df};
use crate::tweedie::{adjust_for_null, ALL_NULL_EPS};

pub const DEFAULT_X_MAX: f64 = 80.0;
/// Spacing of the two anchors used by the linear continuation beyond `x_max`.
const ANCHOR_GAP: f64 = 5.0;
const TABLE_POINTS: usize = 2000;
const TABLE_LAMBDA_MAX: f64 = 400.0;
/// `|Φ⁻¹(p)|` at the smallest normal double; caps the transform in the table.
const Z_CAP: f64 = 38.5;

/// `Φ⁻¹(F_k(x))`, failing once `F_k(x)` rounds to 1 (or to 0).
pub fn chisq_to_z(x: f64, k: Df) -> Result<f64> {
    let k = k.value();
    let cdf = chisq_cdf(x, k)?;
    if cdf >= 1.0 || cdf <= 0.0 {
        return Err(Error::Saturation { x });
    }
    z_from_tails(x, k)
}

/// The transform evaluated through whichever tail is smaller, so it stays
/// accurate far past the point where `F_k` itself saturates.
fn z_from_tails(x: f64, k: f64) -> Result<f64> {
    let cdf = chisq_cdf(x, k)?;
    if cdf <= 0.5 {
        return if cdf > 0.0 { norm_quantile(cdf) } else { Ok(-Z_CAP) };
    }
    let sf = chisq_sf(x, k)?;
    if sf > 0.0 {
        Ok(-norm_quantile(sf)?)
    } else {
        Ok(Z_CAP)
    }
}

/// Monotone table `λ ↦ m(λ) = E[Φ⁻¹(F_k(X))]`, `X ~ χ²_k(λ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackMap {
    lambdas: Vec<f64>,
    means: Vec<f64>,
}

impl BackMap {
    pub fn new(k: Df) -> Result<Self> {
        let kv = k.value();
        let (start, w) = poisson_window(TABLE_LAMBDA_MAX / 2.0, 1e-14);
        let jmax = start + w.len();
        // c_j = E z(χ²_{k+2j}); the null term is zero by symmetry.
        let c: Vec<f64> = (0..jmax)
            .into_par_iter()
            .map(|j| if j == 0 { Ok(0.0) } else { expected_z(kv, kv + 2.0 * j as f64) })
            .collect::<Result<_>>()?;
        let mut lambdas = Vec::with_capacity(TABLE_POINTS);
        let mut means = Vec::with_capacity(TABLE_POINTS);
        let mut running = 0.0_f64;
        for i in 0..TABLE_POINTS {
            let lambda = TABLE_LAMBDA_MAX * i as f64 / (TABLE_POINTS - 1) as f64;
            let (s, pw) = poisson_window(lambda / 2.0, 1e-14);
            let m: f64 = pw.iter().enumerate().map(|(i, p)| p * c[(s + i).min(jmax - 1)]).sum();
            running = running.max(m);
            lambdas.push(lambda);
            means.push(running);
        }
        Ok(BackMap { lambdas, means })
    }

    pub fn mean_z(&self, lambda: f64) -> f64 {
        let n = self.lambdas.len();
        let h = self.lambdas[1] - self.lambdas[0];
        let i = ((lambda / h).floor() as usize).min(n - 2);
        let t = (lambda - self.lambdas[i]) / h;
        self.means[i] + t * (self.means[i + 1] - self.means[i])
    }

    /// Noncentrality whose mean z equals `e`: 0 for `e ≤ 0`, linear
    /// interpolation inside the table, linear continuation past its end.
    pub fn lambda_for(&self, e: f64) -> f64 {
        if !(e > 0.0) {
            return 0.0;
        }
        let n = self.means.len();
        let i = self.means.partition_point(|&m| m < e);
        let (a, b) = match i {
            0 => return 0.0,
            i if i >= n => (n - 2, n - 1),
            i => (i - 1, i),
        };
        let dm = self.means[b] - self.means[a];
        if dm <= 0.0 {
            return self.lambdas[b];
        }
        self.lambdas[a] + (e - self.means[a]) * (self.lambdas[b] - self.lambdas[a]) / dm
    }
}

fn expected_z(k: f64, m: f64) -> Result<f64> {
    let sd = (2.0 * m).sqrt();
    let lo = (m - 14.0 * sd).max(0.0);
    let hi = m + 20.0 * sd + 40.0;
    let opts = QuadOptions { rel_tol: 1e-10, abs_tol: 1e-13, max_intervals: 4000 };
    let [v] = integrate(
        |x| {
            if x <= 0.0 {
                return [0.0];
            }
            let z = z_from_tails(x, k).unwrap_or(0.0);
            [z * chisq_ln_pdf(x, m).exp()]
        },
        lo,
        hi,
        opts,
    )?;
    Ok(v)
}

/// Source of the normal-scale log-density gradients.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum NtGradients {
    /// Transformed true marginal: `h(z) = g_k(x) φ(z) / f_k(x)`.
    Exact(MarginalModel),
    /// Lindsey fit to the transformed statistics.
    Fitted(LindseyFit),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NtModel {
    pub gradients: NtGradients,
    pub k: Df,
    pub x_max: f64,
    /// Null proportion for the point-mass adjustment, if any.
    pub pi0: Option<f64>,
    pub back_map: BackMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NtEstimate {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    pub z: f64,
    /// Normal-scale posterior mean and variance of `μ`.
    pub mu: f64,
    pub mu_variance: f64,
    pub fdr: Option<f64>,
    pub extrapolated: bool,
    pub clamped_variance: bool,
    pub all_null: bool,
}

impl NtModel {
    pub fn exact(model: MarginalModel, pi0: Option<f64>) -> Result<Self> {
        let k = Df::positive(model.k())?;
        Ok(NtModel { back_map: BackMap::new(k)?, gradients: NtGradients::Exact(model), k, x_max: DEFAULT_X_MAX, pi0 })
    }

    /// Lindsey fit of the transformed statistics.
    pub fn fit(xs: &[f64], k: Df, pi0: Option<f64>, degree: usize, bins: usize) -> Result<Self> {
        let kp = Df::positive(k.value())?;
        let zs: Vec<f64> = xs.iter().map(|&x| z_from_tails(x, kp.value())).collect::<Result<_>>()?;
        let fit = fit_lindsey_real(&zs, degree, bins, (0.0, 1.0))?;
        Ok(NtModel { back_map: BackMap::new(kp)?, gradients: NtGradients::Fitted(fit), k: kp, x_max: DEFAULT_X_MAX, pi0 })
    }

    pub fn with_x_max(mut self, x_max: f64) -> Self {
        self.x_max = x_max;
        self
    }

    /// `(z, l'_h(z), l''_h(z), ln h(z) - ln φ(z))` at `x`.
    fn normal_scale(&self, x: f64) -> Result<(f64, f64, f64, f64)> {
        let k = self.k.value();
        let z = chisq_to_z(x, self.k)?;
        match &self.gradients {
            NtGradients::Exact(model) => {
                let [lg1, lg2, ..] = model.log_derivatives(x)?;
                let a = k / 2.0 - 1.0;
                let (lf1, lf2) = (a / x - 0.5, -a / (x * x));
                let ln_f = chisq_ln_pdf(x, k);
                // dx/dz = φ(z)/f_k(x)
                let r = (-0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - ln_f).exp();
                let d = lg1 - lf1;
                let h1 = d * r - z;
                let h2 = (lg2 - lf2) * r * r - d * r * (z + lf1 * r) - 1.0;
                Ok((z, h1, h2, model.ln_marginal(x)? - ln_f))
            }
            NtGradients::Fitted(fit) => {
                let dv = fit.derivatives(z);
                let ln_phi = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
                Ok((z, dv.d[0], dv.d[1], fit.density(z).ln() - ln_phi))
            }
        }
    }

    fn direct(&self, x: f64, zq: f64) -> Result<NtEstimate> {
        let (z, h1, h2, ln_ratio) = self.normal_scale(x)?;
        let mut mu = z + h1;
        let mut var = 1.0 + h2;
        let mut clamped_variance = false;
        if var < 0.0 {
            var = 0.0;
            clamped_variance = true;
        }
        let mut fdr = None;
        let mut all_null = false;
        if let Some(pi0) = self.pi0 {
            let f = (pi0 * (-ln_ratio).exp()).clamp(0.0, 1.0);
            fdr = Some(f);
            if f >= 1.0 - ALL_NULL_EPS {
                all_null = true;
                mu = 0.0;
                var = 0.0;
            } else {
                let (m1, v1, flags) = adjust_for_null(mu, var, f)?;
                mu = m1;
                var = v1;
                clamped_variance |= flags.clamped_variance;
            }
        }
        let half = zq * var.sqrt();
        let bm = &self.back_map;
        Ok(NtEstimate {
            mean: bm.lambda_for(mu),
            lo: bm.lambda_for(mu - half),
            hi: bm.lambda_for(mu + half),
            z,
            mu,
            mu_variance: var,
            fdr,
            extrapolated: false,
            clamped_variance,
            all_null,
        })
    }
}

/// NT posterior mean and `level` interval for `λ`. Beyond `x_max` the
/// estimate and endpoints are continued linearly in `x` from two anchors
/// and flagged.
pub fn nt_posterior_interval(m: &NtModel, x: f64, level: f64) -> Result<NtEstimate> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("statistic must be finite and positive, got {x}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("interval level must lie in (0,1), got {level}")));
    }
    let zq = norm_quantile(0.5 + level / 2.0)?;
    if x <= m.x_max {
        return m.direct(x, zq);
    }
    let (xa, xb) = (m.x_max - ANCHOR_GAP, m.x_max);
    let a = m.direct(xa, zq)?;
    let b = m.direct(xb, zq)?;
    let t = (x - xb) / (xb - xa);
    let lin = |u: f64, v: f64| v + t * (v - u);
    let lo = lin(a.lo, b.lo).max(0.0);
    let mean = lin(a.mean, b.mean).max(lo);
    Ok(NtEstimate {
        mean,
        lo,
        hi: lin(a.hi, b.hi).max(mean),
        z: lin(a.z, b.z),
        mu: lin(a.mu, b.mu),
        mu_variance: lin(a.mu_variance, b.mu_variance).max(0.0),
        fdr: b.fdr,
        extrapolated: true,
        clamped_variance: a.clamped_variance || b.clamped_variance,
        all_null: b.all_null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample, PriorSpec};
    use crate::specfun::chisq_quantile;

    fn df(k: f64) -> Df {
        Df::new(k).unwrap()
    }

    #[test]
    fn transform_is_probability_integral() {
        let k = df(7.0);
        assert!(chisq_to_z(chisq_quantile(0.5, 7.0).unwrap(), k).unwrap().abs() < 1e-10);
        let z = chisq_to_z(chisq_quantile(0.975, 7.0).unwrap(), k).unwrap();
        assert!((z - 1.959_963_984_540_054).abs() < 1e-8);
        assert!(matches!(chisq_to_z(120.0, k), Err(Error::Saturation { .. })));
    }

    #[test]
    fn back_map_is_monotone_and_anchored() {
        let bm = BackMap::new(df(7.0)).unwrap();
        assert_eq!(bm.mean_z(0.0), 0.0);
        assert!(bm.means.windows(2).all(|w| w[1] >= w[0]));
        for lambda in [0.5, 5.0, 37.3, 250.0] {
            assert!((bm.lambda_for(bm.mean_z(lambda)) - lambda).abs() < 1e-6 * lambda.max(1.0));
        }
        assert_eq!(bm.lambda_for(-1.0), 0.0);
        assert!(bm.lambda_for(bm.mean_z(400.0) + 1.0) > 400.0);
    }

    #[test]
    fn back_map_against_monte_carlo() {
        // E z under χ²_7(20), by simulation.
        let bm = BackMap::new(df(7.0)).unwrap();
        let m = MarginalModel::new(PriorSpec::degenerate(20.0).unwrap(), 7.0).unwrap();
        let zs: Vec<f64> = sample(&m, 40_000, 3).iter().map(|d| z_from_tails(d.x, 7.0).unwrap()).collect();
        let mc = crate::stats::mean(&zs);
        let se = crate::stats::variance(&zs).sqrt() / 200.0;
        assert!((bm.mean_z(20.0) - mc).abs() < 4.0 * se, "{} vs {mc}", bm.mean_z(20.0));
    }

    #[test]
    fn median_under_null_maps_to_zero() {
        let nt = NtModel::exact(MarginalModel::new(PriorSpec::null(), 7.0).unwrap(), None).unwrap();
        let e = nt_posterior_interval(&nt, chisq_quantile(0.5, 7.0).unwrap(), 0.9).unwrap();
        assert!(e.mean.abs() < 1e-9 && e.mu.abs() < 1e-9);
        assert!(e.mu_variance.abs() < 1e-12 && e.hi < 1e-5);
    }

    #[test]
    fn normal_scale_gradient_matches_finite_difference() {
        // Difference quotients taken along x, divided by the matching z step.
        let model = MarginalModel::new(PriorSpec::gamma(2.0, 10.0).unwrap(), 7.0).unwrap();
        let nt = NtModel::exact(model, None).unwrap();
        for x in [4.0, 15.0, 40.0, 75.0] {
            let (_, h1, h2, _) = nt.normal_scale(x).unwrap();
            let dx = 1e-4 * x;
            let (za, ha, _, la) = nt.normal_scale(x + dx).unwrap();
            let (zb, hb, _, lb) = nt.normal_scale(x - dx).unwrap();
            let fd1 = ((la - 0.5 * za * za) - (lb - 0.5 * zb * zb)) / (za - zb);
            let fd2 = (ha - hb) / (za - zb);
            assert!((fd1 - h1).abs() < 1e-7, "x={x}: {fd1} vs {h1}");
            assert!((fd2 - h2).abs() < 1e-5, "x={x}: {fd2} vs {h2}");
        }
    }

    #[test]
    fn large_statistics_are_extrapolated() {
        let model = MarginalModel::new(PriorSpec::gamma(2.0, 10.0).unwrap(), 7.0).unwrap();
        let nt = NtModel::exact(model, None).unwrap();
        let e = nt_posterior_interval(&nt, 120.0, 0.9).unwrap();
        assert!(e.extrapolated);
        assert!(e.lo <= e.mean && e.mean <= e.hi);
        let at = nt_posterior_interval(&nt, 80.0, 0.9).unwrap();
        assert!(!at.extrapolated && e.mean > at.mean);
    }

    #[test]
    fn fitted_null_is_near_zero() {
        let m = MarginalModel::new(PriorSpec::null(), 7.0).unwrap();
        let xs: Vec<f64> = sample(&m, 20_000, 9).into_iter().map(|d| d.x).collect();
        let nt = NtModel::fit(&xs, df(7.0), None, 7, 120).unwrap();
        let e = nt_posterior_interval(&nt, chisq_quantile(0.5, 7.0).unwrap(), 0.9).unwrap();
        assert!(e.mu.abs() < 0.05, "{}", e.mu);
    }
}
