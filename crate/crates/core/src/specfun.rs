//! Special functions: log-gamma, regularized incomplete gamma, central and
//! noncentral chi-squared distributions, and the standard normal.
//!
//! Everything here is a pure function of its arguments.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Residual Poisson mass below which mixture series are truncated.
pub const POISSON_TAIL: f64 = 1e-12;

/// Degrees of freedom.
///
/// Any real value is accepted except the non-positive even integers, where
/// `Γ(k/2)` has a pole. Distribution functions additionally require `k > 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Df(f64);

impl Df {
    pub fn new(k: f64) -> Result<Self> {
        if !k.is_finite() {
            return Err(Error::domain(format!("degrees of freedom must be finite, got {k}")));
        }
        if is_nonpositive_even(k) {
            return Err(Error::Pole(k / 2.0));
        }
        Ok(Df(k))
    }

    /// Like [`Df::new`] but also requires `k > 0`.
    pub fn positive(k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(Error::domain(format!("degrees of freedom must be positive, got {k}")));
        }
        Df::new(k)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Df {
    type Error = Error;
    fn try_from(k: f64) -> Result<Self> {
        Df::new(k)
    }
}

impl From<Df> for f64 {
    fn from(k: Df) -> f64 {
        k.0
    }
}

pub(crate) fn is_nonpositive_even(m: f64) -> bool {
    m <= 0.0 && (m / 2.0).fract() == 0.0
}

fn is_nonpositive_integer(a: f64) -> bool {
    a <= 0.0 && a.fract() == 0.0
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(a)` for `a >= 0.5` (Lanczos, g = 7).
fn ln_gamma_lanczos(a: f64) -> f64 {
    let z = a - 1.0;
    let mut sum = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + sum.ln()
}

/// `sin(πa)` with argument reduction so large |a| keeps full precision.
fn sin_pi(a: f64) -> f64 {
    let r = a - 2.0 * (a / 2.0).round();
    (PI * r).sin()
}

/// Natural log of `|Γ(a)|` together with the sign of `Γ(a)`.
///
/// Negative non-integer arguments go through the reflection formula.
pub fn ln_gamma(a: f64) -> Result<(f64, f64)> {
    if a.is_nan() {
        return Err(Error::domain("ln_gamma of NaN"));
    }
    if is_nonpositive_integer(a) {
        return Err(Error::Pole(a));
    }
    Ok(ln_gamma_signed(a))
}

/// Unchecked variant; callers guarantee `a` is not a pole.
pub(crate) fn ln_gamma_signed(a: f64) -> (f64, f64) {
    if a >= 0.5 {
        return (ln_gamma_lanczos(a), 1.0);
    }
    // Γ(a) Γ(1-a) = π / sin(πa), and Γ(1-a) > 0 here.
    let s = sin_pi(a);
    ((PI / s.abs()).ln() - ln_gamma_lanczos(1.0 - a), s.signum())
}

/// `ln Γ(a)` for `a > 0`.
pub(crate) fn ln_gamma_pos(a: f64) -> f64 {
    debug_assert!(a > 0.0);
    ln_gamma_signed(a).0
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 100_000;

/// Returns `(P(a, x), Q(a, x))`, the regularized lower and upper incomplete
/// gamma functions.
pub fn incomplete_gamma(a: f64, x: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(format!("incomplete gamma needs a > 0, got {a}")));
    }
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("incomplete gamma needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x.is_infinite() {
        return Ok((1.0, 0.0));
    }
    let ln_prefactor = a * x.ln() - x - ln_gamma_pos(a);
    if x < a + 1.0 {
        let p = gamma_series(a, x, ln_prefactor)?;
        Ok((p, 1.0 - p))
    } else {
        let q = gamma_continued_fraction(a, x, ln_prefactor)?;
        Ok((1.0 - q, q))
    }
}

fn gamma_series(a: f64, x: f64, ln_prefactor: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            return Ok((sum.ln() + ln_prefactor).exp().min(1.0));
        }
    }
    Err(Error::NonConvergence { routine: "incomplete gamma series", iterations: GAMMA_MAX_ITER })
}

fn gamma_continued_fraction(a: f64, x: f64, ln_prefactor: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            return Ok((h.ln() + ln_prefactor).exp().min(1.0));
        }
    }
    Err(Error::NonConvergence { routine: "incomplete gamma continued fraction", iterations: GAMMA_MAX_ITER })
}

fn check_chisq_args(x: f64, k: f64) -> Result<()> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain(format!("chi-squared argument must be >= 0, got {x}")));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::domain(format!("chi-squared df must be positive, got {k}")));
    }
    Ok(())
}

/// Central chi-squared CDF `P(k/2, x/2)`.
pub fn chisq_cdf(x: f64, k: f64) -> Result<f64> {
    check_chisq_args(x, k)?;
    Ok(incomplete_gamma(k / 2.0, x / 2.0)?.0)
}

/// Central chi-squared survival function `Q(k/2, x/2)`.
pub fn chisq_sf(x: f64, k: f64) -> Result<f64> {
    check_chisq_args(x, k)?;
    Ok(incomplete_gamma(k / 2.0, x / 2.0)?.1)
}

/// Log of the central chi-squared density, `k > 0`, `x > 0`.
pub(crate) fn chisq_ln_pdf(x: f64, k: f64) -> f64 {
    let h = k / 2.0;
    (h - 1.0) * x.ln() - x / 2.0 - h * LN_2 - ln_gamma_pos(h)
}

pub fn chisq_pdf(x: f64, k: f64) -> Result<f64> {
    check_chisq_args(x, k)?;
    if x == 0.0 {
        return Ok(match k {
            k if k < 2.0 => f64::INFINITY,
            2.0 => 0.5,
            _ => 0.0,
        });
    }
    Ok(chisq_ln_pdf(x, k).exp())
}

const QUANTILE_MAX_ITER: usize = 200;

/// Inverse of [`chisq_cdf`] by safeguarded Newton iteration inside a
/// bisection bracket.
pub fn chisq_quantile(p: f64, k: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("quantile level must lie in (0,1), got {p}")));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::domain(format!("chi-squared df must be positive, got {k}")));
    }
    // Work with whichever tail is small so the residual keeps relative precision.
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    let residual = |x: f64| -> Result<f64> {
        let (lo, hi) = incomplete_gamma(k / 2.0, x / 2.0)?;
        Ok(if upper { target - hi } else { lo - target })
    };

    let mut lo = 0.0;
    let mut hi = k + 10.0 * (2.0 * k).sqrt() + 10.0;
    let mut expansions = 0;
    while residual(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 64 {
            return Err(Error::NonConvergence { routine: "chisq_quantile bracket", iterations: expansions });
        }
    }

    let mut x = (lo + hi) / 2.0;
    for _ in 0..QUANTILE_MAX_ITER {
        let f = residual(x)?;
        if f == 0.0 || f.abs() <= 1e-15 * target {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(x);
        }
        let slope = if x > 0.0 { chisq_ln_pdf(x, k).exp() } else { 0.0 };
        let newton = if slope > 0.0 { x - f / slope } else { f64::NAN };
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Err(Error::NonConvergence { routine: "chisq_quantile", iterations: QUANTILE_MAX_ITER })
}

/// Poisson(`mu`) probabilities on a window of consecutive counts holding all
/// but at most `tail` of the mass. Returns the first count and the weights.
pub(crate) fn poisson_window(mu: f64, tail: f64) -> (usize, Vec<f64>) {
    if mu <= 0.0 {
        return (0, vec![1.0]);
    }
    let mode = mu.floor() as usize;
    let ln_mode = -mu + mode as f64 * mu.ln() - ln_gamma_pos(mode as f64 + 1.0);
    let w_mode = ln_mode.exp();

    let mut below = Vec::new();
    let mut w = w_mode;
    let mut j = mode;
    while j > 0 {
        let ratio = j as f64 / mu;
        w *= ratio;
        j -= 1;
        below.push(w);
        // Remaining lower tail is bounded by a geometric series with this ratio.
        let next_ratio = j as f64 / mu;
        if next_ratio < 1.0 && w * next_ratio / (1.0 - next_ratio) < tail * 0.5 {
            break;
        }
    }
    let start = j;

    let mut weights: Vec<f64> = below.into_iter().rev().collect();
    weights.push(w_mode);
    let mut w = w_mode;
    let mut j = mode;
    loop {
        w *= mu / (j as f64 + 1.0);
        j += 1;
        weights.push(w);
        let ratio = mu / (j as f64 + 1.0);
        if ratio < 1.0 && w * ratio / (1.0 - ratio) < tail * 0.5 {
            break;
        }
    }
    (start, weights)
}

fn check_noncentral(x: f64, k: f64, lambda: f64) -> Result<()> {
    check_chisq_args(x, k)?;
    if lambda.is_nan() || lambda < 0.0 || lambda.is_infinite() {
        return Err(Error::domain(format!("noncentrality must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// `ln(x^a e^{-x} / Γ(a+1))`, the increment between neighbouring regularized
/// incomplete gamma values.
fn ln_gamma_increment(a: f64, x: f64) -> f64 {
    a * x.ln() - x - ln_gamma_pos(a + 1.0)
}

/// Noncentral chi-squared CDF as a Poisson mixture of central CDFs.
pub fn noncentral_chisq_cdf(x: f64, k: f64, lambda: f64) -> Result<f64> {
    check_noncentral(x, k, lambda)?;
    if lambda == 0.0 {
        return chisq_cdf(x, k);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let (start, weights) = poisson_window(lambda / 2.0, POISSON_TAIL * 1e-2);
    let half = x / 2.0;
    // P(a, y) = P(a+1, y) + y^a e^{-y} / Γ(a+1): recur downward, adding positive terms.
    let a_top = k / 2.0 + (start + weights.len() - 1) as f64;
    let mut p = incomplete_gamma(a_top, half)?.0;
    let mut ln_inc = ln_gamma_increment(a_top - 1.0, half);
    let mut total = 0.0;
    for (offset, w) in weights.iter().enumerate().rev() {
        total += w * p;
        if offset > 0 {
            let a = k / 2.0 + (start + offset - 1) as f64;
            p += ln_inc.exp();
            ln_inc += (a / half).ln();
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Noncentral chi-squared survival function.
pub fn noncentral_chisq_sf(x: f64, k: f64, lambda: f64) -> Result<f64> {
    check_noncentral(x, k, lambda)?;
    if lambda == 0.0 {
        return chisq_sf(x, k);
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let (start, weights) = poisson_window(lambda / 2.0, POISSON_TAIL * 1e-2);
    let half = x / 2.0;
    // Q(a+1, y) = Q(a, y) + y^a e^{-y} / Γ(a+1): recur upward, adding positive terms.
    let a0 = k / 2.0 + start as f64;
    let mut q = incomplete_gamma(a0, half)?.1;
    let mut ln_inc = ln_gamma_increment(a0, half);
    let mut total = 0.0;
    for (offset, w) in weights.iter().enumerate() {
        total += w * q;
        let a = a0 + offset as f64;
        q += ln_inc.exp();
        ln_inc += (half / (a + 1.0)).ln();
    }
    Ok(total.clamp(0.0, 1.0))
}

/// Noncentral chi-squared density, `x > 0`.
pub fn noncentral_chisq_pdf(x: f64, k: f64, lambda: f64) -> Result<f64> {
    check_noncentral(x, k, lambda)?;
    if x == 0.0 {
        return Err(Error::domain("noncentral density evaluated at x = 0"));
    }
    Ok(noncentral_ln_pdf(x, k, lambda).exp())
}

/// `ln f_{k,λ}(x)` for `x > 0`, `k > 0`.
pub(crate) fn noncentral_ln_pdf(x: f64, k: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return chisq_ln_pdf(x, k);
    }
    let mu = lambda / 2.0;
    // Terms t_j = Poi(mu)(j) f_{k+2j}(x); t_{j+1}/t_j = mu x / ((j+1)(k+2j)).
    // Start from the largest term and walk both ways.
    let ratio = |j: f64| mu * x / ((j + 1.0) * (k + 2.0 * j));
    // Peak of t_j: solve (j+1)(k+2j) = mu x.
    let disc = (k + 2.0).powi(2) - 8.0 * (k - mu * x);
    let peak = ((-(k + 2.0) + disc.max(0.0).sqrt()) / 4.0).max(0.0).ceil();
    let ln_peak = -mu + peak * mu.ln() - ln_gamma_pos(peak + 1.0) + chisq_ln_pdf(x, k + 2.0 * peak);

    let mut sum = 1.0;
    let mut t = 1.0;
    let mut j = peak;
    while j >= 1.0 {
        t /= ratio(j - 1.0);
        sum += t;
        j -= 1.0;
        if t < 1e-17 * sum {
            break;
        }
    }
    let mut t = 1.0;
    let mut j = peak;
    loop {
        let r = ratio(j);
        t *= r;
        sum += t;
        j += 1.0;
        if r < 1.0 && t * r / (1.0 - r) < 1e-17 * sum {
            break;
        }
    }
    ln_peak + sum.ln()
}

pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF via `erfc(z) = Q(1/2, z^2)`.
pub fn norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let (_, q) = incomplete_gamma(0.5, 0.5 * x * x).unwrap_or((0.0, 1.0));
    if x < 0.0 {
        0.5 * q
    } else {
        1.0 - 0.5 * q
    }
}

pub fn norm_sf(x: f64) -> f64 {
    norm_cdf(-x)
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("normal quantile level must lie in (0,1), got {p}")));
    }
    if p > 0.5 {
        return Ok(-lower_norm_quantile(1.0 - p));
    }
    Ok(lower_norm_quantile(p))
}

/// Acklam's rational approximation refined by Halley steps; `p <= 0.5`.
fn lower_norm_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    for _ in 0..2 {
        let e = norm_cdf(x) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}
