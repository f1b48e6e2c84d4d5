//! Benjamini–Yekutieli FCR-adjusted intervals: equal-tailed inversion of the
//! noncentral chi-squared CDF at level `1 - qR/m`.

use crate::error::{Error, Result};
use crate::specfun::{noncentral_chisq_cdf, noncentral_chisq_sf, Df};

const LAMBDA_CEILING: f64 = 1e9;
const MAX_BISECTIONS: usize = 200;

/// `(lo, hi)` for the noncentrality of a statistic `x` selected as one of
/// `selected` out of `total` at FCR level `q`.
pub fn by_interval(x: f64, k: Df, q: f64, selected: usize, total: usize) -> Result<(f64, f64)> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("statistic must be finite and positive, got {x}")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("FCR level must lie in (0,1), got {q}")));
    }
    if selected == 0 || selected > total {
        return Err(Error::domain(format!("need 1 <= R <= m, got R={selected}, m={total}")));
    }
    let k = Df::positive(k.value())?.value();
    let tail = q * selected as f64 / (2.0 * total as f64);
    equal_tailed(x, k, tail)
}

/// Interval whose ends leave probability `tail` in each direction.
pub fn equal_tailed(x: f64, k: f64, tail: f64) -> Result<(f64, f64)> {
    // P(X >= x | λ) rises with λ: the lower end is where it reaches `tail`.
    let sf = |l: f64| noncentral_chisq_sf(x, k, l);
    let lo = if sf(0.0)? > tail { 0.0 } else { crossing(|l| Ok(sf(l)? > tail), x)?.0 };
    // P(X <= x | λ) falls with λ: the upper end is where it drops to `tail`.
    let cdf = |l: f64| noncentral_chisq_cdf(x, k, l);
    let hi = if cdf(0.0)? <= tail { 0.0 } else { crossing(|l| Ok(cdf(l)? <= tail), x)?.1 };
    Ok((lo, hi))
}

/// Bracket `[a, b]` around the first λ where `past` becomes true, with
/// `past(a)` false and `past(b)` true. The upper limit grows geometrically.
fn crossing<F: Fn(f64) -> Result<bool>>(past: F, x: f64) -> Result<(f64, f64)> {
    let mut a = 0.0;
    let mut b = x.max(1.0);
    while !past(b)? {
        a = b;
        b *= 2.0;
        if b > LAMBDA_CEILING {
            return Err(Error::Bracketing(format!("no noncentrality below {LAMBDA_CEILING:e} brackets the interval end at x={x}")));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if b - a <= 1e-10 * b.max(1.0) {
            break;
        }
        let mid = 0.5 * (a + b);
        if past(mid)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok((a, b))
}
