//! Globally adaptive Gauss–Kronrod (7/15) quadrature for small vector-valued
//! integrands. Used by the posterior oracle and for tabulated priors.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-12, abs_tol: 0.0, max_intervals: 4000 }
    }
}

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
}

fn gk15<const N: usize, F: Fn(f64) -> [f64; N]>(f: &F, a: f64, b: f64) -> Panel<N> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = [0.0; N];
    let mut gauss = [0.0; N];
    for n in 0..N {
        kronrod[n] = WGK[7] * fc[n];
        gauss[n] = WG[3] * fc[n];
    }
    for i in 0..7 {
        let dx = half * XGK[i];
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        for n in 0..N {
            let s = f1[n] + f2[n];
            kronrod[n] += WGK[i] * s;
            if i % 2 == 1 {
                gauss[n] += WG[i / 2] * s;
            }
        }
    }
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for n in 0..N {
        value[n] = kronrod[n] * half;
        error[n] = ((kronrod[n] - gauss[n]) * half).abs();
    }
    Panel { a, b, value, error }
}

/// Integrates each component of `f` over `[a, b]`.
///
/// Subdivides the panel with the largest scaled error until every component
/// meets `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<const N: usize, F>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<[f64; N]>
where
    F: Fn(f64) -> [f64; N],
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Quadrature(format!("bad interval [{a}, {b}]")));
    }
    if a == b {
        return Ok([0.0; N]);
    }
    let mut panels = vec![gk15(&f, a, b)];
    loop {
        let mut total = [0.0; N];
        let mut err = [0.0; N];
        for p in &panels {
            for n in 0..N {
                total[n] += p.value[n];
                err[n] += p.error[n];
            }
        }
        if total.iter().chain(err.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Quadrature("non-finite integrand".into()));
        }
        let scale = |n: usize| opts.abs_tol.max(opts.rel_tol * total[n].abs()).max(f64::MIN_POSITIVE);
        if (0..N).all(|n| err[n] <= scale(n)) {
            return Ok(total);
        }
        if panels.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "tolerance not met after {} panels on [{a}, {b}]",
                panels.len()
            )));
        }
        let worst = (0..panels.len())
            .max_by(|&i, &j| {
                let ei = (0..N).map(|n| panels[i].error[n] / scale(n)).fold(0.0, f64::max);
                let ej = (0..N).map(|n| panels[j].error[n] / scale(n)).fold(0.0, f64::max);
                ei.total_cmp(&ej)
            })
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Quadrature("interval collapsed below machine resolution".into()));
        }
        panels.push(gk15(&f, p.a, mid));
        panels.push(gk15(&f, mid, p.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| [x.powi(5), 1.0], 0.0, 2.0, QuadOptions::default()).unwrap();
        assert!((v[0] - 64.0 / 6.0).abs() < 1e-13);
        assert!((v[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn peaked_integrand() {
        let opts = QuadOptions { rel_tol: 1e-11, ..Default::default() };
        let v = integrate(|x: f64| [(-(x - 3.0).powi(2) * 50.0).exp()], 0.0, 40.0, opts).unwrap();
        let want = (std::f64::consts::PI / 50.0).sqrt();
        assert!((v[0] / want - 1.0).abs() < 1e-10);
    }

    #[test]
    fn endpoint_singularity() {
        let opts = QuadOptions { rel_tol: 1e-10, ..Default::default() };
        let v = integrate(|x: f64| [x.powf(-0.5)], 0.0, 1.0, opts).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-8);
    }
}
