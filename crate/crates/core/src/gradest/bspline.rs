//! Clamped B-spline basis with analytic derivatives (Cox–de Boor).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    degree: usize,
    knots: Vec<f64>,
}

impl BSplineBasis {
    /// `size` functions of the given degree on `[a, b]`, with interior
    /// breakpoints equally spaced in `ln x`.
    pub fn log_spaced(a: f64, b: f64, size: usize, degree: usize) -> Result<Self> {
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(Error::InvalidConfig(format!("log-spaced knots need 0 < a < b, got [{a}, {b}]")));
        }
        if size < degree + 1 {
            return Err(Error::InvalidConfig(format!("basis size {size} too small for degree {degree}")));
        }
        let pieces = size - degree;
        let (la, lb) = (a.ln(), b.ln());
        let mut knots = vec![a; degree];
        for i in 0..=pieces {
            knots.push((la + (lb - la) * i as f64 / pieces as f64).exp());
        }
        // Pin the ends exactly; exp(ln b) can land a hair past b.
        knots[degree] = a;
        knots[degree + pieces] = b;
        knots.extend(std::iter::repeat_n(b, degree));
        Ok(BSplineBasis { degree, knots })
    }

    pub fn from_knots(knots: Vec<f64>, degree: usize) -> Result<Self> {
        if knots.len() < 2 * (degree + 1) || knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("knot vector must be non-decreasing and long enough".into()));
        }
        Ok(BSplineBasis { degree, knots })
    }

    pub fn size(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.knots.len() - self.degree - 1])
    }

    fn span(&self, x: f64) -> usize {
        let p = self.degree;
        let n = self.size();
        if x >= self.knots[n] {
            return n - 1;
        }
        if x <= self.knots[p] {
            return p;
        }
        // Last index with knots[i] <= x among the active spans.
        let idx = self.knots[p..=n].partition_point(|&t| t <= x);
        p + idx - 1
    }

    /// Values and derivatives up to `nd` of the non-zero basis functions at
    /// `x`: returns the first index and `ders[r][i]` for the `degree+1`
    /// functions starting there. `x` is clamped to the domain.
    pub fn eval_nonzero(&self, x: f64, nd: usize) -> (usize, Vec<Vec<f64>>) {
        let p = self.degree;
        let (lo, hi) = self.domain();
        let x = x.clamp(lo, hi);
        let span = self.span(x);
        let t = &self.knots;

        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let nd = nd.min(p);
        let mut ders = vec![vec![0.0; p + 1]; nd + 1];
        for (j, d) in ders[0].iter_mut().enumerate() {
            *d = ndu[j][p];
        }
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nd {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().skip(1) {
            row.iter_mut().for_each(|v| *v *= factor);
            factor *= (p - k) as f64;
        }
        (span - p, ders)
    }

    /// Derivatives `0..=nd` of `Σ θ_b φ_b` at `x`.
    pub fn eval_combination(&self, theta: &[f64], x: f64, nd: usize) -> Vec<f64> {
        let (first, ders) = self.eval_nonzero(x, nd);
        ders.iter()
            .map(|row| row.iter().enumerate().map(|(i, v)| v * theta[first + i]).sum())
            .collect()
    }
}
