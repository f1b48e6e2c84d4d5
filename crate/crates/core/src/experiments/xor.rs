//! XOR variable-selection study: simulate the two-module XOR model, score
//! every variable triplet with the 8-cell Q statistic, select by BH and
//! attach fitted posterior summaries.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradest::{FitConfig, GradientModel};
use crate::mtest::{bh_select, posterior_significance};
use crate::rng::stream;
use crate::specfun::{chisq_sf, Df};
use crate::stats::{mean, variance};
use crate::tweedie::{summarize, PosteriorSummary, SummaryOptions};

const CELLS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XorConfig {
    pub n: usize,
    pub p: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for XorConfig {
    fn default() -> Self {
        XorConfig { n: 300, p: 100, noise_sd: 0.5, seed: 0 }
    }
}

impl XorConfig {
    pub fn with_seed(seed: u64) -> Self {
        XorConfig { seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < CELLS {
            return Err(Error::InvalidConfig(format!("XOR sample size must be >= 8, got {}", self.n)));
        }
        if self.p < 5 {
            return Err(Error::InvalidConfig(format!("XOR needs at least 5 variables, got {}", self.p)));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidConfig(format!("noise sd must be finite and >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }
}

/// Response and binary predictors, stored by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XorData {
    pub y: Vec<f64>,
    /// `x[v]` is the column of variable `v + 1`.
    pub x: Vec<Vec<u8>>,
}

impl XorData {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }

    /// The `n × (p+1)` matrix with `Y` in column 0.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| std::iter::once(self.y[i]).chain(self.x.iter().map(|c| c[i] as f64)).collect())
            .collect()
    }
}

/// Noise-free response: the pair XOR of `X1, X2` or the triplet version on
/// `X3, X4, X5`, chosen by a fair coin.
pub fn xor_signal(first_branch: bool, x: [u8; 5]) -> f64 {
    let [x1, x2, x3, x4, x5] = x.map(f64::from);
    if first_branch {
        x1 + x2 - 2.0 * x1 * x2
    } else {
        x3 + x4 + x5 - 2.0 * (x3 * x4 + x3 * x5 + x4 * x5) + 4.0 * x3 * x4 * x5
    }
}

pub fn gen_xor(cfg: &XorConfig) -> Result<XorData> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, 0);
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut x = vec![Vec::with_capacity(cfg.n); cfg.p];
    let mut y = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        for col in x.iter_mut() {
            col.push(u8::from(rng.random::<bool>()));
        }
        let branch = rng.random::<bool>();
        let last = x[0].len() - 1;
        let causal = [x[0][last], x[1][last], x[2][last], x[3][last], x[4][last]];
        y.push(xor_signal(branch, causal) + noise.sample(&mut rng));
    }
    Ok(XorData { y, x })
}

/// `Σ_j n_j (Ȳ - Ȳ_j)² / σ̂²` over occupied cells, from per-cell counts and sums.
fn q_from_cells(counts: &[usize; CELLS], sums: &[f64; CELLS], ybar: f64, s2: f64) -> (f64, usize) {
    let mut q = 0.0;
    let mut occupied = 0;
    for (c, s) in counts.iter().zip(sums) {
        if *c > 0 {
            let d = s / *c as f64 - ybar;
            q += *c as f64 * d * d;
            occupied += 1;
        }
    }
    (q / s2, occupied)
}

fn response_moments(y: &[f64]) -> Result<(f64, f64)> {
    if y.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: y.len() });
    }
    let s2 = variance(y);
    if !(s2 > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok((mean(y), s2))
}

/// Q statistic and its df (occupied cells minus one). `group_of[i]` is the
/// cell (0..8) of observation `i`.
pub fn q_statistic(y: &[f64], group_of: &[usize]) -> Result<(f64, usize)> {
    if y.len() != group_of.len() {
        return Err(Error::domain(format!("{} responses but {} cell labels", y.len(), group_of.len())));
    }
    if let Some(bad) = group_of.iter().find(|&&g| g >= CELLS) {
        return Err(Error::domain(format!("cell label {bad} out of range 0..8")));
    }
    let (ybar, s2) = response_moments(y)?;
    let mut counts = [0usize; CELLS];
    let mut sums = [0.0; CELLS];
    for (&v, &g) in y.iter().zip(group_of) {
        counts[g] += 1;
        sums[g] += v;
    }
    let (q, occupied) = q_from_cells(&counts, &sums, ybar, s2);
    if occupied < 2 {
        return Err(Error::domain("Q statistic needs at least two occupied cells"));
    }
    Ok((q, occupied - 1))
}

/// Cell of each observation under the triplet `(a, b, c)` of column indices.
pub fn triplet_cells(data: &XorData, t: [usize; 3]) -> Vec<usize> {
    let [a, b, c] = t.map(|v| &data.x[v - 1]);
    (0..data.n()).map(|i| 4 * a[i] as usize + 2 * b[i] as usize + c[i] as usize).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletResult {
    /// Variable numbers `1..=p`, strictly increasing.
    pub indices: [usize; 3],
    pub q: f64,
    pub df: usize,
    pub p_value: f64,
    pub selected: bool,
    /// Posterior significance of the fitted posterior mean, when a fit was made.
    pub significant: Option<bool>,
    pub summary: Option<PosteriorSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub alpha: f64,
    pub level: f64,
    /// Level for posterior significance.
    pub significance: f64,
    /// Gradient fit on all Q values; `None` skips the summaries.
    pub fit: Option<FitConfig>,
    pub parallel: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            alpha: 0.1,
            level: 0.9,
            significance: 0.1,
            fit: Some(FitConfig::score_matching().with_quantiles(0.005, 1.0)),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripletScan {
    /// Ordered by Q descending, then by indices.
    pub results: Vec<TripletResult>,
    pub selected: usize,
    /// Smallest selected Q.
    pub cutoff_q: Option<f64>,
    /// df used for the fit and the summaries (the most common one).
    pub k: usize,
    pub gradients: Option<GradientModel>,
}

fn scan_first(data: &XorData, i: usize, ybar: f64, s2: f64) -> Vec<(usize, usize, usize, f64, usize)> {
    let (n, p) = (data.n(), data.p());
    let mut out = Vec::new();
    let mut base = vec![0usize; n];
    for j in i + 1..p {
        for (r, b) in base.iter_mut().enumerate() {
            *b = 4 * data.x[i][r] as usize + 2 * data.x[j][r] as usize;
        }
        for l in j + 1..p {
            let col = &data.x[l];
            let mut counts = [0usize; CELLS];
            let mut sums = [0.0; CELLS];
            for r in 0..n {
                let g = base[r] + col[r] as usize;
                counts[g] += 1;
                sums[g] += data.y[r];
            }
            let (q, occupied) = q_from_cells(&counts, &sums, ybar, s2);
            out.push((i + 1, j + 1, l + 1, q, occupied.saturating_sub(1)));
        }
    }
    out
}

/// Scores all `C(p,3)` triplets, applies BH and, when a fit is configured,
/// attaches posterior summaries to the selected triplets.
pub fn triplet_scan(data: &XorData, cfg: &ScanConfig) -> Result<TripletScan> {
    if data.x.iter().any(|c| c.len() != data.n()) {
        return Err(Error::domain("predictor columns must match the response length"));
    }
    if data.p() < 3 {
        return Err(Error::domain(format!("need at least 3 variables, got {}", data.p())));
    }
    let (ybar, s2) = response_moments(&data.y)?;
    let raw: Vec<_> = if cfg.parallel {
        (0..data.p()).into_par_iter().flat_map_iter(|i| scan_first(data, i, ybar, s2)).collect()
    } else {
        (0..data.p()).flat_map(|i| scan_first(data, i, ybar, s2)).collect()
    };
    if raw.iter().any(|r| r.4 == 0) {
        return Err(Error::domain("a triplet has a single occupied cell; Q is undefined"));
    }
    let mut tally = [0usize; CELLS];
    raw.iter().for_each(|r| tally[r.4] += 1);
    let k = (1..CELLS).max_by_key(|&d| (tally[d], d)).unwrap_or(CELLS - 1);

    let p_values: Vec<f64> = raw.iter().map(|r| chisq_sf(r.3, r.4 as f64)).collect::<Result<_>>()?;
    let bh = bh_select(&p_values, cfg.alpha)?;
    let mut selected = vec![false; raw.len()];
    bh.rejected.iter().for_each(|&i| selected[i] = true);

    let qs: Vec<f64> = raw.iter().map(|r| r.3).collect();
    let gradients = cfg.fit.as_ref().map(|f| GradientModel::fit(&qs, f)).transpose()?;
    let kdf = Df::new(k as f64)?;
    // Significance is judged for every triplet; full summaries are kept for
    // the selected ones.
    let opts = SummaryOptions { level: cfg.level, null: None };
    let assess = |i: usize| -> Result<(Option<bool>, Option<PosteriorSummary>)> {
        let Some(g) = &gradients else { return Ok((None, None)) };
        let s = summarize(g, raw[i].3, kdf, &opts)?;
        let significant = posterior_significance(s.mean, kdf, cfg.significance)?;
        Ok((Some(significant), selected[i].then_some(s)))
    };
    let assessed: Vec<(Option<bool>, Option<PosteriorSummary>)> = if cfg.parallel {
        (0..raw.len()).into_par_iter().map(assess).collect::<Result<_>>()?
    } else {
        (0..raw.len()).map(assess).collect::<Result<_>>()?
    };

    let mut results = Vec::with_capacity(raw.len());
    for (i, ((a, b, c, q, df), (significant, summary))) in raw.into_iter().zip(assessed).enumerate() {
        results.push(TripletResult {
            indices: [a, b, c],
            q,
            df,
            p_value: p_values[i],
            selected: selected[i],
            significant,
            summary,
        });
    }
    results.sort_by(|x, y| y.q.total_cmp(&x.q).then(x.indices.cmp(&y.indices)));
    let cutoff_q = results.iter().filter(|r| r.selected).map(|r| r.q).min_by(f64::total_cmp);
    Ok(TripletScan { selected: bh.count(), results, cutoff_q, k, gradients })
}

/// Triplets carrying signal: `{3,4,5}` and `{1,2,l}`.
pub fn is_signal(t: [usize; 3]) -> bool {
    t == [3, 4, 5] || (t[0] == 1 && t[1] == 2)
}

pub fn signal_count(p: usize) -> usize {
    if p < 5 {
        0
    } else {
        p - 1
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XorReport {
    pub config: XorConfig,
    pub triplets: usize,
    pub selected: usize,
    pub cutoff_q: Option<f64>,
    pub signal_triplets: usize,
    /// Signal triplets among the top `signal_triplets` ranks.
    pub signal_in_top: usize,
    pub signal_selected: usize,
    pub signal_significant: usize,
    pub penalty: Option<f64>,
    /// Selected triplets in rank order.
    pub selected_results: Vec<TripletResult>,
}

pub fn xor_experiment(cfg: &XorConfig, scan_cfg: &ScanConfig) -> Result<XorReport> {
    let data = gen_xor(cfg)?;
    let scan = triplet_scan(&data, scan_cfg)?;
    let s = signal_count(cfg.p);
    let signal_in_top = scan.results.iter().take(s).filter(|r| is_signal(r.indices)).count();
    let signals = || scan.results.iter().filter(|r| is_signal(r.indices));
    let penalty = match &scan.gradients {
        Some(GradientModel::ScoreMatching(f)) => Some(f.penalty),
        _ => None,
    };
    Ok(XorReport {
        config: *cfg,
        triplets: scan.results.len(),
        selected: scan.selected,
        cutoff_q: scan.cutoff_q,
        signal_triplets: s,
        signal_in_top,
        signal_selected: signals().filter(|r| r.selected).count(),
        signal_significant: signals().filter(|r| r.significant == Some(true)).count(),
        penalty,
        selected_results: scan.results.iter().filter(|r| r.selected).cloned().collect(),
    })
}
