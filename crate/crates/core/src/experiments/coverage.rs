//! Coverage of 90% intervals for the true noncentrality under the gamma
//! prior (fig4) and under a 90% null mixture after BH selection (fig5).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{by_interval, nt_posterior_interval, NtModel};
use crate::error::{Error, Result};
use crate::gradest::{FitConfig, GradientModel};
use crate::model::{draw, HierDraw, MarginalModel, PriorSpec};
use crate::mtest::bh_select;
use crate::rng::stream;
use crate::specfun::{chisq_sf, Df};
use crate::tweedie::{estimate_pi0, summarize, NullAdjustment, SummaryOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Fig4,
    Fig5,
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig4" => Ok(Scenario::Fig4),
            "fig5" => Ok(Scenario::Fig5),
            other => Err(Error::InvalidConfig(format!("unknown scenario {other:?} (expected fig4 or fig5)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub scenario: Scenario,
    /// Repetitions (fig4) or cases (fig5).
    pub reps: usize,
    pub seed: u64,
    pub k: f64,
    pub shape: f64,
    pub scale: f64,
    /// Null fraction (fig5 only).
    pub pi0: f64,
    /// BH level (fig5 only); also the BY FCR level.
    pub alpha: f64,
    pub level: f64,
    /// Include the score-matching variant of the proposed method.
    pub fitted: bool,
    pub nt: bool,
}

impl CoverageConfig {
    pub fn fig4(seed: u64) -> Self {
        CoverageConfig {
            scenario: Scenario::Fig4,
            reps: 1000,
            seed,
            k: 7.0,
            shape: 2.0,
            scale: 10.0,
            pi0: 0.0,
            alpha: 0.1,
            level: 0.9,
            fitted: true,
            nt: true,
        }
    }

    pub fn fig5(seed: u64) -> Self {
        CoverageConfig { scenario: Scenario::Fig5, reps: 5000, pi0: 0.9, ..Self::fig4(seed) }
    }

    pub fn for_scenario(scenario: Scenario, seed: u64) -> Self {
        match scenario {
            Scenario::Fig4 => Self::fig4(seed),
            Scenario::Fig5 => Self::fig5(seed),
        }
    }

    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    fn validate(&self) -> Result<()> {
        Df::positive(self.k)?;
        PriorSpec::gamma(self.shape, self.scale)?;
        if self.scenario == Scenario::Fig5 && !(self.pi0 > 0.0 && self.pi0 < 1.0) {
            return Err(Error::InvalidConfig(format!("fig5 needs 0 < pi0 < 1, got {}", self.pi0)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig("alpha and level must lie in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCoverage {
    pub method: String,
    pub covered: usize,
    pub total: usize,
    /// `covered / total`; absent when nothing was evaluated.
    pub rate: Option<f64>,
    pub mean_width: Option<f64>,
    /// Cases whose interval used an extrapolation rule.
    pub extrapolated: usize,
    /// Why the method was not evaluated, if it was not.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: CoverageConfig,
    /// Cases the coverage is measured on.
    pub evaluated: usize,
    pub selected: Option<usize>,
    pub cutoff_x: Option<f64>,
    pub non_null_selected: Option<usize>,
    pub empirical_fdr: Option<f64>,
    /// `1 - covered non-nulls / selected`, counting every selected null as
    /// a miss.
    pub by_fcr: Option<f64>,
    /// Misses over selected, where a null counts as covered when its
    /// interval contains 0.
    pub by_fcr_null_aware: Option<f64>,
    pub pi0_estimate: Option<f64>,
    pub methods: Vec<MethodCoverage>,
}

struct Interval {
    lo: f64,
    hi: f64,
    extrapolated: bool,
}

fn tally(method: &str, truth: &[f64], intervals: Result<Vec<Interval>>) -> Result<MethodCoverage> {
    let iv = intervals?;
    let covered = iv.iter().zip(truth).filter(|(i, &l)| i.lo <= l && l <= i.hi).count();
    let total = iv.len();
    let (rate, mean_width) = if total == 0 {
        (None, None)
    } else {
        (Some(covered as f64 / total as f64), Some(iv.iter().map(|i| i.hi - i.lo).sum::<f64>() / total as f64))
    };
    Ok(MethodCoverage {
        method: method.into(),
        covered,
        total,
        rate,
        mean_width,
        extrapolated: iv.iter().filter(|i| i.extrapolated).count(),
        skipped: None,
    })
}

fn skipped(method: &str, reason: String) -> MethodCoverage {
    MethodCoverage {
        method: method.into(),
        covered: 0,
        total: 0,
        rate: None,
        mean_width: None,
        extrapolated: 0,
        skipped: Some(reason),
    }
}

fn proposed(g: &GradientModel, xs: &[f64], k: Df, opts: &SummaryOptions) -> Result<Vec<Interval>> {
    xs.par_iter()
        .map(|&x| {
            let s = summarize(g, x, k, opts)?;
            Ok(Interval { lo: s.interval_lo, hi: s.interval_hi, extrapolated: s.flags.extrapolated_gradient })
        })
        .collect()
}

fn nt(model: &NtModel, xs: &[f64], level: f64) -> Result<Vec<Interval>> {
    xs.par_iter()
        .map(|&x| {
            let e = nt_posterior_interval(model, x, level)?;
            Ok(Interval { lo: e.lo, hi: e.hi, extrapolated: e.extrapolated })
        })
        .collect()
}

/// Case `i` is drawn from its own stream, so the draws do not depend on
/// scheduling.
fn draws(prior_of: impl Fn(usize) -> PriorSpec + Sync, k: f64, n: usize, seed: u64) -> Vec<HierDraw> {
    (0..n).into_par_iter().map(|i| draw(&prior_of(i), k, &mut stream(seed, i as u64))).collect()
}

pub fn coverage_experiment(cfg: &CoverageConfig) -> Result<CoverageReport> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::Fig4 => fig4(cfg),
        Scenario::Fig5 => fig5(cfg),
    }
}

fn fig4(cfg: &CoverageConfig) -> Result<CoverageReport> {
    let k = Df::positive(cfg.k)?;
    let prior = PriorSpec::gamma(cfg.shape, cfg.scale)?;
    let sample = draws(|_| prior.clone(), cfg.k, cfg.reps, cfg.seed);
    let xs: Vec<f64> = sample.iter().map(|d| d.x).collect();
    let lambdas: Vec<f64> = sample.iter().map(|d| d.lambda).collect();
    let model = MarginalModel::new(prior, cfg.k)?;
    let opts = SummaryOptions { level: cfg.level, null: None };

    let exact = GradientModel::exact(model.clone());
    let mut methods = vec![tally("proposed-exact", &lambdas, proposed(&exact, &xs, k, &opts))?];
    if cfg.fitted {
        methods.push(match GradientModel::fit(&xs, &FitConfig::score_matching().with_seed(cfg.seed)) {
            Ok(g) => tally("proposed-fitted", &lambdas, proposed(&g, &xs, k, &opts))?,
            Err(e) => skipped("proposed-fitted", e.to_string()),
        });
    }
    if cfg.nt {
        let m = NtModel::exact(model, None)?;
        methods.push(tally("nt-exact", &lambdas, nt(&m, &xs, cfg.level))?);
    }
    Ok(CoverageReport {
        config: cfg.clone(),
        evaluated: xs.len(),
        selected: None,
        cutoff_x: None,
        non_null_selected: None,
        empirical_fdr: None,
        by_fcr: None,
        by_fcr_null_aware: None,
        pi0_estimate: None,
        methods,
    })
}

fn fig5(cfg: &CoverageConfig) -> Result<CoverageReport> {
    let k = Df::positive(cfg.k)?;
    let base = PriorSpec::gamma(cfg.shape, cfg.scale)?;
    let n_null = (cfg.pi0 * cfg.reps as f64).round() as usize;
    let sample = draws(|i| if i < n_null { PriorSpec::null() } else { base.clone() }, cfg.k, cfg.reps, cfg.seed);
    let xs: Vec<f64> = sample.iter().map(|d| d.x).collect();
    let p: Vec<f64> = xs.iter().map(|&x| chisq_sf(x, cfg.k)).collect::<Result<_>>()?;
    let bh = bh_select(&p, cfg.alpha)?;
    let r = bh.count();
    let is_null = |i: usize| i < n_null;

    // Coverage is measured on the selected non-null cases.
    let eval: Vec<usize> = bh.rejected.iter().copied().filter(|&i| !is_null(i)).collect();
    let ex: Vec<f64> = eval.iter().map(|&i| xs[i]).collect();
    let el: Vec<f64> = eval.iter().map(|&i| sample[i].lambda).collect();
    let false_rej = r - eval.len();

    let mixture = MarginalModel::new(PriorSpec::point_mass_mixture(cfg.pi0, base)?, cfg.k)?;
    let exact = GradientModel::exact(mixture.clone());
    let opts = SummaryOptions { level: cfg.level, null: Some(NullAdjustment { pi0: cfg.pi0, density: &exact }) };
    let mut methods = vec![tally("proposed-exact", &el, proposed(&exact, &ex, k, &opts))?];

    let mut pi0_estimate = None;
    if cfg.fitted {
        let pi0_hat = estimate_pi0(&p);
        pi0_estimate = Some(pi0_hat);
        let fitted = GradientModel::fit(&xs, &FitConfig::score_matching().with_seed(cfg.seed))
            .and_then(|g| Ok((g, GradientModel::fit(&xs, &FitConfig::lindsey())?)));
        methods.push(match fitted {
            Ok((g, density)) => {
                let opts = SummaryOptions { level: cfg.level, null: Some(NullAdjustment { pi0: pi0_hat, density: &density }) };
                tally("proposed-fitted", &el, proposed(&g, &ex, k, &opts))?
            }
            Err(e) => skipped("proposed-fitted", e.to_string()),
        });
    }
    if cfg.nt {
        let m = NtModel::exact(mixture, Some(cfg.pi0))?;
        methods.push(tally("nt-exact", &el, nt(&m, &ex, cfg.level))?);
    }

    // BY intervals for every selected case, nulls included, for the FCR.
    let by: Vec<(f64, f64)> = bh
        .rejected
        .par_iter()
        .map(|&i| by_interval(xs[i], k, cfg.alpha, r, cfg.reps))
        .collect::<Result<_>>()?;
    let by_nonnull: Vec<Interval> = bh
        .rejected
        .iter()
        .zip(&by)
        .filter(|(i, _)| !is_null(**i))
        .map(|(_, &(lo, hi))| Interval { lo, hi, extrapolated: false })
        .collect();
    let by_cov = tally("by", &el, Ok(by_nonnull))?;
    let covered_null = bh.rejected.iter().zip(&by).filter(|(i, iv)| is_null(**i) && iv.0 <= 0.0).count();
    let (by_fcr, by_fcr_null_aware) = if r == 0 {
        (None, None)
    } else {
        let rf = r as f64;
        (Some(1.0 - by_cov.covered as f64 / rf), Some(1.0 - (by_cov.covered + covered_null) as f64 / rf))
    };
    methods.push(by_cov);

    Ok(CoverageReport {
        config: cfg.clone(),
        evaluated: eval.len(),
        selected: Some(r),
        cutoff_x: bh.rejected.iter().map(|&i| xs[i]).min_by(f64::total_cmp),
        non_null_selected: Some(eval.len()),
        empirical_fdr: Some(if r == 0 { 0.0 } else { false_rej as f64 / r as f64 }),
        by_fcr,
        by_fcr_null_aware,
        pi0_estimate,
        methods,
    })
}

impl CoverageReport {
    pub fn method(&self, name: &str) -> Option<&MethodCoverage> {
        self.methods.iter().find(|m| m.method == name)
    }
}
