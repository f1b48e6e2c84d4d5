//! Multiple testing: p-values, Benjamini–Hochberg selection, empirical FDR,
//! and the posterior significance and dominance labels.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{chisq_sf, norm_quantile, Df};

/// Simulation truth attached to a record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub is_null: bool,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub x: f64,
    pub k: f64,
    pub truth: Option<Truth>,
}

/// A validated collection of chi-squared statistics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Battery {
    records: Vec<Record>,
}

impl Battery {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::domain(format!("record {}: duplicate id {:?}", i + 1, r.id)));
            }
            if !(r.x > 0.0) || !r.x.is_finite() {
                return Err(Error::domain(format!("record {} ({}): statistic must be positive, got {}", i + 1, r.id, r.x)));
            }
            Df::positive(r.k).map_err(|e| Error::domain(format!("record {} ({}): {e}", i + 1, r.id)))?;
        }
        Ok(Battery { records })
    }

    /// Battery with ids `0..n` and a common df.
    pub fn from_statistics(xs: &[f64], k: f64) -> Result<Self> {
        Battery::new(xs.iter().enumerate().map(|(i, &x)| Record { id: i.to_string(), x, k, truth: None }).collect())
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_truth(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.truth.is_some())
    }
}

/// `p_i = P(χ²_{k_i} ≥ x_i)`.
pub fn p_values(b: &Battery) -> Vec<f64> {
    b.records
        .par_iter()
        .map(|r| chisq_sf(r.x, r.k).expect("battery records are validated"))
        .collect()
}

/// Outcome of the step-up rule on bare p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhSelection {
    pub alpha: f64,
    /// Indices of rejected hypotheses, ascending.
    pub rejected: Vec<usize>,
    /// Largest rejected p-value, if any.
    pub threshold: Option<f64>,
}

impl BhSelection {
    pub fn count(&self) -> usize {
        self.rejected.len()
    }
}

/// Benjamini–Hochberg step-up at level `alpha`: with `i*` the largest rank
/// satisfying `p_(i) ≤ iα/m`, reject every `p ≤ p_(i*)` (ties included).
pub fn bh_select(p: &[f64], alpha: f64) -> Result<BhSelection> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("FDR level must lie in (0,1), got {alpha}")));
    }
    if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::domain(format!("p-values must lie in [0,1], got {bad}")));
    }
    let m = p.len() as f64;
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let threshold = order
        .iter()
        .enumerate()
        .rev()
        .find(|(rank, &i)| p[i] <= (*rank + 1) as f64 * alpha / m)
        .map(|(_, &i)| p[i]);
    let rejected = match threshold {
        Some(t) => (0..p.len()).filter(|&i| p[i] <= t).collect(),
        None => Vec::new(),
    };
    Ok(BhSelection { alpha, rejected, threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BhResult {
    pub alpha: f64,
    pub rejected_ids: Vec<String>,
    /// Indices into the battery of the rejected records.
    pub rejected: Vec<usize>,
    /// Smallest rejected statistic.
    pub cutoff_x: Option<f64>,
    pub count: usize,
}

pub fn bh_battery(b: &Battery, alpha: f64) -> Result<BhResult> {
    let sel = bh_select(&p_values(b), alpha)?;
    let cutoff_x = sel.rejected.iter().map(|&i| b.records[i].x).min_by(f64::total_cmp);
    Ok(BhResult {
        alpha,
        rejected_ids: sel.rejected.iter().map(|&i| b.records[i].id.clone()).collect(),
        count: sel.rejected.len(),
        rejected: sel.rejected,
        cutoff_x,
    })
}

/// False rejections over `max(1, rejections)`, and the number of true
/// non-null rejections.
pub fn empirical_fdr(result: &BhResult, b: &Battery) -> Result<(f64, usize)> {
    let mut false_rej = 0usize;
    for &i in &result.rejected {
        let t = b.records.get(i).and_then(|r| r.truth).ok_or(Error::MissingTruth)?;
        if t.is_null {
            false_rej += 1;
        }
    }
    if result.rejected.is_empty() && !b.has_truth() {
        return Err(Error::MissingTruth);
    }
    let n = result.rejected.len();
    Ok((false_rej as f64 / n.max(1) as f64, n - false_rej))
}

/// `z_{1-α/2}`.
pub fn two_sided_z(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("significance level must lie in (0,1), got {alpha}")));
    }
    norm_quantile(1.0 - alpha / 2.0)
}

/// Posterior significance per degree of freedom: `mean/k ≥ z²_{1-α/2}`.
pub fn posterior_significance(mean: f64, k: Df, alpha: f64) -> Result<bool> {
    let z = two_sided_z(alpha)?;
    Ok(mean > 0.0 && mean / k.value() >= z * z)
}

/// `mean_a ≥ mean_b + z √var_b`.
pub fn dominates(mean_a: f64, mean_b: f64, var_b: f64, alpha: f64) -> Result<bool> {
    if !(var_b >= 0.0) {
        return Err(Error::domain(format!("variance must be >= 0, got {var_b}")));
    }
    Ok(mean_a >= mean_b + two_sided_z(alpha)? * var_b.sqrt())
}

/// `mean_a - z √var_a ≥ mean_b + z √var_b`.
pub fn interval_dominates(mean_a: f64, var_a: f64, mean_b: f64, var_b: f64, alpha: f64) -> Result<bool> {
    if !(var_a >= 0.0 && var_b >= 0.0) {
        return Err(Error::domain("variances must be >= 0"));
    }
    let z = two_sided_z(alpha)?;
    Ok(mean_a - z * var_a.sqrt() >= mean_b + z * var_b.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DominanceCounts {
    /// Reference cases whose mean this case dominates.
    pub dominates: usize,
    /// Reference cases whose interval this case's interval lies above.
    pub interval_dominates: usize,
}

/// Pairwise dominance of every case over a reference set (self excluded).
/// `cases` holds `(mean, variance)` pairs.
pub fn dominance_counts(cases: &[(f64, f64)], reference: &[usize], alpha: f64) -> Result<Vec<DominanceCounts>> {
    let z = two_sided_z(alpha)?;
    if cases.iter().any(|c| !(c.1 >= 0.0)) {
        return Err(Error::domain("variances must be >= 0"));
    }
    if let Some(&bad) = reference.iter().find(|&&r| r >= cases.len()) {
        return Err(Error::domain(format!("reference index {bad} out of range")));
    }
    Ok(cases
        .par_iter()
        .enumerate()
        .map(|(i, &(ma, va))| {
            let mut c = DominanceCounts::default();
            for &j in reference.iter().filter(|&&j| j != i) {
                let (mb, vb) = cases[j];
                if ma >= mb + z * vb.sqrt() {
                    c.dominates += 1;
                }
                if ma - z * va.sqrt() >= mb + z * vb.sqrt() {
                    c.interval_dominates += 1;
                }
            }
            c
        })
        .collect())
}
