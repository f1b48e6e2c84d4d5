//! `estimate` and `fit-gradients`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chisq_eb::mtest::{p_values, posterior_significance, Battery};
use chisq_eb::tweedie::{estimate_pi0, summarize_all, NullAdjustment, PosteriorSummary, SummaryOptions};
use chisq_eb::{Df, FitConfig, GradientModel, MarginalModel, PriorSpec};
use serde::Serialize;

use crate::args::{EstimateArgs, FitArgs, Method, ModelArgs};
use crate::fail::{Failure, Outcome};
use crate::ingest::ingest;
use crate::output::{csv_writer, opt, resolve, sidecar, write_json, Tool, TOOL};
use crate::prior::parse_prior;

pub const ESTIMATE_HEADER: [&str; 10] = ["id", "x", "k", "mean", "var", "lo", "hi", "fdr", "significant", "flags"];

/// Record indices sharing one df, in order of first appearance.
fn groups(b: &Battery) -> Vec<(f64, Vec<usize>)> {
    let mut out: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, r) in b.records().iter().enumerate() {
        match out.iter_mut().find(|(k, _)| *k == r.k) {
            Some((_, rows)) => rows.push(i),
            None => out.push((r.k, vec![i])),
        }
    }
    out
}

fn prior_for(m: &ModelArgs) -> Outcome<Option<PriorSpec>> {
    match (m.method, &m.prior) {
        (Method::Exact, Some(p)) => Ok(Some(parse_prior(p)?)),
        (Method::Exact, None) => Err(Failure::config("--method exact requires --prior")),
        (_, Some(_)) => Err(Failure::config("--prior only applies to --method exact")),
        (_, None) => Ok(None),
    }
}

fn fit_config(m: &ModelArgs) -> Option<FitConfig> {
    let cfg = match m.method {
        Method::ScoreMatching => FitConfig::score_matching(),
        Method::Lindsey => FitConfig::lindsey(),
        Method::Exact => return None,
    };
    let mut cfg = cfg.with_seed(m.seed);
    if let Some(b) = m.basis_size {
        cfg.basis_size = b;
    }
    Some(cfg)
}

fn build_model(m: &ModelArgs, prior: Option<&PriorSpec>, xs: &[f64], k: f64) -> Outcome<GradientModel> {
    match (fit_config(m), prior) {
        (Some(cfg), _) => {
            cfg.validate()?;
            Ok(GradientModel::fit(xs, &cfg)?)
        }
        (None, Some(p)) => Ok(GradientModel::exact(MarginalModel::new(p.clone(), k)?)),
        (None, None) => Err(Failure::config("--method exact requires --prior")),
    }
}

fn load_gradients(path: &Path) -> Outcome<GradientModel> {
    let s = std::fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&s).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

enum Pi0 {
    Fixed(f64),
    Auto,
}

fn parse_pi0(s: &Option<String>) -> Outcome<Option<Pi0>> {
    let Some(s) = s else { return Ok(None) };
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Some(Pi0::Auto));
    }
    match s.parse::<f64>() {
        Ok(v) if (0.0..1.0).contains(&v) => Ok(Some(Pi0::Fixed(v))),
        _ => Err(Failure::config(format!("--pi0 must be `auto` or a number in [0,1), got {s:?}"))),
    }
}

fn check_unit(name: &str, v: f64) -> Outcome<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Failure::config(format!("--{name} must lie in (0,1), got {v}")))
    }
}

#[derive(Serialize)]
struct GroupMeta {
    k: f64,
    cases: usize,
    method: &'static str,
    /// Range where the gradients are fitted rather than extrapolated.
    interval: (f64, f64),
    pi0: Option<f64>,
    fdr_source: Option<String>,
}

#[derive(Serialize)]
struct EstimateMeta {
    tool: Tool,
    command: &'static str,
    input: String,
    output: String,
    method: String,
    prior: Option<PriorSpec>,
    gradients: Option<String>,
    seed: u64,
    level: f64,
    significance: f64,
    pi0: Option<String>,
    cases: usize,
    significant: usize,
    groups: Vec<GroupMeta>,
    /// Cases raising each flag.
    flags: BTreeMap<&'static str, usize>,
}

pub fn estimate(a: &EstimateArgs, out_dir: &Path) -> Outcome<PathBuf> {
    check_unit("level", a.level)?;
    check_unit("significance", a.significance)?;
    let pi0_rule = parse_pi0(&a.pi0)?;
    let loaded = a.gradients.as_deref().map(load_gradients).transpose()?;
    let prior = if loaded.is_some() { None } else { prior_for(&a.model)? };
    let battery = ingest(&a.input, a.model.k)?;
    let records = battery.records();

    let mut summaries: Vec<Option<PosteriorSummary>> = vec![None; records.len()];
    let mut group_meta = Vec::new();
    for (k, rows) in groups(&battery) {
        let df = Df::new(k)?;
        let xs: Vec<f64> = rows.iter().map(|&i| records[i].x).collect();
        let g = match &loaded {
            Some(g) => g.clone(),
            None => build_model(&a.model, prior.as_ref(), &xs, k).map_err(|f| f.context(format!("k = {k}")))?,
        };
        let pi0 = match pi0_rule {
            None => None,
            Some(Pi0::Fixed(v)) => Some(v),
            Some(Pi0::Auto) => {
                let sub = Battery::from_statistics(&xs, k)?;
                Some(estimate_pi0(&p_values(&sub)).min(1.0 - 1e-9))
            }
        };
        // The fdr needs a normalized g_k; splines only carry its derivatives.
        let density = match pi0 {
            Some(_) if g.density(xs[0]).is_none() => {
                Some(GradientModel::fit(&xs, &FitConfig::lindsey().with_seed(a.model.seed))?)
            }
            _ => None,
        };
        let null = pi0.map(|pi0| NullAdjustment { pi0, density: density.as_ref().unwrap_or(&g) });
        let opts = SummaryOptions { level: a.level, null };
        let out = summarize_all(&g, &xs, df, &opts);
        for (&i, s) in rows.iter().zip(out) {
            let s = s.map_err(|e| Failure::from(e).context(format!("case {:?}", records[i].id)))?;
            summaries[i] = Some(s);
        }
        group_meta.push(GroupMeta {
            k,
            cases: rows.len(),
            method: g.method(),
            interval: g.interval(),
            pi0,
            fdr_source: null.map(|n| n.density.method().to_string()),
        });
    }

    let path = resolve(&a.output, out_dir, "estimates.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(ESTIMATE_HEADER)?;
    let mut flags: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut significant = 0;
    for (r, s) in records.iter().zip(&summaries) {
        let s = s.as_ref().expect("every record belongs to a group");
        let sig = posterior_significance(s.mean, Df::new(r.k)?, a.significance)?;
        significant += usize::from(sig);
        let labels = s.flags.labels();
        for l in &labels {
            *flags.entry(l).or_default() += 1;
        }
        w.write_record([
            r.id.clone(),
            r.x.to_string(),
            r.k.to_string(),
            s.mean.to_string(),
            s.variance.to_string(),
            s.interval_lo.to_string(),
            s.interval_hi.to_string(),
            opt(s.fdr),
            sig.to_string(),
            labels.join(";"),
        ])?;
    }
    w.flush()?;

    let meta = EstimateMeta {
        tool: TOOL,
        command: "estimate",
        input: a.input.display().to_string(),
        output: path.display().to_string(),
        method: loaded.as_ref().map_or(a.model.method_name(), |g| g.method().to_string()),
        prior,
        gradients: a.gradients.as_ref().map(|p| p.display().to_string()),
        seed: a.model.seed,
        level: a.level,
        significance: a.significance,
        pi0: a.pi0.clone(),
        cases: records.len(),
        significant,
        groups: group_meta,
        flags,
    };
    write_json(&sidecar(&path, "meta.json"), &meta)?;
    println!("{} estimates ({significant} significant) -> {}", records.len(), path.display());
    Ok(path)
}

pub fn fit_gradients(a: &FitArgs, out_dir: &Path) -> Outcome<PathBuf> {
    let prior = prior_for(&a.model)?;
    let battery = ingest(&a.input, a.model.k)?;
    let gs = groups(&battery);
    if gs.len() != 1 {
        let ks: Vec<String> = gs.iter().map(|(k, _)| k.to_string()).collect();
        return Err(Failure::data(format!("fit-gradients needs a single k, found {}", ks.join(", "))));
    }
    let (k, rows) = &gs[0];
    let xs: Vec<f64> = rows.iter().map(|&i| battery.records()[i].x).collect();
    let g = build_model(&a.model, prior.as_ref(), &xs, *k)?;
    let path = resolve(&a.output, out_dir, "gradients.json");
    write_json(&path, &g)?;
    println!("{} gradients for {} statistics (k = {k}) -> {}", g.method(), xs.len(), path.display());
    Ok(path)
}

impl ModelArgs {
    fn method_name(&self) -> String {
        match self.method {
            Method::ScoreMatching => "score-matching",
            Method::Lindsey => "lindsey",
            Method::Exact => "exact",
        }
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chisq_eb::mtest::Record;

    #[test]
    fn groups_follow_first_appearance() {
        let rec = |id: &str, k: f64| Record { id: id.into(), x: 1.0, k, truth: None };
        let b = Battery::new(vec![rec("a", 7.0), rec("b", 3.0), rec("c", 7.0)]).unwrap();
        assert_eq!(groups(&b), vec![(7.0, vec![0, 2]), (3.0, vec![1])]);
    }

    #[test]
    fn pi0_parsing() {
        assert!(matches!(parse_pi0(&Some("auto".into())).unwrap(), Some(Pi0::Auto)));
        assert!(matches!(parse_pi0(&Some("0.9".into())).unwrap(), Some(Pi0::Fixed(v)) if v == 0.9));
        assert!(parse_pi0(&Some("1".into())).is_err());
        assert!(parse_pi0(&None).unwrap().is_none());
    }

    #[test]
    fn exact_needs_a_prior() {
        let m = ModelArgs { k: None, method: Method::Exact, prior: None, seed: 0, basis_size: None };
        assert_eq!(prior_for(&m).unwrap_err().code, crate::fail::EXIT_CONFIG);
        let m = ModelArgs { method: Method::Lindsey, prior: Some("null".into()), ..m };
        assert!(prior_for(&m).is_err());
    }
}
