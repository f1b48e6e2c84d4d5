//! `bh`, `simulate` and `curves`.

use std::path::{Path, PathBuf};

use chisq_eb::experiments::{
    coverage_experiment, curve_emit, linear_grid, xor_experiment, CoverageConfig, CoverageReport, ScanConfig, Scenario,
    XorConfig, XorReport,
};
use chisq_eb::mtest::{bh_battery, empirical_fdr, p_values};
use chisq_eb::{Df, GradientModel, MarginalModel};
use serde::Serialize;

use crate::args::{BhArgs, CurvesArgs, Experiment, SimulateArgs};
use crate::fail::{Failure, Outcome};
use crate::ingest::ingest;
use crate::output::{csv_writer, opt, resolve, sidecar, write_json, Tool, TOOL};
use crate::prior::parse_prior;

pub const BH_HEADER: [&str; 5] = ["id", "x", "k", "p_value", "rejected"];
pub const COVERAGE_HEADER: [&str; 7] = ["method", "covered", "total", "rate", "mean_width", "extrapolated", "skipped"];
pub const XOR_HEADER: [&str; 12] = ["i1", "i2", "i3", "q", "df", "p_value", "signal", "significant", "mean", "var", "lo", "hi"];
pub const CURVES_HEADER: [&str; 6] = ["x", "one_layer", "two_layer", "u", "v", "w"];

#[derive(Serialize)]
struct BhMeta {
    tool: Tool,
    command: &'static str,
    input: String,
    alpha: f64,
    cases: usize,
    rejected: usize,
    cutoff_x: Option<f64>,
    empirical_fdr: Option<f64>,
    true_discoveries: Option<usize>,
}

pub fn bh(a: &BhArgs, out_dir: &Path) -> Outcome<PathBuf> {
    let battery = ingest(&a.input, a.k)?;
    let res = bh_battery(&battery, a.alpha)?;
    let p = p_values(&battery);
    let mut rejected = vec![false; battery.len()];
    for &i in &res.rejected {
        rejected[i] = true;
    }
    let path = resolve(&a.output, out_dir, "bh.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(BH_HEADER)?;
    for ((r, p), rej) in battery.records().iter().zip(&p).zip(&rejected) {
        w.write_record([r.id.clone(), r.x.to_string(), r.k.to_string(), p.to_string(), rej.to_string()])?;
    }
    w.flush()?;
    let truth = if battery.has_truth() { Some(empirical_fdr(&res, &battery)?) } else { None };
    let meta = BhMeta {
        tool: TOOL,
        command: "bh",
        input: a.input.display().to_string(),
        alpha: a.alpha,
        cases: battery.len(),
        rejected: res.count,
        cutoff_x: res.cutoff_x,
        empirical_fdr: truth.map(|t| t.0),
        true_discoveries: truth.map(|t| t.1),
    };
    write_json(&sidecar(&path, "meta.json"), &meta)?;
    let cutoff = res.cutoff_x.map_or("none".to_string(), |c| c.to_string());
    println!("BH at alpha {}: {} of {} rejected, cutoff x = {cutoff} -> {}", a.alpha, res.count, battery.len(), path.display());
    Ok(path)
}

#[derive(Serialize)]
struct Report<'a, T> {
    tool: Tool,
    command: &'static str,
    experiment: &'static str,
    report: &'a T,
}

fn coverage(a: &SimulateArgs, scenario: Scenario, name: &'static str, out_dir: &Path) -> Outcome<PathBuf> {
    let mut cfg = CoverageConfig::for_scenario(scenario, a.seed);
    if let Some(r) = a.reps {
        cfg = cfg.with_reps(r);
    }
    cfg.fitted = !a.no_fitted;
    cfg.nt = !a.no_nt;
    let rep: CoverageReport = coverage_experiment(&cfg)?;
    let path = resolve(&a.output, out_dir, &format!("{name}_seed{}.json", a.seed));
    write_json(&path, &Report { tool: TOOL, command: "simulate", experiment: name, report: &rep })?;
    let table = sidecar(&path, "csv");
    let mut w = csv_writer(&table)?;
    w.write_record(COVERAGE_HEADER)?;
    for m in &rep.methods {
        w.write_record([
            m.method.clone(),
            m.covered.to_string(),
            m.total.to_string(),
            opt(m.rate),
            opt(m.mean_width),
            m.extrapolated.to_string(),
            m.skipped.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;

    println!("{name} seed {}: {} cases evaluated", a.seed, rep.evaluated);
    if let (Some(sel), Some(cut)) = (rep.selected, rep.cutoff_x) {
        println!("  BH selected {sel}, cutoff x = {cut:.4}, empirical FDR = {}", opt(rep.empirical_fdr));
    }
    for m in &rep.methods {
        match (m.rate, &m.skipped) {
            (Some(r), _) => println!("  {:<16} coverage {:.2}% ({}/{})", m.method, 100.0 * r, m.covered, m.total),
            (None, Some(why)) => println!("  {:<16} skipped: {why}", m.method),
            (None, None) => println!("  {:<16} no cases", m.method),
        }
    }
    if let Some(f) = rep.by_fcr {
        println!("  BY FCR {f:.4}");
    }
    println!("  -> {}", path.display());
    Ok(path)
}

fn xor(a: &SimulateArgs, out_dir: &Path) -> Outcome<PathBuf> {
    let cfg = XorConfig { n: a.n, p: a.p, seed: a.seed, ..Default::default() };
    let scan = ScanConfig { fit: if a.no_fitted { None } else { ScanConfig::default().fit }, ..Default::default() };
    let rep: XorReport = xor_experiment(&cfg, &scan)?;
    let path = resolve(&a.output, out_dir, &format!("xor_seed{}.json", a.seed));
    write_json(&path, &Report { tool: TOOL, command: "simulate", experiment: "xor", report: &rep })?;
    let table = sidecar(&path, "csv");
    let mut w = csv_writer(&table)?;
    w.write_record(XOR_HEADER)?;
    for t in &rep.selected_results {
        let [i1, i2, i3] = t.indices;
        let s = t.summary.as_ref();
        w.write_record([
            i1.to_string(),
            i2.to_string(),
            i3.to_string(),
            t.q.to_string(),
            t.df.to_string(),
            t.p_value.to_string(),
            chisq_eb::experiments::is_signal(t.indices).to_string(),
            t.significant.map(|b| b.to_string()).unwrap_or_default(),
            opt(s.map(|s| s.mean)),
            opt(s.map(|s| s.variance)),
            opt(s.map(|s| s.interval_lo)),
            opt(s.map(|s| s.interval_hi)),
        ])?;
    }
    w.flush()?;
    println!(
        "xor seed {}: {} triplets, BH selected {}, signal in top {}: {}/{}, signal significant {}",
        a.seed, rep.triplets, rep.selected, rep.signal_triplets, rep.signal_in_top, rep.signal_triplets, rep.signal_significant
    );
    println!("  -> {}", path.display());
    Ok(path)
}

pub fn simulate(a: &SimulateArgs, out_dir: &Path) -> Outcome<PathBuf> {
    match a.experiment {
        Experiment::Fig4 => coverage(a, Scenario::Fig4, "fig4", out_dir),
        Experiment::Fig5 => coverage(a, Scenario::Fig5, "fig5", out_dir),
        Experiment::Xor => xor(a, out_dir),
    }
}

pub fn curves(a: &CurvesArgs, out_dir: &Path) -> Outcome<PathBuf> {
    if !(a.x_min > 0.0 && a.x_max > a.x_min) || a.points < 2 {
        return Err(Failure::config("curves need 0 < x-min < x-max and at least 2 points"));
    }
    let prior = parse_prior(&a.prior)?;
    let g = GradientModel::exact(MarginalModel::new(prior, a.k)?);
    let rows = curve_emit(&g, Df::new(a.k)?, &linear_grid(a.x_min, a.x_max, a.points))?;
    let path = resolve(&a.output, out_dir, "curves.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(CURVES_HEADER)?;
    for r in &rows {
        w.write_record([r.x, r.one_layer, r.two_layer, r.u, r.v, r.w].map(|v| v.to_string()))?;
    }
    w.flush()?;
    println!("{} curve points -> {}", rows.len(), path.display());
    Ok(path)
}
