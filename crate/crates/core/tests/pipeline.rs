//! End-to-end runs: simulate a battery, fit, summarize, select.

use chisq_eb::model::{oracle_posterior, sample};
use chisq_eb::mtest::{bh_battery, dominance_counts, empirical_fdr, posterior_significance, Battery, Record, Truth};
use chisq_eb::tweedie::{summarize_all, NullAdjustment, SummaryOptions};
use chisq_eb::{Df, FitConfig, GradientModel, MarginalModel, PriorSpec};

fn mixture_battery(n: usize, seed: u64) -> (MarginalModel, Battery) {
    let prior = PriorSpec::point_mass_mixture(0.8, PriorSpec::gamma(2.0, 10.0).unwrap()).unwrap();
    let m = MarginalModel::new(prior, 7.0).unwrap();
    let records = sample(&m, n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, d)| Record {
            id: format!("case{i}"),
            x: d.x,
            k: 7.0,
            truth: Some(Truth { is_null: d.lambda == 0.0, lambda: d.lambda }),
        })
        .collect();
    (m, Battery::new(records).unwrap())
}

#[test]
fn fitted_pipeline_tracks_exact_one() {
    let (m, battery) = mixture_battery(4000, 11);
    let xs: Vec<f64> = battery.records().iter().map(|r| r.x).collect();
    let k = Df::new(7.0).unwrap();
    let fitted = GradientModel::fit(&xs, &FitConfig::score_matching().with_seed(11)).unwrap();
    let exact = GradientModel::exact(m.clone());

    let opts = SummaryOptions::default();
    let a: Vec<_> = summarize_all(&fitted, &xs, k, &opts).into_iter().map(Result::unwrap).collect();
    let b: Vec<_> = summarize_all(&exact, &xs, k, &opts).into_iter().map(Result::unwrap).collect();
    assert!(a.iter().zip(&xs).all(|(s, &x)| s.x == x));

    // Inside the bulk the fitted means stay close to the exact ones.
    let mut errs: Vec<f64> = a
        .iter()
        .zip(&b)
        .filter(|(_, e)| (10.0..40.0).contains(&e.x))
        .map(|(f, e)| (f.mean - e.mean).abs() / e.mean.max(1.0))
        .collect();
    errs.sort_by(f64::total_cmp);
    assert!(errs[errs.len() / 2] < 0.15, "median relative error {}", errs[errs.len() / 2]);

    // Exact summaries reproduce the oracle.
    for s in b.iter().step_by(97) {
        let o = oracle_posterior(&m, s.x).unwrap();
        assert!((s.mean - o.mean).abs() <= 1e-6 * o.mean.max(1e-3), "x={} {} vs {}", s.x, s.mean, o.mean);
    }
}

#[test]
fn selection_then_null_adjusted_summaries() {
    let (m, battery) = mixture_battery(3000, 5);
    let k = Df::new(7.0).unwrap();
    let bh = bh_battery(&battery, 0.1).unwrap();
    assert!(bh.count > 0);
    let (fdp, _) = empirical_fdr(&bh, &battery).unwrap();
    assert!(fdp < 0.3, "false discovery proportion {fdp}");

    let base = MarginalModel::new(PriorSpec::gamma(2.0, 10.0).unwrap(), 7.0).unwrap();
    let alt = GradientModel::exact(base);
    let mix = GradientModel::exact(m);
    let opts = SummaryOptions { level: 0.9, null: Some(NullAdjustment { pi0: 0.8, density: &mix }) };
    let xs: Vec<f64> = bh.rejected.iter().map(|&i| battery.records()[i].x).collect();
    let adjusted: Vec<_> = summarize_all(&mix, &xs, k, &opts).into_iter().map(Result::unwrap).collect();
    let direct: Vec<_> = summarize_all(&alt, &xs, k, &SummaryOptions::default()).into_iter().map(Result::unwrap).collect();

    // Conditioning on non-null under the mixture recovers the alternative-only posterior.
    for (a, d) in adjusted.iter().zip(&direct) {
        assert!(a.fdr.is_some());
        assert!((a.mean - d.mean).abs() < 1e-6 * d.mean.max(1.0), "x={} {} vs {}", a.x, a.mean, d.mean);
        assert!((a.variance - d.variance).abs() < 1e-5 * d.variance.max(1.0));
    }

    let significant = adjusted.iter().filter(|s| posterior_significance(s.mean, k, 0.1).unwrap()).count();
    assert!(significant > 0 && significant <= adjusted.len());

    let cases: Vec<(f64, f64)> = adjusted.iter().map(|s| (s.mean, s.variance)).collect();
    let reference: Vec<usize> = (0..cases.len()).collect();
    let counts = dominance_counts(&cases, &reference, 0.1).unwrap();
    assert!(counts.iter().all(|c| c.interval_dominates <= c.dominates));
}
