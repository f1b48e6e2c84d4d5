use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chisq_eb::model::sample;
use chisq_eb::{MarginalModel, PriorSpec};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chisq-eb"));
    c.env_remove("CHISQ_EB_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

/// Mixture battery with truth columns.
fn write_battery(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let prior = PriorSpec::point_mass_mixture(0.8, PriorSpec::gamma(2.0, 10.0).unwrap()).unwrap();
    let m = MarginalModel::new(prior, 7.0).unwrap();
    let mut s = String::from("id,x,k,is_null,lambda\n");
    for (i, d) in sample(&m, n, seed).iter().enumerate() {
        s.push_str(&format!("s{i},{},7,{},{}\n", d.x, d.lambda == 0.0, d.lambda));
    }
    let path = dir.join("battery.csv");
    fs::write(&path, s).unwrap();
    path
}

#[test]
fn golden_headers() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_battery(dir.path(), 300, 1);
    let est = dir.path().join("est.csv");
    ok(&["estimate", "-i", p(&input), "-o", p(&est), "--method", "exact", "--prior", "mixture:0.8:gamma:2,10"]);
    assert_eq!(header(&est), "id,x,k,mean,var,lo,hi,fdr,significant,flags");
    assert!(dir.path().join("est.meta.json").exists());

    let bh = dir.path().join("bh.csv");
    ok(&["bh", "-i", p(&input), "-o", p(&bh)]);
    assert_eq!(header(&bh), "id,x,k,p_value,rejected");

    let curves = dir.path().join("curves.csv");
    ok(&["curves", "-o", p(&curves), "--points", "10"]);
    assert_eq!(header(&curves), "x,one_layer,two_layer,u,v,w");

    let fig = dir.path().join("fig4.json");
    ok(&["simulate", "fig4", "--reps", "40", "--no-fitted", "--no-nt", "-o", p(&fig)]);
    assert_eq!(header(&dir.path().join("fig4.csv")), "method,covered,total,rate,mean_width,extrapolated,skipped");

    let xor = dir.path().join("xor.json");
    ok(&["simulate", "xor", "--n", "200", "--p", "8", "--no-fitted", "-o", p(&xor)]);
    assert_eq!(header(&dir.path().join("xor.csv")), "i1,i2,i3,q,df,p_value,signal,significant,mean,var,lo,hi");
}

#[test]
fn null_battery_with_point_mass_prior_gives_zero_means() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("null.csv");
    fs::write(&input, "id,x\na,0.5\nb,3\nc,7\nd,15\ne,30\n").unwrap();
    let est = dir.path().join("est.csv");
    ok(&["estimate", "-i", p(&input), "--k", "7", "--method", "exact", "--prior", "degenerate:0", "-o", p(&est)]);
    let mut rdr = csv::Reader::from_path(&est).unwrap();
    for row in rdr.records() {
        let row = row.unwrap();
        let mean: f64 = row[3].parse().unwrap();
        assert!(mean.abs() < 1e-8, "{row:?}");
        assert_eq!(&row[8], "false");
    }
}

#[test]
fn estimate_is_deterministic_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_battery(dir.path(), 2000, 7);
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    ok(&["estimate", "-i", p(&input), "-o", p(&a), "--pi0", "auto"]);
    ok(&["estimate", "-i", p(&input), "-o", p(&b), "--pi0", "auto", "--threads", "1"]);
    let body = fs::read_to_string(&a).unwrap();
    assert_eq!(body, fs::read_to_string(&b).unwrap());
    assert!(body.lines().nth(1).unwrap().split(',').nth(7).is_some_and(|f| !f.is_empty()));

    // Feeding the output back reproduces it.
    ok(&["estimate", "-i", p(&a), "-o", p(&c), "--pi0", "auto"]);
    assert_eq!(body, fs::read_to_string(&c).unwrap());

    let again = dir.path().join("again.csv");
    ok(&["estimate", "-i", p(&input), "-o", p(&again), "--pi0", "auto"]);
    fs::rename(&again, &a).unwrap();
    let meta = |x: &str| fs::read_to_string(dir.path().join(x)).unwrap();
    assert_eq!(body, fs::read_to_string(&a).unwrap());
    assert!(meta("a.meta.json").contains("\"fdr_source\": \"lindsey\""));
}

#[test]
fn saved_gradients_match_a_fresh_fit() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_battery(dir.path(), 1500, 3);
    let g = dir.path().join("g.json");
    ok(&["fit-gradients", "-i", p(&input), "-o", p(&g), "--seed", "4"]);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    ok(&["estimate", "-i", p(&input), "-o", p(&a), "--seed", "4"]);
    ok(&["estimate", "-i", p(&input), "-o", p(&b), "--gradients", p(&g)]);
    assert_eq!(fs::read_to_string(&a).unwrap(), fs::read_to_string(&b).unwrap());
}

#[test]
fn exit_codes_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,x\na,3\nb,-1\n").unwrap();
    let out = run(&["estimate", "-i", p(&bad), "--k", "7"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let good = dir.path().join("good.csv");
    fs::write(&good, "id,x\na,3\nb,5\n").unwrap();
    assert_eq!(run(&["estimate", "-i", p(&good)]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "-i", p(&good), "--k", "7", "--method", "exact"]).status.code(), Some(2));
    assert_eq!(run(&["estimate", "-i", p(&good), "--k", "7", "--level", "1.5"]).status.code(), Some(2));
    assert_eq!(run(&["bh", "-i", p(&dir.path().join("missing.csv")), "--k", "7"]).status.code(), Some(3));
    assert_eq!(run(&["simulate", "fig9"]).status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested");
    let status = bin().env("CHISQ_EB_OUT_DIR", &out).args(["curves", "--points", "4"]).status().unwrap();
    assert!(status.success());
    assert!(out.join("curves.csv").exists());
}

#[test]
fn bh_reports_truth_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_battery(dir.path(), 1000, 2);
    let out = dir.path().join("bh.csv");
    ok(&["bh", "-i", p(&input), "-o", p(&out), "--alpha", "0.1"]);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("bh.meta.json")).unwrap()).unwrap();
    let rejected = meta["rejected"].as_u64().unwrap() as usize;
    let rows = fs::read_to_string(&out).unwrap().lines().filter(|l| l.ends_with(",true")).count();
    assert_eq!(rows, rejected);
    assert!(meta["empirical_fdr"].as_f64().unwrap() < 0.3);
}

#[test]
fn fig4_coverage_near_nominal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig4.json");
    ok(&["simulate", "fig4", "--seed", "1", "--reps", "1000", "--no-nt", "-o", p(&out)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let methods = v["report"]["methods"].as_array().unwrap();
    let exact = methods.iter().find(|m| m["method"] == "proposed-exact").unwrap();
    let rate = 100.0 * exact["rate"].as_f64().unwrap();
    assert!((87.5..=93.0).contains(&rate), "coverage {rate}");
}
