use std::path::Path;
use std::process::{Command, Output};

use cbp_core::cnf::to_dimacs;
use cbp_core::generate::random_kcnf;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const CHAIN3: &str = "variables 3\n2 2 2\nfactor 2 0 1\n2 1 1 2\nfactor 2 1 2\n2 1 1 2\n";
const UNARY: &str = "variables 1\n2\nfactor 1 0\n3 1\n";

fn cbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbp")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("valid JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn compress_reports_chain3_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let fgt = write(dir.path(), "chain3.fgt", CHAIN3);
    let v = json(&cbp(&["compress", &fgt]));
    assert!((v["stats"]["node_ratio"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(v["stats"]["factor_ratio"].as_f64().unwrap(), 0.5);
    assert!(v.get("graph").is_none());
    let v = json(&cbp(&["compress", &fgt, "--graph"]));
    assert_eq!(v["graph"]["nodes"].as_array().unwrap().len(), 2);
}

#[test]
fn compress_random_3cnf_barely_compresses() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cnf = write(dir.path(), "r.cnf", &to_dimacs(&random_kcnf(&mut rng, 100, 150, 3)));
    let v = json(&cbp(&["compress", &cnf]));
    assert!(v["stats"]["edge_ratio"].as_f64().unwrap() > 0.9);
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cbp(&["compress", "/nonexistent/graph.fgt"]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.fgt", "variables 2\n2 2\nfactor 2 0 1\n1 2 x 4\n");
    let out = cbp(&["marginals", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    let cnf = write(dir.path(), "bad.cnf", "p cnf 1 1\n2 0\n");
    assert_eq!(cbp(&["count", &cnf, "--seed", "1"]).status.code(), Some(2));
}

#[test]
fn marginals_unary_same_for_both_engines() {
    let dir = tempfile::tempdir().unwrap();
    let fgt = write(dir.path(), "u.fgt", UNARY);
    let bp = json(&cbp(&["marginals", &fgt, "--damping", "0"]));
    assert_eq!(bp["beliefs"]["0"], serde_json::json!([0.75, 0.25]));
    let damped = json(&cbp(&["marginals", &fgt]));
    assert!((damped["beliefs"]["0"][0].as_f64().unwrap() - 0.75).abs() < 1e-7);
    let cbp_out = json(&cbp(&["marginals", &fgt, "--engine", "cbp"]));
    assert_eq!(damped["beliefs"], cbp_out["beliefs"]);
    let keys = |v: &Value| v.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&damped), keys(&cbp_out));
    assert_eq!(keys(&damped["stats"]), keys(&cbp_out["stats"]));
}

#[test]
fn marginals_fb_with_layers() {
    let dir = tempfile::tempdir().unwrap();
    let fgt = write(dir.path(), "chain3.fgt", CHAIN3);
    let layers = write(dir.path(), "layers", "0 1 0\n");
    let bp = json(&cbp(&["marginals", &fgt, "--schedule", "fb", "--layers", &layers]));
    let lifted = json(&cbp(&["marginals", &fgt, "--schedule", "fb", "--layers", &layers, "--engine", "cbp"]));
    for v in ["0", "1", "2"] {
        let a = bp["beliefs"][v][0].as_f64().unwrap();
        let b = lifted["beliefs"][v][0].as_f64().unwrap();
        assert!((a - b).abs() < 1e-9);
    }
    assert_eq!(cbp(&["marginals", &fgt, "--layers", &layers]).status.code(), Some(2));
}

#[test]
fn contradiction_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let fgt = write(dir.path(), "c.fgt", "variables 2\n2 2\nfactor 2 0 1\n0 0 0 1\n");
    let ev = write(dir.path(), "c.ev", "0 0\n");
    let out = cbp(&["marginals", &fgt, "--evidence", &ev]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

#[test]
fn count_examples() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = write(dir.path(), "or.cnf", "p cnf 2 1\n1 2 0\n");
    let v = json(&cbp(&["count", &cnf, "--seed", "4", "--alpha", "0", "-t", "20", "--exact-threshold", "2"]));
    assert_eq!(v["lower_bound"], "3");
    let v = json(&cbp(&["count", &cnf, "--seed", "4"]));
    assert_eq!(v["confidence"].as_f64().unwrap(), 0.9921875);
    assert_eq!(v["seed"], 4);
    assert_eq!(v["engine"], "bp");
}

#[test]
fn count_engines_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cnf = write(dir.path(), "f.cnf", &to_dimacs(&random_kcnf(&mut rng, 30, 60, 3)));
    let bp = json(&cbp(&["count", &cnf, "--seed", "9", "--exact-threshold", "12"]));
    let lifted = json(&cbp(&["count", &cnf, "--seed", "9", "--exact-threshold", "12", "--engine", "cbp"]));
    assert_eq!(bp["lower_bound"], lifted["lower_bound"]);
}

#[test]
fn exact_budget_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cnf = write(dir.path(), "or.cnf", "p cnf 3 2\n1 2 0\n2 3 0\n");
    let out = cbp(&["count", &cnf, "--seed", "1", "--exact", "--exact-threshold", "2"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exact-threshold"));
    let v = json(&cbp(&["count", &cnf, "--seed", "1", "--exact"]));
    assert_eq!(v["count"], "5");
}

#[cfg(unix)]
#[test]
fn external_counter_contract() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "counter.sh", "#!/bin/sh\nhead -1 \"$1\" >&2\necho 'c external'\necho 's mc 17'\n");
    std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
    let cnf = write(dir.path(), "or.cnf", "p cnf 2 1\n1 2 0\n");
    let v = json(&cbp(&["count", &cnf, "--seed", "1", "--exact", "--external-counter", &script]));
    assert_eq!(v["count"], "17");
}

#[test]
fn bench_dmln_rows_and_ordering() {
    let out = cbp(&["bench-dmln", "--seed", "0", "--people", "20", "--timesteps", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("r,seed,edges_ff,edges_lfoff,messages_ff,messages_lfoff,ratio_edges,ratio_messages")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    let ratios: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(ratios[1..].iter().all(|&x| x >= ratios[0]));
    assert!(ratios[0] < 1.0);
}

#[test]
fn bench_dmln_minimal_and_beliefs_file() {
    let dir = tempfile::tempdir().unwrap();
    let beliefs = dir.path().join("b.json");
    let out = cbp(&[
        "bench-dmln",
        "--seed",
        "1",
        "--people",
        "1",
        "--timesteps",
        "1",
        "--beliefs",
        beliefs.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 6);
    let v: Value = serde_json::from_slice(&std::fs::read(beliefs).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 5);
    assert_eq!(v[0]["cancer"].as_array().unwrap().len(), 1);
}

#[test]
fn bench_count_series() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cnf = write(dir.path(), "f.cnf", &to_dimacs(&random_kcnf(&mut rng, 30, 50, 3)));
    let out = cbp(&["bench-count", &cnf, "--seed", "2", "--exact-threshold", "10", "-t", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert!(!rows.is_empty());
    for w in rows.windows(2) {
        assert!(w[1][4] >= w[0][4] && w[1][5] >= w[0][5]);
    }
    assert!(rows.iter().all(|r| r[5] <= r[4] && r[6] <= 1.0));
}
