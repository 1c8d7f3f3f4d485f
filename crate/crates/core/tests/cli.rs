use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn matk(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matk"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = matk(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_defaults_and_shapes() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--case", "4", "--n", "200", "--seed", "7"]);
    let text = std::fs::read_to_string(dir.path().join("case4.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count(), 200);
    assert!(dir.path().join("case4.csv.manifest.json").exists());

    ok(dir.path(), &["generate", "--sinc", "--n", "1000", "--seed", "1", "--format", "sparse"]);
    let sinc = matk::data::load_sparse(dir.path().join("sinc.svm"), None).unwrap();
    assert_eq!((sinc.len(), sinc.dim()), (1000, 10));

    // same flags, same bytes
    ok(dir.path(), &["generate", "--case", "4", "--n", "200", "--seed", "7", "--out", "again.csv"]);
    assert_eq!(text, std::fs::read_to_string(dir.path().join("again.csv")).unwrap());
}

#[test]
fn train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--case", "4", "--n", "200", "--seed", "7", "--out", "d4.csv"]);
    ok(dir.path(), &["train", "--data", "d4.csv", "--loss", "hinge", "--k", "10", "--C", "100", "--trace-every", "1000", "--out", "m.json"]);
    let model = json(&dir.path().join("m.json"));
    assert_eq!(model["kind"], "linear");
    assert_eq!(model["k"], 10);
    assert_eq!(model["state"]["weights"].as_array().unwrap().len(), 2);
    assert!(model["state"]["lambda"].as_f64().unwrap() >= 0.0);
    let trace = std::fs::read_to_string(dir.path().join("m.json.trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 21);

    ok(dir.path(), &["train", "--data", "d4.csv", "--loss", "logistic", "--aggregate", "average", "--out", "avg.json"]);
    assert_eq!(json(&dir.path().join("avg.json"))["k"], 200);

    let out = ok(dir.path(), &["eval", "--model", "m.json", "--data", "d4.csv"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["metric"], "misclassification_pct");
    let pct = report["score"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&pct));
}

#[test]
fn regression_training_on_sinc() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--sinc", "--n", "200", "--seed", "3"]);
    ok(dir.path(), &["train", "--data", "sinc.csv", "--loss", "squared", "--k", "50", "--normalize", "--out", "r.json"]);
    assert!(json(&dir.path().join("r.json"))["target_scale"].is_object());
    let out = ok(dir.path(), &["eval", "--model", "r.json", "--data", "sinc.csv"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["metric"], "rmse");
    // predictions are mapped back to the original target scale
    assert!(report["score"].as_f64().unwrap() < 0.4);
}

#[test]
fn sweep_gridsearch_and_dual_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--case", "1", "--n", "120", "--seed", "2", "--out", "d1.csv"]);
    ok(dir.path(), &["sweep-k", "--data", "d1.csv", "--loss", "hinge", "--C", "100", "--repeats", "2", "--iters", "2000", "--out", "s.csv"]);
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let ks = matk::eval::log_k_grid(60, 15);
    assert_eq!(csv.lines().count(), 1 + ks.len());
    assert_eq!(csv.lines().next().unwrap(), "k,mean,std");

    ok(dir.path(), &["gridsearch", "--data", "d1.csv", "--loss", "logistic", "--k-points", "4", "--c-lo", "-1", "--c-hi", "1", "--repeats", "2", "--iters", "1000", "--out", "g.json"]);
    let g = json(&dir.path().join("g.json"));
    assert_eq!(g["test_scores"].as_array().unwrap().len(), 2);
    assert_eq!(g["cells"].as_array().unwrap().len(), 2 * 4 * 3);
    assert!(g["mean"].is_f64() && g["std"].is_f64());

    ok(dir.path(), &["svm-dual", "--data", "d1.csv", "--kernel", "rbf", "--gamma", "0.5", "--C", "1", "--k", "20", "--out", "svm.json"]);
    let s = json(&dir.path().join("svm.json"));
    assert_eq!(s["kind"], "svm");
    let nu = 20.0 / 120.0;
    assert!(s["nu"]["margin_error_fraction"].as_f64().unwrap() <= nu);
    assert!(s["nu"]["support_fraction"].as_f64().unwrap() >= nu);
    let out = ok(dir.path(), &["eval", "--model", "svm.json", "--data", "d1.csv"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["score"].as_f64().unwrap() < 50.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["generate", "--sinc", "--n", "40", "--seed", "1"]);
    ok(dir.path(), &["generate", "--case", "2", "--n", "40", "--seed", "1"]);
    std::fs::write(dir.path().join("bad.csv"), "1.0,2.0,1\n1.0,x,-1\n").unwrap();

    let code = |args: &[&str]| matk(dir.path(), args).status.code();
    // usage
    assert_eq!(code(&["train", "--data", "sinc.csv"]), Some(2));
    assert_eq!(code(&["train", "--data", "sinc.csv", "--loss", "hinge", "--k", "3", "--out", "m.json"]), Some(2));
    assert_eq!(code(&["train", "--data", "case2.csv", "--loss", "hinge", "--out", "m.json"]), Some(2));
    assert_eq!(code(&["generate", "--case", "9", "--out", "x.csv"]), Some(2));
    // data
    assert_eq!(code(&["train", "--data", "missing.csv", "--loss", "hinge", "--k", "3", "--out", "m.json"]), Some(3));
    assert_eq!(code(&["train", "--data", "bad.csv", "--loss", "hinge", "--k", "1", "--out", "m.json"]), Some(3));
    // convergence
    assert_eq!(
        code(&["svm-dual", "--data", "case2.csv", "--k", "5", "--tol", "1e-14", "--max-iters", "1", "--out", "s.json"]),
        Some(4)
    );
}
