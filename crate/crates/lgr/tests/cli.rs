use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lgr::format::load_model;

fn lgr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lgr(args);
    assert!(
        out.status.success(),
        "lgr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_data_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    ok(&["gen-data", "--kind", "cross2d", "-n", "2000", "--noise", "0.2", "--seed", "1", "--out", p(&a)]);
    ok(&["gen-data", "--kind", "cross2d", "-n", "2000", "--noise", "0.2", "--seed", "1", "--out", p(&b)]);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 2001);
    assert_eq!(text.lines().next().unwrap(), "x1,x2,y,y_clean");
}

#[test]
fn zero_rows_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = lgr(&["gen-data", "--kind", "sine", "-n", "0", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn lwr_on_a_line_is_nearly_exact() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("line.csv");
    let mut text = String::from("x,y\n");
    for i in 0..50 {
        let x = -1.0 + 0.04 * i as f64;
        text.push_str(&format!("{x},{}\n", 2.0 * x - 0.5));
    }
    fs::write(&data, text).unwrap();
    let report = dir.path().join("r.json");
    ok(&[
        "train", "--method", "lwr", "--dataset", p(&data), "--w-gen", "0.01", "--lambda-init", "100",
        "--report", p(&report),
    ]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["n_models"], 1);
    assert!(v["train"]["mse"].as_f64().unwrap() < 1e-12);
}

#[test]
fn deterministic_reports_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sine.csv");
    ok(&["gen-data", "--kind", "sine", "-n", "80", "--noise", "0.1", "--out", p(&data)]);
    let rep = dir.path().join("r.json");
    let run = || {
        ok(&[
            "train", "--dataset", p(&data), "--iters", "30", "--deterministic", "--report", p(&rep),
        ]);
        fs::read(&rep).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert!(v.get("timings").is_none());
    assert!(v["train"]["nmse"].is_number());
    // the resolved config, defaults included, is echoed
    assert_eq!(v["config"]["prune_threshold"], 1000.0);
    assert_eq!(v["config"]["lambda_init"][0], 0.3);
}

#[test]
fn predict_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sine.csv");
    let grid = dir.path().join("grid.csv");
    let model = dir.path().join("m.json");
    let preds = dir.path().join("p.csv");
    ok(&["gen-data", "--kind", "sine", "-n", "60", "--noise", "0.1", "--out", p(&data)]);
    ok(&["train", "--dataset", p(&data), "--iters", "20", "--out", p(&model), "--report", p(&dir.path().join("r.json"))]);
    let mut text = String::from("x1\n");
    let xs: Vec<f64> = (0..25).map(|i| 0.25 * i as f64).collect();
    for x in &xs {
        text.push_str(&format!("{x}\n"));
    }
    fs::write(&grid, text).unwrap();
    ok(&["predict", "--model", p(&model), "--input", p(&grid), "--out", p(&preds)]);
    let m = load_model(&model).unwrap();
    let (mean, var) = m.predict_batch(&xs).unwrap();
    let var = var.unwrap();
    let out = fs::read_to_string(&preds).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "x1,mean,variance");
    for (i, line) in lines.enumerate() {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(f, vec![xs[i], mean[i], var[i]]);
    }

    // one input row in, one prediction row out
    fs::write(&grid, "x1\n1.5\n").unwrap();
    let out = ok(&["predict", "--model", p(&model), "--input", p(&grid)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2);
}

#[test]
fn predict_errors_have_stable_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "a,b\n1,2\n").unwrap();
    let missing = lgr(&["predict", "--model", p(&dir.path().join("none.json")), "--input", p(&input)]);
    assert_eq!(missing.status.code(), Some(4));

    let data = dir.path().join("sine.csv");
    let model = dir.path().join("m.json");
    ok(&["gen-data", "--kind", "sine", "-n", "30", "--out", p(&data)]);
    ok(&["train", "--dataset", p(&data), "--iters", "5", "--out", p(&model), "--report", p(&dir.path().join("r.json"))]);
    let mismatch = lgr(&["predict", "--model", p(&model), "--input", p(&input)]);
    assert_eq!(mismatch.status.code(), Some(7));

    fs::write(&model, "{}").unwrap();
    let bad = lgr(&["predict", "--model", p(&model), "--input", p(&input)]);
    assert_eq!(bad.status.code(), Some(6));
}

#[test]
fn config_file_and_flag_violations_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "w_gen = 2\nlearning-rate = fast\ncolour = blue\n").unwrap();
    let out = lgr(&["train", "--config", p(&cfg), "--prune-threshold=-3"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    for key in ["dataset", "w-gen", "learning-rate", "colour", "prune-threshold"] {
        assert!(err.contains(key), "`{key}` missing from:\n{err}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sine.csv");
    ok(&["gen-data", "--kind", "sine", "-n", "40", "--out", p(&data)]);
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("dataset = {}\nw-gen = 0.2\niters = 3\n", p(&data))).unwrap();
    let rep = dir.path().join("r.json");
    ok(&["train", "--config", p(&cfg), "--w-gen", "0.6", "--report", p(&rep)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(v["w_gen"], 0.6);
    assert_eq!(v["config"]["iters"], 3);
}

#[test]
fn w_gen_sweep_writes_one_report_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sine.csv");
    ok(&["gen-data", "--kind", "sine", "-n", "40", "--out", p(&data)]);
    let rep = dir.path().join("r.json");
    ok(&[
        "train", "--dataset", p(&data), "--iters", "3", "--w-gen-sweep", "0.2,0.5", "--report", p(&rep),
        "--out", p(&dir.path().join("m.json")),
    ]);
    for w in ["0.2", "0.5"] {
        assert!(dir.path().join(format!("r.wgen-{w}.json")).exists());
        assert!(dir.path().join(format!("m.wgen-{w}.json")).exists());
    }
    let table = fs::read_to_string(dir.path().join("r.sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn single_cell_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "benchmark", "--methods", "lwr", "--seeds", "1", "--w-gen-sweep", "0.3", "--n-train", "300",
        "--out", p(dir.path()), "--deterministic",
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("lwr,"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 1);
    assert_eq!(v["table"][0]["best_nmse_mean"], v["cells"][0]["nmse"]);
}
