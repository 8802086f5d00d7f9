use std::path::Path;
use std::process::{Command, Output};

fn gaunet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaunet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("synth.json"), r#"{"n_points": 1500}"#).unwrap();
    std::fs::write(d.join("train.json"), r#"{"max_epochs": 20, "learning_rate": 0.01}"#).unwrap();

    ok(&gaunet(&["synth", "--config", "synth.json", "--seed", "3", "--out", "data"], d));
    let stats: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("data/stats.json")).unwrap()).unwrap();
    assert_eq!(stats["seed"], 3);
    assert_eq!(stats["n_candidates"], 1500);

    ok(&gaunet(&["fit", "--data", "data/data.csv", "--kind", "gaunet", "--config", "train.json", "--out", "fit"], d));
    assert!(d.join("fit/model.json").exists());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("fit/fit_report.json")).unwrap()).unwrap();
    assert!(report.get("model").is_none());
    assert!(report["stages"][0]["trace"].as_array().unwrap().len() <= 20);

    let eval = gaunet(&["evaluate", "--model", "fit/model.json", "--data", "data/data.csv"], d);
    ok(&eval);
    let v: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    assert!(v["accuracy"].as_f64().unwrap() > 0.5);

    ok(&gaunet(
        &["policy-eval", "--model", "fit/model.json", "--data", "data/data.csv", "--deltas", "-2,0,4", "--out", "policy"],
        d,
    ));
    let csv = std::fs::read_to_string(d.join("policy/policy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("delta,n_evaluated,n_excluded,accuracy,predicted_bus,predicted_taxi"));

    ok(&gaunet(&["curves", "--model", "fit/model.json", "--data", "data/data.csv", "--grid-points", "7", "--out", "curves"], d));
    let curve = std::fs::read_to_string(d.join("curves/curves/taxi__cost.csv")).unwrap();
    assert_eq!(curve.lines().count(), 8);

    ok(&gaunet(&["importance", "--model", "fit/model.json", "--out", "imp"], d));
    assert!(std::fs::read_to_string(d.join("imp/importance.csv")).unwrap().contains("taxi,cost,"));

    ok(&gaunet(&["vif", "--data", "data/data.csv", "--out", "vif"], d));
    assert_eq!(std::fs::read_to_string(d.join("vif/vif.csv")).unwrap().lines().count(), 9);

    ok(&gaunet(&["cv", "--data", "data/data.csv", "--kind", "linear", "--folds", "3", "--config", "train.json", "--out", "cv"], d));
    assert_eq!(std::fs::read_to_string(d.join("cv/cv.csv")).unwrap().lines().count(), 6);
}

#[test]
fn experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp.json"),
        r#"{
            "data": {"synthetic": {"n_points": 800}},
            "models": [{"name": "lin", "spec": {"kind": "linear"}, "train": {"max_epochs": 10}}],
            "policy_sweeps": [{"alternative": "taxi", "variable": "cost", "deltas": [0, 20]}]
        }"#,
    )
    .unwrap();
    ok(&gaunet(&["experiment", "--config", "exp.json", "--seed", "5", "--out", "a"], d));
    ok(&gaunet(&["experiment", "--config", "exp.json", "--seed", "5", "--out", "b"], d));
    assert_eq!(std::fs::read(d.join("a/results.json")).unwrap(), std::fs::read(d.join("b/results.json")).unwrap());
    let table = std::fs::read_to_string(d.join("a/table.csv")).unwrap();
    assert!(table.starts_with("model,log_likelihood,accuracy\nlin,"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // usage errors from clap and from missing flags
    assert_eq!(gaunet(&["fit"], d).status.code(), Some(2));
    assert_eq!(gaunet(&["synth"], d).status.code(), Some(2));

    // config validation names the field
    std::fs::write(d.join("bad.json"), r#"{"n_points": 0}"#).unwrap();
    let out = gaunet(&["synth", "--config", "bad.json", "--out", "o"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_points"));

    std::fs::write(d.join("typo.json"), r#"{"data": {"synthetic": {}}, "model": []}"#).unwrap();
    let out = gaunet(&["experiment", "--config", "typo.json", "--out", "o"], d);
    assert_eq!(out.status.code(), Some(2));

    // a file that cannot be read is a runtime failure
    let out = gaunet(&["vif", "--data", "missing.csv", "--out", "o"], d);
    assert_eq!(out.status.code(), Some(1));
}
