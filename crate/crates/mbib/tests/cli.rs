//! Drives the `mbib` binary end to end through temporary directories.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mbib::io::read_dataset;
use serde_json::Value;

fn mbib(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbib")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn help_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let out = mbib(&["--version"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
    let out = mbib(&["--help"], dir.path());
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    for sub in ["simulate", "fit", "predict", "run", "sweep", "theory-check"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn simulate_then_csv_pair_without_shift_has_no_generalization_gap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&mbib(&["simulate", "--preset", "seven_node_covariate", "--seed", "2", "--out", "data"], d));
    let source = read_dataset(&d.join("data/source.csv")).unwrap();
    assert_eq!(source.n_rows(), 2000);
    assert_eq!(read_dataset(&d.join("data/target.csv")).unwrap().columns(), source.columns());

    ok(&mbib(
        &[
            "run",
            "--source",
            "data/source.csv",
            "--target-csv",
            "data/source.csv",
            "--dag",
            "data/dag.txt",
            "--holdout-fraction",
            "0.2",
            "--seeds",
            "0,1,2",
            "--output-dir",
            "same",
        ],
        d,
    ));
    let agg = json(&d.join("same/aggregate.json"));
    let target_r2 = agg["target"]["r2"]["mean"].as_f64().unwrap();
    let source_r2 = agg["source"]["r2"]["mean"].as_f64().unwrap();
    assert!((target_r2 - source_r2).abs() <= 0.05, "{target_r2} vs {source_r2}");
    assert_eq!(agg["toolkit_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(agg["config"]["experiment"]["kind"], "csv_pair");
    let seed = json(&d.join("same/seeds/seed_1.json"));
    assert_eq!(seed["source_eval"], "holdout");
    assert_eq!(seed["features"], serde_json::json!(["C1", "Z", "X", "P", "Y"]));
    let scatter = fs::read_to_string(d.join("same/scatter/seed_0.csv")).unwrap();
    assert!(scatter.starts_with("truth,predicted\n"));
    assert_eq!(scatter.lines().count(), 2001);
}

#[test]
fn unlabelled_target_file_is_imputed_without_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&mbib(&["simulate", "--preset", "seven_node_covariate", "--n-target", "40", "--out", "data"], d));
    let target = read_dataset(&d.join("data/target.csv")).unwrap();
    mbib::io::write_dataset(&d.join("data/unlabelled.csv"), &target.without_column("T").unwrap()).unwrap();
    ok(&mbib(
        &[
            "run",
            "--source",
            "data/source.csv",
            "--target-csv",
            "data/unlabelled.csv",
            "--dag",
            "data/dag.txt",
            "--seeds",
            "0",
            "--output-dir",
            "out",
        ],
        d,
    ));
    let agg = json(&d.join("out/aggregate.json"));
    assert!(agg["target"].is_null());
    let preds = fs::read_to_string(d.join("out/scatter/seed_0.csv")).unwrap();
    assert!(preds.starts_with("predicted\n"));
    assert_eq!(preds.lines().count(), 41);
}

#[test]
fn fit_and_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&mbib(&["simulate", "--preset", "motivating", "--n-target", "100", "--out", "data"], d));
    ok(&mbib(&["fit", "--preset", "motivating", "--seeds", "0", "--model", "model.json"], d));
    let model = json(&d.join("model.json"));
    assert_eq!(model["format"], "mbib-model");
    assert_eq!(model["model"]["method"], "gib");
    ok(&mbib(&["predict", "--model", "model.json", "--input", "data/target.csv", "--output", "pred.csv"], d));
    let pred = read_dataset(&d.join("pred.csv")).unwrap();
    let target = read_dataset(&d.join("data/target.csv")).unwrap();
    let (c1, c2, c3) = (target.column("C1").unwrap(), target.column("C2").unwrap(), target.column("C3").unwrap());
    // The fitted blanket model approximates E[T | C] = 2 C1 + C2 + C3.
    let t = pred.column("T").unwrap();
    let err: f64 = (0..t.len()).map(|i| (t[i] - (2.0 * c1[i] + c2[i] + c3[i])).powi(2)).sum::<f64>() / t.len() as f64;
    assert!(err < 0.05, "{err}");

    // Predicting twice gives identical files, and stdout matches the file.
    let out = mbib(&["predict", "--model", "model.json", "--input", "data/target.csv"], d);
    ok(&out);
    assert_eq!(out.stdout, fs::read(d.join("pred.csv")).unwrap());

    let narrow = target.select(&["C1", "C2"]).unwrap();
    mbib::io::write_dataset(&d.join("narrow.csv"), &narrow).unwrap();
    let out = mbib(&["predict", "--model", "model.json", "--input", "narrow.csv"], d);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("C3"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"seeds": []}"#).unwrap();
    assert_eq!(mbib(&["run", "--config", "bad.json"], d).status.code(), Some(2));
    fs::write(d.join("typo.json"), r#"{"methd": "gib"}"#).unwrap();
    assert_eq!(mbib(&["run", "--config", "typo.json"], d).status.code(), Some(2));
    assert_eq!(mbib(&["run", "--scope", "everything"], d).status.code(), Some(2));
    assert_eq!(mbib(&["run", "--target", "Q", "--seeds", "0"], d).status.code(), Some(2));
    let missing = mbib(&["run", "--source", "nope.csv", "--target-csv", "nope.csv", "--scope", "global"], d);
    assert_eq!(missing.status.code(), Some(3));
    fs::write(d.join("broken.csv"), "A,T\n1,2\n3,oops\n").unwrap();
    let broken = mbib(&["run", "--source", "broken.csv", "--target-csv", "broken.csv", "--scope", "global"], d);
    assert_eq!(broken.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&broken.stderr).contains("line 3"));
    // Perfectly collinear features cannot be whitened without a ridge.
    fs::write(d.join("collinear.csv"), "A,B,T\n1,2,0.5\n2,4,0.1\n3,6,0.9\n4,8,0.3\n5,10,0.2\n6,12,0.8\n").unwrap();
    fs::write(d.join("noridge.json"), r#"{"gib": {"ridge": {"kind": "absolute", "value": 0}}, "scope": {"kind": "global"}}"#)
        .unwrap();
    let singular = mbib(
        &["run", "--config", "noridge.json", "--source", "collinear.csv", "--target-csv", "collinear.csv", "--seeds", "0"],
        d,
    );
    assert_eq!(singular.status.code(), Some(4), "{}", String::from_utf8_lossy(&singular.stderr));
}

#[test]
fn config_file_with_flag_override_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("exp.json"),
        r#"{"experiment": {"kind": "preset", "name": "seven_node_target_shift", "params": {"n_source": 500}},
            "method": "bn", "seeds": [0, 1], "output_dir": "a"}"#,
    )
    .unwrap();
    ok(&mbib(&["run", "--config", "exp.json", "--method", "gib"], d));
    let first = fs::read(d.join("a/aggregate.json")).unwrap();
    let agg = json(&d.join("a/aggregate.json"));
    assert_eq!(agg["config"]["method"], "gib");
    assert_eq!(agg["config"]["experiment"]["params"]["n_source"], 500);
    assert_eq!(agg["seeds"], serde_json::json!([0, 1]));
    ok(&mbib(&["run", "--config", "exp.json", "--method", "gib"], d));
    assert_eq!(first, fs::read(d.join("a/aggregate.json")).unwrap());
}

#[test]
fn sweep_writes_long_and_cell_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = mbib(
        &[
            "sweep",
            "--preset",
            "seven_node_covariate",
            "--seeds",
            "0,1",
            "--grid",
            "stretch=1,2",
            "--grid",
            "missing_rate=0,0.5",
            "--workers",
            "2",
            "--output-dir",
            "sw",
        ],
        d,
    );
    ok(&out);
    let long = fs::read_to_string(d.join("sw/sweep_long.csv")).unwrap();
    let mut lines = long.lines();
    assert_eq!(lines.next(), Some("stretch,missing_rate,seed,mae,rmse,r2"));
    assert_eq!(lines.count(), 8);
    let cells = fs::read_to_string(d.join("sw/sweep_cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 5);
    assert!(d.join("sw/cells/stretch=2_missing_rate=0.5/aggregate.json").exists());
    let report = json(&d.join("sw/sweep.json"));
    assert_eq!(report["cells"].as_array().unwrap().len(), 4);
    assert_eq!(mbib(&["sweep", "--grid", "gamma=1"], d).status.code(), Some(2));
    assert_eq!(mbib(&["sweep", "--method", "bn", "--grid", "beta=1"], d).status.code(), Some(2));
}

#[test]
fn theory_check_writes_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = mbib(&["theory-check", "--random-instances", "4", "--sweep-seeds", "4", "--output", "t.json"], d);
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    ok(&out);
    for check in ["lossless_restriction", "metric_identity", "risk_transfer", "mismatch_identity", "concentration"] {
        assert!(table.contains(check), "{check} missing:\n{table}");
    }
    let report = json(&d.join("t.json"));
    assert_eq!(report["passed"], true);
    assert_eq!(report["config"]["random_instances"], 4);
}
