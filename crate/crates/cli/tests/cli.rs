use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn jsgnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jsgnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn combined(dir: &Path) {
    let out = jsgnn(
        dir,
        &[
            "generate",
            "combined",
            "--out",
            "g.txt",
            "--labels",
            "y.csv",
            "--features",
            "x.csv",
            "--seed",
            "2",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const DATA: [&str; 6] = [
    "--graph",
    "g.txt",
    "--features",
    "x.csv",
    "--labels",
    "y.csv",
];

#[test]
fn generate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    combined(dir.path());
    let out = jsgnn(
        dir.path(),
        &[
            "analyze", "--graph", "g.txt", "--out", "a.json", "--csv", "a.csv",
        ],
    );
    assert!(out.status.success());
    let a = json(&dir.path().join("a.json"));
    assert_eq!(a["nodes"], 40);
    assert_eq!(a["per_node"][12], 2.0);
    assert_eq!(a["max_local_delta"], 2.0);
    let csv = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);

    let out = jsgnn(
        dir.path(),
        &["analyze", "--graph", "g.txt", "--mode", "one", "--k", "1"],
    );
    assert!(out.status.success());
    let a: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(a["mode"], "one");
}

#[test]
fn train_report_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    combined(dir.path());
    let mut args = vec!["train-nc"];
    args.extend(DATA);
    args.extend([
        "--max-epochs",
        "40",
        "--patience",
        "20",
        "--hidden",
        "8",
        "--seed",
        "5",
        "--out",
        "r.json",
        "--csv",
        "trace.csv",
        "--beta-csv",
        "beta.csv",
        "--checkpoint",
        "p.json",
    ]);
    let out = jsgnn(dir.path(), &args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json(&dir.path().join("r.json"));
    assert_eq!(r["config"]["hidden"], 8);
    assert_eq!(r["config"]["seed"], 5);
    assert_eq!(r["metric"], "accuracy");
    let epochs = r["epochs_run"].as_u64().unwrap() as usize;
    assert!(epochs <= 40);
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), epochs + 1);
    assert!(json(&dir.path().join("p.json"))["curvature"]["shape"] == serde_json::json!([1, 1]));
    assert!(fs::read_to_string(dir.path().join("beta.csv"))
        .unwrap()
        .starts_with("node,layer0,layer1,mu"));

    let out = jsgnn(
        dir.path(),
        &[
            "report", "--report", "r.json", "--out", "d.json", "--csv", "nu.csv",
        ],
    );
    assert!(out.status.success());
    let d = json(&dir.path().join("d.json"));
    assert_eq!(d["w2_nu_unif"], r["w2_nu_unif"]);
    assert_eq!(d["w2_nu_mu"], r["w2_nu_mu"]);
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    combined(dir.path());
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"lr": 0.02, "hidden": 4, "max_epochs": 3, "comparison_mode": "mean"}"#,
    )
    .unwrap();
    let mut args = vec!["train-nc"];
    args.extend(DATA);
    args.extend(["--config", "cfg.json", "--hidden", "6", "--out", "r.json"]);
    let out = jsgnn(dir.path(), &args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let c = &json(&dir.path().join("r.json"))["config"];
    assert_eq!(c["lr"], 0.02);
    assert_eq!(c["hidden"], 6);
    assert_eq!(c["comparison_mode"], "mean");
    assert_eq!(c["task"], "nc");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    combined(dir.path());
    let code = |extra: &[&str]| {
        let mut args = vec!["train-nc"];
        args.extend(DATA);
        args.extend(["--max-epochs", "5"]);
        args.extend(extra);
        jsgnn(dir.path(), &args).status.code()
    };
    assert_eq!(code(&[]), Some(0));
    assert_eq!(code(&["--dropout", "1.5"]), Some(2));
    assert_eq!(code(&["--lr", "1e300"]), Some(3));
    fs::write(dir.path().join("bad.json"), r#"{"learning_rate": 1}"#).unwrap();
    assert_eq!(code(&["--config", "bad.json"]), Some(2));
    // missing labels
    let out = jsgnn(
        dir.path(),
        &["train-nc", "--graph", "g.txt", "--features", "x.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    fs::write(dir.path().join("broken.txt"), "0 1\n1 x\n").unwrap();
    let out = jsgnn(dir.path(), &["analyze", "--graph", "broken.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn link_prediction_and_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out = jsgnn(
        dir.path(),
        &[
            "generate",
            "tree",
            "--depth",
            "4",
            "--out",
            "t.txt",
            "--features",
            "tx.csv",
            "--noise",
            "0.1",
            "--feature-dim",
            "16",
        ],
    );
    assert!(out.status.success());
    let out = jsgnn(
        dir.path(),
        &[
            "train-lp",
            "--graph",
            "t.txt",
            "--features",
            "tx.csv",
            "--max-epochs",
            "20",
            "--out",
            "lp.json",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json(&dir.path().join("lp.json"));
    assert_eq!(r["metric"], "roc_auc");
    assert_eq!(r["config"]["split"], Value::Null);

    combined(dir.path());
    for (cmd, rows) in [("ablate", 4), ("compare-modes", 3)] {
        let mut args = vec![cmd];
        args.extend(DATA);
        args.extend([
            "--seeds",
            "2",
            "--max-epochs",
            "5",
            "--hidden",
            "4",
            "--out",
            "v.json",
            "--csv",
            "v.csv",
        ]);
        let out = jsgnn(dir.path(), &args);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let v = json(&dir.path().join("v.json"));
        assert_eq!(v["variants"].as_array().unwrap().len(), rows);
        assert_eq!(v["seeds"], serde_json::json!([0, 1]));
        let csv = fs::read_to_string(dir.path().join("v.csv")).unwrap();
        assert_eq!(csv.lines().count(), rows + 1);
    }
}
