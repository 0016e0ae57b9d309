//! End-to-end runs of the installed binary: workflows and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_deep-ice")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("deep-ice-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn fit_predict_round_trip_replays_training_loss() {
    let data = tmp("train.csv");
    let model = tmp("model.json");
    let out = run(&[
        "gen-data", "--n", "24", "--d", "2", "--seed", "5", "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = run(&[
        "fit-exact", "--data", data.to_str().unwrap(), "--k", "2", "--activation", "maxout",
        "--seed", "7", "--model-out", model.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let loss: u32 = text
        .lines()
        .find(|l| l.starts_with("loss "))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .parse()
        .unwrap();

    // replaying with the same ingestion transform reproduces the loss
    let out = run(&[
        "predict", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--label", "label", "--sigma", "1e-8", "--seed", "7",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let err = stderr(&out);
    let replayed: u32 = err
        .lines()
        .find(|l| l.contains("0-1 loss"))
        .and_then(|l| l.rsplit(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(replayed, loss);

    // model JSON is versioned and carries the fingerprint
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(json["format_version"], 1);
    assert_eq!(json["k"], 2);
    assert_eq!(json["dataset_fingerprint"].as_str().unwrap().len(), 64);
}

#[test]
fn grid_prediction_emits_csv() {
    let data = tmp("grid-train.csv");
    let model = tmp("grid-model.json");
    run(&["gen-data", "--n", "12", "--d", "2", "--seed", "2", "--separable", "--out",
        data.to_str().unwrap()]);
    let out = run(&[
        "fit-exact", "--data", data.to_str().unwrap(), "--k", "1",
        "--model-out", model.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = run(&[
        "predict", "--model", model.to_str().unwrap(), "--grid", "-2,2,-2,2,5",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,prediction"));
    assert_eq!(lines.count(), 25);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",1") || l.ends_with(",-1")));
}

#[test]
fn coreset_fit_writes_round_log() {
    let data = tmp("coreset.csv");
    let log = tmp("rounds.jsonl");
    run(&["gen-data", "--n", "60", "--d", "2", "--seed", "4", "--out", data.to_str().unwrap()]);
    let out = run(&[
        "fit-coreset", "--data", data.to_str().unwrap(), "--k", "1",
        "--block-size", "10", "--rounds", "2", "--heap", "3", "--bmax", "25",
        "--shrink", "0.5", "--round-log", log.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("full-data loss"));
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["layer", "round", "survivors_in", "heap_capacity", "blocks",
            "best_block_loss", "wall_ms"] {
            assert!(v.get(key).is_some(), "round log missing {key}");
        }
    }
}

#[test]
fn cv_emits_fold_logs_and_summary() {
    let data = tmp("cv.csv");
    let log = tmp("folds.jsonl");
    run(&["gen-data", "--n", "30", "--d", "2", "--seed", "6", "--out", data.to_str().unwrap()]);
    let out = run(&[
        "cv", "--data", data.to_str().unwrap(), "--k", "1", "--folds", "5",
        "--log", log.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("folds=5:"), "{text}");
    let logged = std::fs::read_to_string(&log).unwrap();
    assert_eq!(logged.lines().count(), 5);
}

#[test]
fn exit_code_2_on_input_errors() {
    let out = run(&["fit-exact", "--data", "/nonexistent/file.csv", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let bad = tmp("bad.csv");
    std::fs::write(&bad, "x,y,label\n1,oops,1\n2,3,-1\n").unwrap();
    let out = run(&["fit-exact", "--data", bad.to_str().unwrap(), "--k", "1"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn exit_code_3_on_degenerate_data() {
    // identical coordinates under two labels survive dedup; with zero
    // jitter they cannot span a hyperplane
    let data = tmp("degenerate.csv");
    std::fs::write(
        &data,
        "x,y,label\n0,0,1\n0,0,-1\n1,2,1\n3,1,-1\n2,4,1\n",
    )
    .unwrap();
    let out = run(&[
        "fit-exact", "--data", data.to_str().unwrap(), "--k", "1", "--sigma", "0",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("degenerate"), "{}", stderr(&out));

    // the default jitter resolves the tie
    let out = run(&["fit-exact", "--data", data.to_str().unwrap(), "--k", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn exit_code_4_on_budget_refusal() {
    let data = tmp("budget.csv");
    run(&["gen-data", "--n", "40", "--d", "2", "--seed", "8", "--out", data.to_str().unwrap()]);
    let out = run(&[
        "enum-solutions", "--data", data.to_str().unwrap(), "--k", "2",
        "--threshold", "5", "--budget", "1000",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("budget"), "{}", stderr(&out));
}

#[test]
fn enum_solutions_contains_the_optimum() {
    let data = tmp("enum.csv");
    run(&["gen-data", "--n", "10", "--d", "2", "--seed", "9", "--out", data.to_str().unwrap()]);
    let out = run(&["oracle", "--data", data.to_str().unwrap(), "--k", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let loss: u32 = text
        .lines()
        .find(|l| l.starts_with("loss "))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .parse()
        .unwrap();

    let out = run(&[
        "enum-solutions", "--data", data.to_str().unwrap(), "--k", "1",
        "--threshold", &(loss + 1).to_string(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines: Vec<serde_json::Value> = stdout(&out)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().any(|v| v["loss"] == loss));
    assert!(lines.iter().all(|v| v["loss"].as_u64().unwrap() <= loss as u64));
}

#[test]
fn gen_data_is_deterministic() {
    let a = tmp("det-a.csv");
    let b = tmp("det-b.csv");
    run(&["gen-data", "--n", "15", "--d", "3", "--seed", "11", "--out", a.to_str().unwrap()]);
    run(&["gen-data", "--n", "15", "--d", "3", "--seed", "11", "--out", b.to_str().unwrap()]);
    assert_eq!(
        std::fs::read(Path::new(&a)).unwrap(),
        std::fs::read(Path::new(&b)).unwrap()
    );
}
