use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = sseg(args);
    assert!(
        out.status.success(),
        "sseg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

fn gen(dir: &Path, category: &str, count: &str, overseg: &str) {
    ok(&[
        "gen", "--category", category, "--count", count, "--seed", "3", "--oversample-prob", overseg, "--points", "600",
        "--out", p(dir),
    ]);
}

fn error_line(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).expect("error line is JSON")
}

#[test]
fn rule_based_pipeline_scores_clean_data() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let pred = tmp.path().join("pred");
    let report = tmp.path().join("report.json");
    gen(&data, "toy-chair", "6", "0");
    ok(&["infer", "--rule-based", "--shape", p(&data), "--out", p(&pred)]);
    let out = ok(&["eval", "--pred", p(&pred), "--gt", p(&data), "--out", p(&report)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["shapes"], 6);
    assert!(r["ap_25"].as_f64().unwrap() >= 0.8, "{r}");
    assert_eq!(r["seg_map"].as_f64().unwrap(), 1.0);
}

#[test]
fn ground_truth_against_itself_is_perfect_and_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "table", "4", "0.5");
    let shapes = data.join("shapes");
    let (a, b) = (tmp.path().join("a.json"), tmp.path().join("b.json"));
    ok(&["eval", "--pred", p(&shapes), "--gt", p(&data), "--out", p(&a)]);
    ok(&["--jobs", "1", "eval", "--pred", p(&shapes), "--gt", p(&data), "--out", p(&b)]);
    let ra = std::fs::read(&a).unwrap();
    assert_eq!(ra, std::fs::read(&b).unwrap());
    let r: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(r["ap_25"], 1.0);
    assert_eq!(r["edge_error"], 0.0);
    assert_eq!(r["seg_map"], 1.0);
}

#[test]
fn metric_subset_limits_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "storage", "2", "0");
    let out = ok(&["eval", "--pred", p(&data.join("shapes")), "--gt", p(&data), "--metrics", "ee"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("EE"));
    assert!(!table.contains("AP@0.25"));
}

#[test]
fn duplicate_ranks_first_at_distance_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "chair", "5", "0");
    let shapes = data.join("shapes");
    // a renamed copy of shape 2 with its hierarchy
    let corpus = tmp.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for entry in std::fs::read_dir(&shapes).unwrap() {
        let e = entry.unwrap();
        std::fs::copy(e.path(), corpus.join(e.file_name())).unwrap();
    }
    for ext in ["shape.json", "hierarchy.json"] {
        let text = std::fs::read_to_string(shapes.join(format!("toy-chair-0002.{ext}"))).unwrap();
        std::fs::write(corpus.join(format!("twin.{ext}")), text.replace("toy-chair-0002", "twin")).unwrap();
    }
    let query = shapes.join("toy-chair-0002.shape.json");
    for mode in ["structure", "chamfer"] {
        let out = ok(&["retrieve", "--query", p(&query), "--corpus", p(&corpus), "--mode", mode, "--topk", "3"]);
        let hits: Value = serde_json::from_slice(&out.stdout).unwrap();
        let hits = hits.as_array().unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0]["name"], "twin", "{mode}");
        assert_eq!(hits[0]["structure_distance"], 0);
        assert!(hits.iter().all(|h| h["name"] != "toy-chair-0002"));
    }
}

#[test]
fn usage_errors_exit_2_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "chair", "1", "0");
    let out = sseg(&["eval", "--pred", p(&data), "--gt", p(&data), "--metrics", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = sseg(&["--jobs", "0", "eval", "--pred", p(&data), "--gt", p(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");
    let out = sseg(&["gen", "--category", "chair", "--count", "1", "--seed", "0", "--oversample-prob", "2", "--out", p(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");
}

#[test]
fn data_errors_exit_3_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.shape.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = sseg(&["infer", "--rule-based", "--shape", p(&bad), "--taxonomy", p(&bad), "--out", p(&tmp.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(3));
    let e = error_line(&out);
    assert!(e["message"].as_str().is_some());
    assert_ne!(e["error"], "usage");
    let missing = tmp.path().join("missing");
    let out = sseg(&["eval", "--pred", p(&missing), "--gt", p(&missing)]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn short_training_run_writes_artifacts_and_refines() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    gen(&data, "chair", "5", "1");
    let cfg = tmp.path().join("train.toml");
    std::fs::write(&cfg, "structure_epochs = 1\nmerge_epochs = 1\nbatch_size = 2\n").unwrap();
    ok(&["train", "--config", p(&cfg), "--data", p(&data), "--seed", "1", "--out", p(&model)]);
    for f in ["model.sseg", "taxonomy.json", "curves.csv", "report.json"] {
        assert!(model.join(f).exists(), "{f}");
    }
    let report: Value = serde_json::from_str(&std::fs::read_to_string(model.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["held_out_shapes"], 1);

    let shape = data.join("shapes").join("toy-chair-0000.shape.json");
    let out_dir = tmp.path().join("refined");
    ok(&["refine", "--model", p(&model), "--shape", p(&shape), "--out", p(&out_dir)]);
    for f in ["shape.json", "hierarchy.json", "decisions.jsonl"] {
        assert!(out_dir.join(format!("toy-chair-0000.{f}")).exists(), "{f}");
    }
    let pred = tmp.path().join("pred.json");
    ok(&["infer", "--model", p(&model), "--shape", p(&shape), "--out", p(&pred)]);
    assert!(pred.exists());
}
