use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hazardtm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hazardtm"))
        .current_dir(dir)
        .env_remove("HAZARDTM_OUTPUT_DIR")
        .env_remove("HAZARDTM_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = hazardtm(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, num_docs: &str) {
    ok(dir, &["synth", "--out", ".", "--num-docs", num_docs, "--seed", "5"]);
}

fn report<'a>(reports: &'a Value, source: &str) -> &'a Value {
    reports.as_array().unwrap().iter().find(|r| r["source"] == source).unwrap_or_else(|| panic!("no {source}"))
}

#[test]
fn synthetic_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "600");
    for cmd in ["ingest", "dedup", "featurize", "train", "sweep", "select", "classify", "ensemble"] {
        ok(dir, &["-c", "pipeline.toml", "--log-level", "quiet", cmd]);
    }
    let root = dir.join("output/flood");
    for v in ["tm-f1", "tm-b", "tm-p"] {
        assert!(root.join(format!("variants/{v}.toml")).exists());
        let preds = std::fs::read_to_string(root.join(format!("predictions/{v}.csv"))).unwrap();
        assert_eq!(preds.lines().count(), 1 + 600, "header plus one row per ingested document");
    }
    ok(dir, &["-c", "pipeline.toml", "--log-level", "quiet", "evaluate"]);
    let reports: Value = serde_json::from_str(&std::fs::read_to_string(root.join("eval/test.json")).unwrap()).unwrap();
    let f1 = report(&reports, "tm-f1")["scores"]["f1"].as_f64().unwrap();
    assert!(f1 >= 0.9, "test F1 {f1}");
    let p = |s: &str| report(&reports, s)["scores"]["precision"].as_f64().unwrap();
    assert!(p("tm-p") >= p("tm-f1"));
    assert!(p("ensemble") > p("baseline"));

    let topics = ok(dir, &["-c", "pipeline.toml", "dump-topics", "--variant", "tm-f1", "--theta-topic", "0"]);
    assert!(topics.contains("hochwasser"), "{topics}");
    assert!(root.join("topics/tm-f1-theta-topic0-test.csv").exists());

    for cmd in ["ingest", "dedup", "featurize", "train", "sweep", "select", "classify", "evaluate"] {
        let m: Value =
            serde_json::from_str(&std::fs::read_to_string(root.join(format!("manifests/{cmd}.json"))).unwrap()).unwrap();
        assert_eq!(m["seed"], 5);
        assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
        assert!(!m["outputs"].as_array().unwrap().is_empty(), "{cmd} manifest lists no outputs");
    }
}

#[test]
fn all_ones_predictions_reproduce_the_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "200");
    let gold = std::fs::read_to_string(dir.join("gold.csv")).unwrap();
    let mut ones = String::from("doc_id,label\n");
    for line in gold.lines().skip(1) {
        ones.push_str(&format!("{},1\n", line.split(',').next().unwrap()));
    }
    std::fs::write(dir.join("ones.csv"), ones).unwrap();
    ok(dir, &["-c", "pipeline.toml", "--log-level", "quiet", "evaluate", "--predictions", "ones.csv"]);
    let reports: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("output/flood/eval/test.json")).unwrap()).unwrap();
    assert_eq!(report(&reports, "ones")["scores"], report(&reports, "baseline")["scores"]);
}

#[test]
fn reruns_give_identical_models() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "200");
    for cmd in ["ingest", "dedup", "featurize", "train"] {
        ok(dir, &["-c", "pipeline.toml", "--log-level", "quiet", cmd]);
    }
    let model = dir.join("output/flood/model/model.bin");
    let first = std::fs::read(&model).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hazardtm"))
        .current_dir(dir)
        .env("HAZARDTM_THREADS", "1")
        .args(["-c", "pipeline.toml", "--log-level", "debug", "train"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(first == std::fs::read(&model).unwrap(), "model bytes differ between runs");
}

#[test]
fn invalid_config_fails_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "100");
    let cfg = std::fs::read_to_string(dir.join("pipeline.toml")).unwrap();
    std::fs::write(dir.join("bad.toml"), format!("{cfg}\n[dedup]\nthreshold = 1.5\n")).unwrap();
    let out = hazardtm(dir, &["-c", "bad.toml", "ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threshold"));
    assert!(!dir.join("output").exists());

    // Later stages refuse to start without the artifacts of earlier ones.
    let out = hazardtm(dir, &["-c", "pipeline.toml", "featurize"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("output").exists());

    let out = hazardtm(dir, &["-c", "pipeline.toml", "--hazard", "drought", "ingest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_dir_override_and_hazard_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth(dir, "100");
    let cfg = std::fs::read_to_string(dir.join("pipeline.toml")).unwrap();
    let twin = cfg.replace(
        "[features]",
        "[hazards.\"flood-copy\"]\ncorpus = \"corpus.jsonl\"\nkeywords = \"hazard.toml\"\n\n[features]",
    );
    std::fs::write(dir.join("two.toml"), twin).unwrap();
    let out = hazardtm(dir, &["-c", "two.toml", "ingest"]);
    assert_eq!(out.status.code(), Some(2), "several hazards need --hazard or --all-hazards");

    let elsewhere: PathBuf = dir.join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_hazardtm"))
        .current_dir(dir)
        .env("HAZARDTM_OUTPUT_DIR", &elsewhere)
        .args(["-c", "two.toml", "--log-level", "quiet", "--all-hazards", "ingest"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for h in ["flood", "flood-copy"] {
        assert!(elsewhere.join(h).join("ingest/corpus.jsonl").exists());
        assert!(elsewhere.join(h).join("manifests/ingest.json").exists());
    }
    assert_eq!(
        std::fs::read(elsewhere.join("flood/ingest/corpus.jsonl")).unwrap(),
        std::fs::read(elsewhere.join("flood-copy/ingest/corpus.jsonl")).unwrap()
    );
    assert!(!dir.join("output").exists());
}
