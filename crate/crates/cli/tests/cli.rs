use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn closure(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_closure")).current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = closure(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn commands_compose_into_a_perfect_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "1", "gen-scenes", "--num", "100", "--out", "scenes.json"]);
    assert_eq!(json(&d.join("scenes.json"))["scenes"].as_array().unwrap().len(), 100);
    ok(d, &["--seed", "1", "gen-questions", "--scenes", "scenes.json", "--per-test", "12", "--out", "q.json"]);
    assert_eq!(json(&d.join("q.json"))["questions"].as_array().unwrap().len(), 7 * 12);
    ok(d, &["parse", "--questions", "q.json", "--out", "programs.json"]);
    ok(d, &["execute", "--programs", "programs.json", "--scenes", "scenes.json", "--out", "pred.json"]);
    let report: Value =
        serde_json::from_slice(&ok(d, &["evaluate", "--dataset", "q.json", "--pred", "pred.json"])).unwrap();
    let families = report["families"].as_array().unwrap();
    assert_eq!(families.len(), 7);
    assert!(families.iter().all(|f| f["mean"] == 1.0));

    // pipeline gives the same predictions as parse + execute
    ok(d, &["pipeline", "--questions", "q.json", "--scenes", "scenes.json", "--out", "pipe.json"]);
    assert_eq!(json(&d.join("pipe.json")), json(&d.join("pred.json")));
}

#[test]
fn scene_generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(dir.path(), &["--seed", "4", "gen-scenes", "--num", "20"]);
    let b = ok(dir.path(), &["--seed", "4", "gen-scenes", "--num", "20"]);
    let c = ok(dir.path(), &["--seed", "5", "gen-scenes", "--num", "20"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn oversampling_multiplies_the_few_shot_records() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "2", "gen-scenes", "--num", "60", "--split", "train", "--out", "s.json"]);
    ok(d, &["--seed", "2", "gen-questions", "--scenes", "s.json", "--per-test", "2", "--out", "few.json"]);
    ok(d, &["--seed", "2", "oversample", "--closure", "few.json", "--factor", "5", "--out", "mix.json"]);
    assert_eq!(json(&d.join("mix.json"))["questions"].as_array().unwrap().len(), 14 * 5);
}

#[test]
fn gradcheck_passes_and_reports_every_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let results: Value = serde_json::from_slice(&ok(dir.path(), &["gradcheck"])).unwrap();
    let results = results.as_array().unwrap();
    assert_eq!(results.len(), 7);
    assert!(results.iter().all(|r| r["report"]["max_relative_error"].as_f64().unwrap() < 1e-4));
}

#[test]
fn failures_print_one_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = closure(dir.path(), &["evaluate", "--dataset", "missing.json", "--pred", "p.json"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    let line: Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(line["error"]["command"], "evaluate");
    assert!(line["error"]["message"].as_str().unwrap().contains("missing.json"));

    let out = closure(dir.path(), &["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
    let line: Value = serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(line["error"]["kind"], "usage");
}

#[test]
fn unknown_prediction_indices_are_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["--seed", "3", "gen-scenes", "--num", "50", "--out", "s.json"]);
    ok(d, &["--seed", "3", "gen-questions", "--scenes", "s.json", "--per-test", "1", "--out", "q.json"]);
    let bogus = r#"{"run_id":"x","predictions":[{"question_index":999,"answer":"yes"}]}"#;
    std::fs::write(d.join("p.json"), bogus).unwrap();
    let out = closure(d, &["evaluate", "--dataset", "q.json", "--pred", "p.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("999"));
}
