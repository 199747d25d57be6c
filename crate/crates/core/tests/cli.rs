use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctx-strata"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ctx-strata")
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("not json: {line}: {e}"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `rows` are (study, subject, y, score, pretest).
fn write_predictions(dir: &Path, rows: &[(&str, &str, u8, f64, Option<f64>)]) -> PathBuf {
    let path = dir.join("predictions.csv");
    let mut s = String::from("study_id,subject_id,label,y_raw,score,pretest\n");
    for (study, subject, y, score, pretest) in rows {
        let pt = pretest.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{study},{subject},Edema,{y},{score},{pt}\n"));
    }
    std::fs::write(&path, s).unwrap();
    path
}

fn synth(dir: &Path, extra: &str) -> PathBuf {
    let cfg = dir.join("synth.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"n": 400, "coupling": 1.0, "scorer": {{"kind": "shortcut"}}, "noise_sd": 0.05, "seed": 3{extra}}}"#
        ),
    )
    .unwrap();
    let out = dir.join("ds");
    let o = run(&["synth", "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn quantile_strata_on_three_records_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let preds = write_predictions(
        dir.path(),
        &[("s1", "a", 1, 0.9, Some(0.1)), ("s2", "b", 0, 0.2, Some(0.5)), ("s3", "c", 1, 0.7, Some(0.8))],
    );
    let o = run(&["eval-strata", "--predictions", p(&preds), "--iterations", "20"]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"], "insufficient_data");
    assert_eq!(e["exit_code"], 2);
}

#[test]
fn usage_errors_exit_two_with_json() {
    let o = run(&["eval-strata", "--iterations", "many"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "usage");
}

#[test]
fn missing_input_file() {
    let o = run(&["eval-strata", "--predictions", "/nonexistent/p.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "io");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), "");
    let preds = ds.join("predictions.csv");
    let mut outputs = Vec::new();
    let out = dir.path().join("run");
    for _ in 0..2 {
        let o = run(&["eval-strata", "--predictions", p(&preds), "--iterations", "300", "--seed", "4", "--out", p(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push((
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("long_form.csv")).unwrap(),
            o.stdout,
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let report: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    assert_eq!(report["manifest"]["seed"], 4);
    assert_eq!(report["manifest"]["command"], "eval-strata");
    assert_eq!(report["manifest"]["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(report["manifest"].get("timestamps").is_none());
    let header = String::from_utf8_lossy(&outputs[0].1);
    assert!(header.starts_with("analysis,label,kind,group,point,mean,ci_low,ci_high"));
}

#[test]
fn different_seed_changes_intervals() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), "");
    let preds = ds.join("predictions.csv");
    let a = run(&["eval-strata", "--predictions", p(&preds), "--iterations", "200", "--seed", "1"]);
    let b = run(&["eval-strata", "--predictions", p(&preds), "--iterations", "200", "--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn timestamp_is_opt_in() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), "");
    let out = dir.path().join("rep");
    let o = run(&[
        "eval-strata", "--predictions", p(&ds.join("predictions.csv")), "--iterations", "50", "--timestamp", "--out", p(&out),
    ]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["manifest"]["timestamps"]["started"].is_string());
}

#[test]
fn missing_phrase_list_for_label() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), r#", "notes": {}"#);
    let phrases = dir.path().join("phrases.json");
    std::fs::write(&phrases, r#"{"Fracture": ["fracture"]}"#).unwrap();
    let o = run(&[
        "eval-mentions",
        "--predictions", p(&ds.join("predictions.csv")),
        "--notes", p(&ds.join("notes.jsonl")),
        "--phrases", p(&phrases),
        "--iterations", "20",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "missing_phrase_list");
}

#[test]
fn eval_matched_without_pretest() {
    let dir = TempDir::new().unwrap();
    let preds = write_predictions(
        dir.path(),
        &[("s1", "a", 1, 0.9, None), ("s2", "b", 0, 0.2, None), ("s3", "c", 1, 0.7, None), ("s4", "d", 0, 0.1, None)],
    );
    let o = run(&["eval-matched", "--predictions", p(&preds), "--iterations", "20"]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_json(&o);
    assert_eq!(e["error"], "missing_pretest");
    assert!(e["message"].as_str().unwrap().contains("--text-model"));
}

#[test]
fn single_positive_is_matched_to_nearest_negative() {
    let dir = TempDir::new().unwrap();
    let preds = write_predictions(
        dir.path(),
        &[
            ("s1", "a", 1, 0.9, Some(0.52)),
            ("s2", "b", 0, 0.2, Some(0.1)),
            ("s3", "c", 0, 0.7, Some(0.5)),
            ("s4", "d", 0, 0.1, Some(0.9)),
        ],
    );
    let pairs = dir.path().join("pairs.csv");
    let o = run(&["match", "--predictions", p(&preds), "--out", p(&pairs)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&pairs).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "pos_study_id,neg_study_id,gap");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("s1,s3,"));
    assert!(dir.path().join("pairs.csv.manifest.json").exists());

    let out = dir.path().join("rep");
    let o = run(&["eval-matched", "--predictions", p(&preds), "--iterations", "100", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let label = &report["report"]["labels"][0];
    assert_eq!(label["matching"]["pairs"], 1);
    assert_eq!(label["matching"]["unmatched"], 2);
}

#[test]
fn ingest_then_store_round_trip() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), r#", "notes": {"history_mentions": 0.5}"#);
    let store = dir.path().join("store");
    let o = run(&[
        "ingest", "--predictions", p(&ds.join("predictions.csv")), "--notes", p(&ds.join("notes.jsonl")), "--out", p(&store),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["records.jsonl", "notes.jsonl", "manifest.json"] {
        assert!(store.join(f).exists(), "{f}");
    }
    let args = |input: Vec<&str>| {
        let mut a = vec!["eval-mentions", "--iterations", "100"];
        a.extend(input);
        run(&a)
    };
    let from_store = args(vec!["--store", p(&store)]);
    let from_files = args(vec!["--predictions", p(&ds.join("predictions.csv")), "--notes", p(&ds.join("notes.jsonl"))]);
    assert!(from_store.status.success(), "{}", String::from_utf8_lossy(&from_store.stderr));
    assert_eq!(from_store.stdout, from_files.stdout);
}

#[test]
fn stratify_writes_one_row_per_study() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), "");
    let out = dir.path().join("strata.csv");
    let o = run(&["stratify", "--predictions", p(&ds.join("predictions.csv")), "--mode", "quantile", "--out", p(&out)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 401);
    assert_eq!(text.lines().filter(|l| l.ends_with(",bottom25")).count(), 100);
    assert_eq!(text.lines().filter(|l| l.ends_with(",top25")).count(), 100);
}

#[test]
fn unknown_label_is_rejected() {
    let dir = TempDir::new().unwrap();
    let ds = synth(dir.path(), "");
    let o = run(&["eval-strata", "--predictions", p(&ds.join("predictions.csv")), "--labels", "Nope", "--iterations", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "config");
}

#[test]
fn calibrate_writes_monotone_map() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("scores.csv");
    let mut s = String::from("subject_id,score,y\n");
    for i in 0..200 {
        let score = i as f64 / 200.0;
        s.push_str(&format!("g{},{score},{}\n", i % 40, u8::from(i % 7 < (i * 7) / 200)));
    }
    std::fs::write(&table, s).unwrap();
    let map = dir.path().join("map.json");
    let o = run(&["calibrate", "--in", p(&table), "--out", p(&map)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: ctx_strata::calibration::IsotonicMap = serde_json::from_slice(&std::fs::read(&map).unwrap()).unwrap();
    assert!(m.values.windows(2).all(|w| w[0] <= w[1]));
}
