use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn reqloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reqloop"))
        .args(args)
        .env_remove("REQLOOP_API_KEY")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_script(dir: &Path, judge: &[&str]) -> String {
    let path = dir.join("script.json");
    fs::write(&path, serde_json::json!({ "judge": judge }).to_string()).unwrap();
    format!("scripted:{}", path.display())
}

/// The repaired fixture solution laid out as a workspace directory.
fn fixture_workspace(dir: &Path) -> PathBuf {
    let ws = reqloop_core::parse_solution(&fs::read_to_string(fixtures().join("fig5_turn2.md")).unwrap(), 0).unwrap();
    let root = dir.join("ws");
    fs::create_dir_all(&root).unwrap();
    reqloop_core::workspace::materialize(&ws, &root).unwrap();
    root
}

#[test]
fn validate_fixture_benchmark() {
    let o = reqloop(&["--benchmark", s(&fixtures().join("bench")), "validate", "--require-ground-truth"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 finding(s)"));
}

#[test]
fn validate_reports_cycle_with_task_id() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loop.json");
    fs::write(
        &path,
        r#"{"id":"LOOP1","query":"q","category":"c","requirements":[
            {"id":0,"text":"a","category":"c","deps":[1]},
            {"id":1,"text":"b","category":"c","deps":[0]}]}"#,
    )
    .unwrap();
    let o = reqloop(&["validate", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("task LOOP1: cyclic dependency"), "{}", stdout(&o));
}

#[test]
fn validate_missing_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(fixtures().join("bench/S51.json"), dir.path().join("S51.json")).unwrap();
    let ok = reqloop(&["--benchmark", s(dir.path()), "validate"]);
    assert_eq!(ok.status.code(), Some(0));
    let o = reqloop(&["--benchmark", s(dir.path()), "validate", "--require-ground-truth"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("task S51: missing ground truth"));
}

#[test]
fn judge_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixture_workspace(dir.path());
    let script = write_script(dir.path(), &["SATISFIED: ok"; 5]);
    let verdicts = dir.path().join("verdicts.json");
    let o = reqloop(&[
        "--provider",
        &script,
        "judge",
        "--task",
        s(&fixtures().join("bench/S51.json")),
        "--workspace",
        s(&ws),
        "--verdicts",
        s(&verdicts),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.matches(" satisfied").count(), 5);
    assert!(out.contains("score 1.000"));
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(&verdicts).unwrap()).unwrap();
    assert_eq!(written.as_array().unwrap().len(), 5);
}

#[test]
fn judge_gates_descendants_of_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixture_workspace(dir.path());
    let script = write_script(dir.path(), &["SATISFIED: a", "SATISFIED: b", "UNSATISFIED: no embeddings"]);
    let o = reqloop(&[
        "--provider",
        &script,
        "--out",
        s(&dir.path().join("out")),
        "judge",
        "--task",
        s(&fixtures().join("bench/S51.json")),
        "--workspace",
        s(&ws),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("R2 unsatisfied"));
    assert!(out.contains("R3 gated"));
    assert!(out.contains("R4 gated"));
    assert!(out.contains("score 0.400"));
    assert!(dir.path().join("out/S51/verdicts.json").is_file());
}

#[test]
fn judge_empty_workspace() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let script = write_script(dir.path(), &[]);
    let o = reqloop(&[
        "--provider",
        &script,
        "judge",
        "--task",
        s(&fixtures().join("bench/S51.json")),
        "--workspace",
        s(&empty),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no files found"));
}

#[test]
fn judge_http_without_key_is_infrastructure_error() {
    let dir = tempfile::tempdir().unwrap();
    let ws = fixture_workspace(dir.path());
    let o = reqloop(&[
        "--provider",
        "http",
        "judge",
        "--task",
        s(&fixtures().join("bench/S51.json")),
        "--workspace",
        s(&ws),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn unguided_session_is_single_turn() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("script.json");
    let turn1 = fs::read_to_string(fixtures().join("fig5_turn1.md")).unwrap();
    fs::write(
        &script,
        serde_json::json!({
            "interviewee": [turn1],
            "judge": ["SATISFIED: a", "SATISFIED: b", "UNSATISFIED: c"],
        })
        .to_string(),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = reqloop(&[
        "--benchmark",
        s(&fixtures().join("bench")),
        "--out",
        s(&out),
        "--provider",
        &format!("scripted:{}", script.display()),
        "--unguided",
        "session",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("0.400 → 0.400 max_iterations"), "{}", stdout(&o));
    assert!(out.join("S51/gpt-4o-mini__unguided/turn_1").is_dir());
    assert!(!out.join("S51/gpt-4o-mini__unguided/turn_2").exists());
}

#[test]
fn zero_iterations_rejected() {
    let o = reqloop(&["--benchmark", s(&fixtures().join("bench")), "--max-iterations", "0", "session"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("max_iterations"));
}

#[test]
fn session_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let script = format!("scripted:{}", fixtures().join("fig5_session.json").display());
    let bench = fixtures().join("bench");
    let args = [
        "--benchmark",
        s(&bench),
        "--out",
        s(&out),
        "--provider",
        &script,
        "session",
    ];
    let first = reqloop(&args);
    let second = reqloop(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(stdout(&first), stdout(&second));
    assert!(!out.join("S51/gpt-4o-mini/turn_3").exists());
}

#[test]
fn aggregate_report_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let script = format!("scripted:{}", fixtures().join("fig5_session.json").display());
    let bench = fixtures().join("bench");
    let o = reqloop(&["--benchmark", s(&bench), "--out", s(&out), "--provider", &script, "session"]);
    assert_eq!(o.status.code(), Some(0));

    fs::create_dir_all(out.join("broken/model")).unwrap();
    fs::write(out.join("broken/model/transcript.jsonl"), "{not json\n").unwrap();
    let o = reqloop(&["--out", s(&out), "aggregate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("1 session(s) aggregated, 1 skipped"));
    assert!(stdout(&o).contains("gpt-4o-mini (guided): 1 session(s), mean passed 5.00"));
    let csv = fs::read_to_string(out.join("scorecard.csv")).unwrap();
    assert!(csv.starts_with("task_id,model_id,guided,initial_score,final_score,passed,total,category\n"));
    assert!(csv.contains("S51,gpt-4o-mini,true,0.400000,1.000000,5,5,Natural Language Processing"));
    assert!(out.join("scorecard.json").is_file());

    let transcript = out.join("S51/gpt-4o-mini/transcript.jsonl");
    let o = reqloop(&["--provider", &script, "report", "--transcript", s(&transcript)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Feedback sensitivity"));
    assert!(out.join("S51/gpt-4o-mini/report.json").is_file());

    let hints = dir.path().join("hints.jsonl");
    let o = reqloop(&["--out", s(&out), "--seed", "7", "export-hints", "--per-model", "5", "--output", s(&hints)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("1 hints available, 5 requested"));
    let lines = fs::read_to_string(&hints).unwrap();
    assert_eq!(lines.lines().count(), 1);
    let record: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(record["task_id"], "S51");
    assert!(record["grade"].is_null());
}

#[test]
fn aggregate_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = reqloop(&["--out", s(dir.path()), "aggregate"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(dir.path().join("scorecard.csv")).unwrap(),
        "task_id,model_id,guided,initial_score,final_score,passed,total,category\n"
    );
}

#[test]
fn export_hints_without_hints_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = reqloop(&["--out", s(dir.path()), "export-hints"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_rejects_credentials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "api_key = \"sk-live\"\n").unwrap();
    let o = reqloop(&["--config", s(&cfg), "--out", s(dir.path()), "aggregate"]);
    assert_eq!(o.status.code(), Some(1));
}
