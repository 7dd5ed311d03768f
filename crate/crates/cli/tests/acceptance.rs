//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::Utc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reqloop_core::dialogue::{
    read_transcript, run_session, Hint, SessionConfig, SessionHeader, SessionOutcome, SessionProviders,
    SessionTranscript, StopReason, Turn,
};
use reqloop_core::judge::{judge_task, retrieve_best_chunk, JudgeConfig};
use reqloop_core::providers::{HashEmbedder, ScriptedProvider};
use reqloop_core::reporting::export_hints_for_annotation;
use reqloop_core::sandbox::{execute, truncation_marker, ExecutionLimits};
use reqloop_core::scoring::{evaluable_set, transition_delta, Status};
use reqloop_core::task::{load_benchmark, Benchmark, Requirement};
use reqloop_core::workspace::{parse_solution, parse_solution_bytes, serialize_solution, Chunk};
use reqloop_core::{effective_score, interactive_score, RequirementGraph, Task, VerdictMap};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn bench() -> Benchmark {
    load_benchmark(&fixtures().join("bench")).expect("fixture benchmark loads")
}

fn fig5() -> Task {
    bench().task("S51").expect("S51 fixture").clone()
}

fn requirement(id: usize, text: &str, deps: &[usize]) -> Requirement {
    Requirement {
        id,
        text: text.into(),
        category: "c".into(),
        deps: deps.iter().copied().collect(),
    }
}

// 1. Effective score equals a brute-force count over every assignment.

fn random_dag(rng: &mut ChaCha8Rng) -> RequirementGraph {
    let m = rng.random_range(1..=10);
    let density: f64 = rng.random_range(0.0..0.7);
    let reqs = (0..m)
        .map(|j| {
            let deps: Vec<usize> = (0..j).filter(|_| rng.random_bool(density)).collect();
            requirement(j, "r", &deps)
        })
        .collect();
    RequirementGraph::new(reqs)
}

/// A requirement counts iff it and every ancestor is satisfied.
fn brute_force_passed(graph: &RequirementGraph, sat: &[bool]) -> u32 {
    let m = graph.len();
    let mut count = 0;
    for j in 0..m {
        let mut seen = vec![false; m];
        let mut stack = vec![j];
        let mut ok = true;
        while let Some(v) = stack.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            ok &= sat[v];
            stack.extend(graph.requirement(v).unwrap().deps.iter().copied());
        }
        count += u32::from(ok);
    }
    count
}

fn scoring_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut assignments = 0u64;
    for _ in 0..200 {
        let graph = random_dag(&mut rng);
        let m = graph.len();
        for mask in 0u32..(1 << m) {
            let sat: Vec<bool> = (0..m).map(|i| mask >> i & 1 == 1).collect();
            let score = effective_score(&graph, &VerdictMap::from_outcomes(&sat)).unwrap();
            assert_eq!(score.passed, brute_force_passed(&graph, &sat), "mask {mask:b}");
            assert_eq!(score.total as usize, m);
            assignments += 1;
        }
    }
    assert!(assignments >= 200);
    assert!(start.elapsed() < Duration::from_secs(60));
}

// 2. The sentiment-analysis example.

fn worked_example() {
    let task = fig5();
    let g = task.graph();
    let initial = VerdictMap::from_outcomes(&[true, true, false, true, true]);
    let s = effective_score(g, &initial).unwrap();
    assert_eq!((s.passed, s.total), (2, 5));
    assert_eq!(s.to_string(), "0.400");
    assert_eq!(evaluable_set(g, &initial).unwrap(), BTreeSet::from([0, 1, 2]));
    let repaired = VerdictMap::from_outcomes(&[true; 5]);
    assert_eq!(interactive_score(g, &repaired).unwrap().to_string(), "1.000");
    let delta = transition_delta(&initial, &repaired, g).unwrap();
    assert_eq!(delta.improved, BTreeSet::from([2, 3, 4]));
    assert!(delta.regressed.is_empty());
}

// 3. Solution parser round trip and fuzzing.

fn corpus() -> Vec<(String, String)> {
    let mut files: Vec<_> = fs::read_dir(fixtures().join("solutions"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.display().to_string(), fs::read_to_string(&p).unwrap()))
        .collect()
}

fn mutate(rng: &mut ChaCha8Rng, base: &[u8]) -> Vec<u8> {
    const SPICE: &[&[u8]] = &[b"```", b"````", b"\n", b"# ", b"// ", b"../", b"/", b"\0", b"\xff\xfe", b"plaintext", b"execute_workspace.sh"];
    let mut bytes = base.to_vec();
    for _ in 0..rng.random_range(1..=8) {
        let pos = if bytes.is_empty() { 0 } else { rng.random_range(0..=bytes.len()) };
        match rng.random_range(0..5) {
            0 if pos < bytes.len() => bytes[pos] = rng.random(),
            1 => bytes.insert(pos, rng.random()),
            2 if pos < bytes.len() => {
                let end = (pos + rng.random_range(1..64)).min(bytes.len());
                bytes.drain(pos..end);
            }
            3 => {
                let s = SPICE[rng.random_range(0..SPICE.len())];
                bytes.splice(pos..pos, s.iter().copied());
            }
            _ => bytes.truncate(pos),
        }
    }
    bytes
}

fn parser_round_trip_and_fuzz() {
    let start = Instant::now();
    let corpus = corpus();
    assert!(corpus.len() >= 20, "corpus has {} texts", corpus.len());
    for (name, text) in &corpus {
        let ws = parse_solution(text, 1).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = parse_solution(&serialize_solution(&ws), 1).unwrap();
        assert_eq!(again, ws, "{name}");
    }
    let previous_hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut crashes = 0;
    for _ in 0..10_000 {
        let (_, base) = &corpus[rng.random_range(0..corpus.len())];
        let input = mutate(&mut rng, base.as_bytes());
        if panic::catch_unwind(|| parse_solution_bytes(&input, 1)).is_err() {
            crashes += 1;
        }
    }
    panic::set_hook(previous_hook);
    assert_eq!(crashes, 0);
    assert!(start.elapsed() < Duration::from_secs(120));
}

// 4. End-to-end scripted session through the binary, then replay.

fn verdict_json(t: &SessionTranscript) -> Vec<(String, String)> {
    t.turns
        .iter()
        .map(|turn| {
            (
                serde_json::to_string(&turn.verdicts).unwrap(),
                serde_json::to_string(&turn.score).unwrap(),
            )
        })
        .collect()
}

fn reqloop(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_reqloop"))
        .args(args)
        .env_remove("REQLOOP_API_KEY")
        .output()
        .expect("binary runs")
}

fn end_to_end_session() {
    let start = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let bench_dir = fixtures().join("bench");
    let script = format!("scripted:{}", fixtures().join("fig5_session.json").display());
    let run = reqloop(&[
        "--benchmark",
        bench_dir.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--provider",
        &script,
        "--network",
        "block",
        "session",
    ]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&run.stderr));
    assert!(stdout.contains("0.400 → 1.000 solved"), "{stdout}");
    let transcript_path = out.path().join("S51/gpt-4o-mini/transcript.jsonl");
    let original = read_transcript(&transcript_path).unwrap();
    assert_eq!(original.turns.len(), 2);

    let replay_out = tempfile::tempdir().unwrap();
    let replay = format!("replay:{}", transcript_path.display());
    let run = reqloop(&[
        "--benchmark",
        bench_dir.to_str().unwrap(),
        "--out",
        replay_out.path().to_str().unwrap(),
        "--provider",
        &replay,
        "session",
    ]);
    assert!(run.status.success());
    assert!(String::from_utf8_lossy(&run.stdout).contains("0.400 → 1.000 solved"));
    let replayed = read_transcript(&replay_out.path().join("S51/gpt-4o-mini/transcript.jsonl")).unwrap();
    assert_eq!(verdict_json(&replayed), verdict_json(&original));
    assert!(start.elapsed() < Duration::from_secs(10));
}

// 5. The interviewer's sentinel ends the session at its turn.

fn scripted_session(hints: Vec<String>) -> SessionTranscript {
    let b = bench();
    let task = b.task("S51").unwrap();
    let solution = fs::read_to_string(fixtures().join("fig5_turn1.md")).unwrap();
    let providers = SessionProviders {
        interviewer: Arc::new(ScriptedProvider::texts(hints)),
        interviewee: Arc::new(ScriptedProvider::texts(vec![solution; 5])),
        judge: Arc::new(ScriptedProvider::texts(vec!["UNSATISFIED: dataset never loaded"; 5])),
        embedder: Arc::new(HashEmbedder::default()),
    };
    let out = tempfile::tempdir().unwrap();
    run_session(task, b.ground_truth.get("S51"), &SessionConfig::default(), &providers, out.path()).unwrap()
}

fn termination_sentinel() {
    for k in 1..=3 {
        let mut hints: Vec<String> = (1..k).map(|i| format!("Check requirement R0 ({i}).")).collect();
        hints.push("INTERVIEW IS OVER.".into());
        let t = scripted_session(hints);
        assert_eq!(t.turns.len(), k, "k = {k}");
        assert_eq!(t.stop_reason(), Some(StopReason::Solved), "k = {k}");
    }
    let t = scripted_session(vec!["Check requirement R0.".to_string(); 4]);
    assert_eq!(t.turns.len(), 5);
    assert_eq!(t.stop_reason(), Some(StopReason::MaxIterations));
}

// 6. Wall-clock limit, output cap and process cleanup.

fn group_members(pgid: i32) -> Vec<i32> {
    let mut out = Vec::new();
    for entry in fs::read_dir("/proc").unwrap().flatten() {
        let Ok(pid) = entry.file_name().to_string_lossy().parse::<i32>() else {
            continue;
        };
        let Ok(stat) = fs::read_to_string(format!("/proc/{pid}/stat")) else {
            continue;
        };
        let Some((_, rest)) = stat.rsplit_once(')') else {
            continue;
        };
        let fields: Vec<&str> = rest.split_whitespace().collect();
        if fields.first() != Some(&"Z") && fields.get(2).and_then(|f| f.parse().ok()) == Some(pgid) {
            out.push(pid);
        }
    }
    out
}

fn no_survivors(pgid: i32) -> bool {
    let deadline = Instant::now() + Duration::from_secs(2);
    while Instant::now() < deadline {
        if group_members(pgid).is_empty() {
            return true;
        }
        std::thread::sleep(Duration::from_millis(50));
    }
    group_members(pgid).is_empty()
}

fn sandbox_enforcement() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("execute_workspace.sh");
    let limits = |wall| ExecutionLimits {
        wall_seconds: wall,
        ..ExecutionLimits::default()
    };

    fs::write(&script, "echo $$\nsleep 100 &\nsleep 100\n").unwrap();
    let start = Instant::now();
    let r = execute(dir.path(), &limits(1.0)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(r.timed_out);
    assert!((1.0..=3.0).contains(&elapsed), "elapsed {elapsed}");
    assert!(no_survivors(r.stdout.trim().parse().unwrap()));

    fs::write(&script, "echo $$ >&2\nhead -c 10485760 /dev/zero | tr '\\0' 'x'\n").unwrap();
    let r = execute(dir.path(), &limits(60.0)).unwrap();
    let cap = 1 << 20;
    assert!(r.stdout_truncated);
    assert_eq!(&r.stdout[cap..], truncation_marker(cap));
    assert!(r.stdout.as_bytes()[..cap].iter().all(|&b| b == b'x'));
    assert!(no_survivors(r.stderr.trim().parse().unwrap()));
}

// 7. Retrieval agrees with an exhaustive cosine scan.

const WORDS: &[&str] = &[
    "load", "dataset", "clean", "token", "train", "model", "svm", "accuracy", "save", "plot", "vector", "embed",
    "split", "test", "metric", "file", "result", "config", "parse", "score",
];

fn words(rng: &mut ChaCha8Rng, count: std::ops::Range<usize>) -> String {
    let n = rng.random_range(count);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn chunk(id: usize, text: String) -> Chunk {
    Chunk {
        id,
        file_path: format!("f{id}.py"),
        start_line: 1,
        end_line: 1,
        text,
    }
}

fn retrieval_correctness() {
    let embedder = HashEmbedder::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let req = requirement(0, &words(&mut rng, 1..6), &[]);
        let n = rng.random_range(1..12);
        let chunks: Vec<Chunk> = (0..n).map(|i| chunk(i, words(&mut rng, 1..20))).collect();
        let hit = retrieve_best_chunk(&req, &chunks, &embedder, "hash").unwrap();
        let q = embedder.embed_text(&req.text);
        let mut best = (0, f64::NEG_INFINITY);
        for c in &chunks {
            let s = cosine(&q, &embedder.embed_text(&c.text));
            if s > best.1 {
                best = (c.id, s);
            }
        }
        assert_eq!(hit.chunk_id, best.0);
    }
    // Identical chunks tie; the lowest id wins wherever the copies sit.
    let req = requirement(0, "train svm model", &[]);
    let tied = vec![
        chunk(0, "plot result".into()),
        chunk(1, "train svm model".into()),
        chunk(2, "parse config".into()),
        chunk(3, "train svm model".into()),
    ];
    assert_eq!(retrieve_best_chunk(&req, &tied, &embedder, "hash").unwrap().chunk_id, 1);
    let all_same: Vec<Chunk> = (0..5).map(|i| chunk(i, "save file".into())).collect();
    assert_eq!(retrieve_best_chunk(&req, &all_same, &embedder, "hash").unwrap().chunk_id, 0);
}

// 8. Gated requirements never reach the judge.

fn gating_frugality() {
    let reqs = vec![
        requirement(0, "load the dataset", &[]),
        requirement(1, "configure the environment", &[]),
        requirement(2, "write the config file", &[]),
        requirement(3, "clean the dataset", &[0]),
        requirement(4, "train the model on clean data", &[1, 3]),
        requirement(5, "save results", &[2]),
    ];
    let task = Task::new("G6", "six requirements", "test", RequirementGraph::new(reqs)).unwrap();
    let ws = parse_solution("```python\n# src/main.py\ndef load():\n    pass\n```\n", 1).unwrap();
    let judge = ScriptedProvider::texts(vec![
        "UNSATISFIED: no loader",
        "UNSATISFIED: no environment",
        "SATISFIED: config written",
        "SATISFIED: results saved",
    ]);
    let judgement = judge_task(
        &task,
        &ws,
        &Default::default(),
        &judge,
        &HashEmbedder::default(),
        &JudgeConfig::default(),
    )
    .unwrap();
    let non_gated = judgement.verdicts.iter().filter(|v| v.status != Status::Gated).count();
    assert_eq!(non_gated, 4);
    assert_eq!(judge.calls(), non_gated);
    assert_eq!(judgement.verdicts.status(3), Some(Status::Gated));
    assert_eq!(judgement.verdicts.status(4), Some(Status::Gated));
}

// 9. Seeded, stratified hint sampling.

fn hint_pool() -> Vec<SessionTranscript> {
    let task = fig5();
    let mut out = Vec::new();
    for m in 0..5 {
        for h in 0..30 {
            let mut config = SessionConfig::default();
            config.interviewee.model = format!("model-{m}");
            let mut t = task.clone();
            t.id = format!("T{h:02}");
            let verdicts = VerdictMap::from_outcomes(&[true, false, false, false, false]);
            let turn = Turn {
                iteration: 1,
                solution_text: String::new(),
                parse_error: None,
                workspace_dir: None,
                files: vec![],
                execution: None,
                execution_error: None,
                score: effective_score(task.graph(), &verdicts).ok(),
                verdicts: Some(verdicts),
                judge_details: vec![],
                hint: Some(Hint::from_reply(1, format!("hint {h} for model {m}"))),
            };
            out.push(SessionTranscript {
                header: SessionHeader {
                    task: t,
                    config,
                    started_at: Utc::now(),
                },
                turns: vec![turn],
                outcome: Some(SessionOutcome {
                    stop_reason: StopReason::MaxIterations,
                    initial_score: None,
                    final_score: None,
                    error: None,
                    usage: Default::default(),
                    finished_at: Utc::now(),
                }),
                path: None,
            });
        }
    }
    out
}

fn annotation_determinism() {
    let pool = hint_pool();
    let refs: Vec<&SessionTranscript> = pool.iter().collect();
    let a = export_hints_for_annotation(&refs, 20, 7).unwrap();
    let b = export_hints_for_annotation(&refs, 20, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.records.len(), 100);
    for m in 0..5 {
        let model = format!("model-{m}");
        assert_eq!(a.records.iter().filter(|r| r.model_id == model).count(), 20);
    }
    assert!(a.records.iter().all(|r| r.grade.is_none()));
}

fn main() {
    let criteria: [(&str, fn()); 9] = [
        ("scoring oracle equivalence", scoring_oracle),
        ("worked example scores", worked_example),
        ("parser round trip and fuzz", parser_round_trip_and_fuzz),
        ("end-to-end scripted session", end_to_end_session),
        ("termination sentinel", termination_sentinel),
        ("sandbox enforcement", sandbox_enforcement),
        ("retrieval correctness", retrieval_correctness),
        ("gating frugality", gating_frugality),
        ("annotation export determinism", annotation_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("acceptance {} {name}: PASS ({secs:.2}s)", i + 1),
            Err(_) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL ({secs:.2}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
