//! Subcommand implementations. Each returns the process exit code.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use reqloop_core::dialogue::{read_transcript, run_session, SessionTranscript, StopReason, TRANSCRIPT_FILE};
use reqloop_core::judge::{expected_artifacts, judge_task, JudgeError};
use reqloop_core::reporting::{self, generate_report, ExportFormat, ReportError};
use reqloop_core::sandbox::collect_artifacts;
use reqloop_core::scoring::effective_score;
use reqloop_core::task::{load_benchmark, parse_task, validate_graph, Task};
use reqloop_core::workspace::{self, WorkspaceError};

use crate::backends;
use crate::config::{ProviderSpec, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USER: u8 = 1;
pub const EXIT_INFRA: u8 = 2;

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn user(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_USER,
            error: error.into(),
        }
    }

    pub fn infra(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INFRA,
            error: error.into(),
        }
    }
}

pub type CmdResult = Result<u8, Failure>;

fn read_task(path: &Path) -> Result<Task, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::user)?;
    parse_task(&text)
        .with_context(|| format!("task file {}", path.display()))
        .map_err(Failure::user)
}

fn task_id_of(text: &str) -> Option<String> {
    serde_json::from_str::<serde_json::Value>(text)
        .ok()?
        .get("id")?
        .as_str()
        .map(String::from)
}

/// Checks task files (given explicitly or found under the benchmark
/// directory). Prints one finding per line; exits 1 if there are any.
pub fn validate(config: &RunConfig, files: &[PathBuf], require_ground_truth: bool) -> CmdResult {
    let mut findings = Vec::new();
    let mut checked = 0;
    if files.is_empty() {
        let dir = config.benchmark_dir().map_err(Failure::user)?;
        let bench = load_benchmark(dir).map_err(Failure::user)?;
        checked += bench.tasks.len() + bench.failures.len();
        for f in &bench.failures {
            let id = f.task_id.as_deref().unwrap_or("?");
            findings.push(format!("{}: task {id}: {}", f.path.display(), f.error));
        }
        if require_ground_truth {
            for task in &bench.tasks {
                if !bench.ground_truth.contains_key(&task.id) {
                    findings.push(format!("task {}: missing ground truth", task.id));
                }
            }
        }
    } else {
        for path in files {
            checked += 1;
            let text = match fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    findings.push(format!("{}: {e}", path.display()));
                    continue;
                }
            };
            let id = task_id_of(&text).unwrap_or_else(|| "?".into());
            match parse_task(&text) {
                Ok(task) => {
                    for finding in validate_graph(task.graph()).findings {
                        findings.push(format!("{}: task {id}: {finding}", path.display()));
                    }
                    if require_ground_truth {
                        let gt = path.parent().unwrap_or(Path::new(".")).join("ground_truth").join(&task.id);
                        if !gt.is_dir() {
                            findings.push(format!("{}: task {id}: missing ground truth", path.display()));
                        }
                    }
                }
                Err(e) => findings.push(format!("{}: task {id}: {e}", path.display())),
            }
        }
    }
    for f in &findings {
        println!("{f}");
    }
    println!("{checked} task file(s) checked, {} finding(s)", findings.len());
    Ok(if findings.is_empty() { EXIT_OK } else { EXIT_USER })
}

/// Judges an existing workspace directory against a task and writes the
/// verdict map.
pub fn judge(config: &RunConfig, task_path: &Path, dir: &Path, verdicts_out: Option<&Path>) -> CmdResult {
    let task = read_task(task_path)?;
    let ws = match workspace::load_directory(dir, 0) {
        Ok(ws) => ws,
        Err(e @ (WorkspaceError::NoFilesFound | WorkspaceError::UnsafePath(_) | WorkspaceError::DuplicatePath(_))) => {
            return Err(Failure::user(anyhow!("{}: {e}", dir.display())))
        }
        Err(e) => return Err(Failure::infra(e)),
    };
    let backends = backends::build(config).map_err(Failure::infra)?;
    let artifacts = collect_artifacts(dir, &expected_artifacts(&task));
    let judgement = judge_task(
        &task,
        &ws,
        &artifacts,
        &*backends.session.judge,
        &*backends.session.embedder,
        &config.session.judge,
    )
    .map_err(|e| match e {
        JudgeError::Provider(_) => Failure::infra(e),
        other => Failure::user(other),
    })?;
    for v in judgement.verdicts.iter() {
        let why = v.justification.lines().next().unwrap_or("");
        println!("R{} {}: {why}", v.requirement_id, v.status);
    }
    let score = effective_score(task.graph(), &judgement.verdicts).map_err(Failure::user)?;
    println!("score {score}");

    let path = verdicts_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out.join(&task.id).join("verdicts.json"));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(Failure::infra)?;
    }
    let body = serde_json::to_string_pretty(&judgement.verdicts).expect("verdicts serialize");
    fs::write(&path, body + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::infra)?;
    Ok(EXIT_OK)
}

struct SessionJob {
    task: Task,
}

/// Runs sessions for the selected tasks and prints one summary line each.
pub fn session(config: &RunConfig, task_ids: &[String]) -> CmdResult {
    let mut config = config.clone();
    let replayed = match &config.provider {
        ProviderSpec::Replay(path) => Some(read_transcript(path).map_err(Failure::user)?),
        _ => None,
    };
    if let Some(t) = &replayed {
        // Reproduce the recorded run: same task and the same session settings.
        config.session = t.header.config.clone();
    }
    let dir = config.benchmark_dir().map_err(Failure::user)?;
    let bench = load_benchmark(dir).map_err(Failure::user)?;
    for f in &bench.failures {
        eprintln!("warning: skipping {}: {}", f.path.display(), f.error);
    }
    let wanted: Vec<String> = match &replayed {
        Some(t) => vec![t.task().id.clone()],
        None => task_ids.to_vec(),
    };
    let mut jobs = Vec::new();
    for id in &wanted {
        if bench.task(id).is_none() {
            return Err(Failure::user(anyhow!("task {id} not found in {}", dir.display())));
        }
    }
    for task in &bench.tasks {
        if !wanted.is_empty() && !wanted.contains(&task.id) {
            continue;
        }
        if config.session.guided && !bench.ground_truth.contains_key(&task.id) {
            return Err(Failure::user(anyhow!(
                "task {} has no ground truth; guided sessions need ground_truth/{}/",
                task.id,
                task.id
            )));
        }
        jobs.push(SessionJob { task: task.clone() });
    }
    if jobs.is_empty() {
        return Err(Failure::user(anyhow!("no tasks to run")));
    }

    let backends = backends::build(&config).map_err(Failure::infra)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<BTreeMap<usize, Result<SessionTranscript, String>>> = Mutex::new(BTreeMap::new());
    let workers = config.parallel.min(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let gt = bench.ground_truth.get(&job.task.id);
                let outcome = run_session(&job.task, gt, &config.session, &backends.session, &config.out)
                    .map_err(|e| e.to_string());
                results.lock().expect("result lock").insert(i, outcome);
            });
        }
    });

    let mut code = EXIT_OK;
    for (i, outcome) in results.into_inner().expect("result lock") {
        let task = &jobs[i].task;
        match outcome {
            Ok(t) => {
                let fmt = |s: Option<reqloop_core::Score>| s.map_or("n/a".to_string(), |s| s.to_string());
                let reason = t.stop_reason().map_or("incomplete".to_string(), |r| r.to_string());
                println!(
                    "{} {}: {} → {} {reason}",
                    task.id,
                    t.model_id(),
                    fmt(t.initial_score()),
                    fmt(t.final_score())
                );
                if let Some(path) = &t.path {
                    println!("transcript {}", path.display());
                }
                if t.stop_reason() == Some(StopReason::ProviderFailure) {
                    if let Some(err) = t.outcome.as_ref().and_then(|o| o.error.as_ref()) {
                        eprintln!("error: {}: {err}", task.id);
                    }
                    code = EXIT_INFRA;
                }
            }
            Err(e) => {
                eprintln!("error: {}: {e}", task.id);
                code = code.max(EXIT_INFRA);
            }
        }
    }
    Ok(code)
}

/// Transcript files below `dir`, sorted.
pub fn find_transcripts(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == TRANSCRIPT_FILE) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Readable, finished transcripts below `dir`, plus one warning per skipped
/// file.
fn load_transcripts(dir: &Path) -> Result<(Vec<SessionTranscript>, Vec<String>), Failure> {
    let paths = find_transcripts(dir)
        .with_context(|| format!("scanning {}", dir.display()))
        .map_err(Failure::user)?;
    let mut transcripts = Vec::new();
    let mut warnings = Vec::new();
    for path in paths {
        match read_transcript(&path) {
            Ok(t) if t.is_complete() => transcripts.push(t),
            Ok(_) => warnings.push(format!("{}: session did not finish", path.display())),
            Err(e) => warnings.push(e.to_string()),
        }
    }
    Ok((transcripts, warnings))
}

/// Builds the scorecard for every transcript under `dir` and writes
/// `scorecard.csv` and `scorecard.json` to the output directory.
pub fn aggregate(config: &RunConfig, dir: &Path) -> CmdResult {
    let (transcripts, warnings) = load_transcripts(dir)?;
    for w in &warnings {
        eprintln!("warning: skipped {w}");
    }
    let card = reporting::aggregate(&transcripts);
    fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))
        .map_err(Failure::infra)?;
    reporting::export(&card, ExportFormat::Tabular, &config.out.join("scorecard.csv")).map_err(Failure::infra)?;
    reporting::export(&card, ExportFormat::Tree, &config.out.join("scorecard.json")).map_err(Failure::infra)?;
    let agg = card.aggregates();
    for m in &agg.by_model {
        println!(
            "{}{}: {} session(s), mean passed {:.2}, mean score {:.3} → {:.3}",
            m.model_id,
            if m.guided { " (guided)" } else { "" },
            m.sessions,
            m.mean_passed,
            m.mean_initial_score,
            m.mean_final_score
        );
    }
    println!("{} session(s) aggregated, {} skipped", card.rows.len(), warnings.len());
    Ok(EXIT_OK)
}

/// Asks the analyzer for a report on one transcript; prints it and stores
/// it as `report.json` next to the transcript.
pub fn report(config: &RunConfig, transcript_path: &Path, output: Option<&Path>) -> CmdResult {
    let transcript = read_transcript(transcript_path).map_err(Failure::user)?;
    let backends = backends::build(config).map_err(Failure::infra)?;
    let report = generate_report(&transcript, &config.analyzer, &*backends.analyzer).map_err(|e| match e {
        ReportError::IncompleteTranscript(_) => Failure::user(e),
        other => Failure::infra(other),
    })?;
    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| transcript_path.with_file_name("report.json"));
    let body = serde_json::to_string_pretty(&report).expect("reports serialize");
    fs::write(&path, body + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::infra)?;
    println!("{}", report.full_text);
    Ok(EXIT_OK)
}

/// Writes a seeded, per-model sample of hints for offline grading.
pub fn export_hints(config: &RunConfig, dir: &Path, per_model: usize, output: Option<&Path>) -> CmdResult {
    let (transcripts, warnings) = load_transcripts(dir)?;
    for w in &warnings {
        eprintln!("warning: skipped {w}");
    }
    let refs: Vec<&SessionTranscript> = transcripts.iter().collect();
    let sample = reporting::export_hints_for_annotation(&refs, per_model, config.seed).map_err(Failure::user)?;
    for w in &sample.warnings {
        eprintln!("warning: {w}");
    }
    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.out.join("hints_for_annotation.jsonl"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))
            .map_err(Failure::infra)?;
    }
    fs::write(&path, sample.to_jsonl())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::infra)?;
    println!("{} hint(s) written to {}", sample.records.len(), path.display());
    Ok(EXIT_OK)
}
