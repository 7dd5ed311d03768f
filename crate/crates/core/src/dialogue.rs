//! The interviewer/interviewee loop.
//!
//! Each iteration the interviewee's reply is parsed, materialized into a
//! fresh `turn_<t>/` directory, executed, judged and scored. The loop stops
//! when every requirement passes, when the interviewer declares the
//! interview over, or after `max_iterations` turns. Otherwise the
//! interviewer produces one hint and the interviewee re-emits a full
//! solution.
//!
//! The transcript is a JSON-lines file written as the session runs: a
//! header record, one record per finished turn and an end record.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{expected_artifacts, judge_task, JudgeConfig, JudgeError, JudgeVerdict, Judgement};
use crate::prompts::{self, render, TemplateError};
use crate::providers::{
    ChatMessage, HashEmbedder, Provider, ProviderError, ProviderRequest, RequestPayload, ReplayProvider, Usage,
};
use crate::sandbox::{collect_artifacts, execute, ExecutionLimits, ExecutionResult};
use crate::scoring::{effective_score, Score, VerdictMap};
use crate::task::{GroundTruth, Task};
use crate::workspace::{file_listing, materialize, parse_solution, serialize_solution, SolutionWorkspace};

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("a terminal hint cannot be answered with a revision")]
    TerminalHint,
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("transcript {path}: {message}")]
    Transcript { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DialogueError + '_ {
    move |source| DialogueError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentRole {
    Interviewer,
    Interviewee,
    Analyzer,
    Judge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub provider: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub role: AgentRole,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
}

fn default_timeout() -> f64 {
    180.0
}

impl AgentConfig {
    fn with(role: AgentRole, model: &str, temperature: f64, max_output_tokens: u32) -> Self {
        Self {
            provider: "http".into(),
            model: model.into(),
            temperature,
            max_output_tokens,
            role,
            timeout_seconds: default_timeout(),
        }
    }

    /// Temperature 0.3, 2000 output tokens.
    pub fn interviewer(model: &str) -> Self {
        Self::with(AgentRole::Interviewer, model, 0.3, 2000)
    }

    /// Temperature 0.3, 5000 output tokens.
    pub fn interviewee(model: &str) -> Self {
        Self::with(AgentRole::Interviewee, model, 0.3, 5000)
    }

    pub fn analyzer(model: &str) -> Self {
        Self::with(AgentRole::Analyzer, model, 0.3, 2000)
    }

    pub fn judge(model: &str) -> Self {
        Self::with(AgentRole::Judge, model, 0.0, 512)
    }

    pub fn validate(&self) -> Result<(), DialogueError> {
        if self.temperature.is_nan() || self.temperature < 0.0 || self.max_output_tokens == 0 || self.model.trim().is_empty() {
            return Err(DialogueError::Config(format!(
                "{:?} agent needs a model, temperature >= 0 and a positive token limit",
                self.role
            )));
        }
        Ok(())
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> ProviderRequest {
        ProviderRequest {
            model: self.model.clone(),
            payload: RequestPayload::Chat { messages },
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            timeout_seconds: self.timeout_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hint {
    pub iteration: usize,
    pub text: String,
    pub terminal: bool,
}

impl Hint {
    pub fn from_reply(iteration: usize, reply: String) -> Self {
        let terminal = reply.contains(prompts::TERMINATION_SENTINEL);
        Self {
            iteration,
            text: reply,
            terminal,
        }
    }
}

/// The problem as shown to both agents: the query plus the requirement list.
pub fn render_problem(task: &Task) -> String {
    let mut out = task.query.trim_end().to_string();
    out.push_str("\n\nRequirements:\n");
    for r in task.requirements() {
        let deps = if r.deps.is_empty() {
            "none".to_string()
        } else {
            r.deps.iter().map(|d| format!("R{d}")).collect::<Vec<_>>().join(", ")
        };
        out.push_str(&format!("- R{}: {} (depends on: {deps})\n", r.id, r.text));
    }
    out.trim_end().to_string()
}

/// System prompt, guidelines with problem and reference solution, and the
/// acknowledgment restating the problem.
pub fn build_interviewer_context(task: &Task, ground_truth: &GroundTruth) -> Result<Vec<ChatMessage>, DialogueError> {
    let problem = render_problem(task);
    let reference = if ground_truth.workspace.files.is_empty() {
        String::new()
    } else {
        serialize_solution(&ground_truth.workspace)
    };
    let guidelines = render(
        prompts::INTERVIEWER_GUIDELINES,
        &[("problem", &problem), ("reference_solution", reference.trim_end())],
    )?;
    let ack = render(prompts::INTERVIEWER_ACKNOWLEDGMENT, &[("problem", &problem)])?;
    Ok(vec![
        ChatMessage::system(prompts::INTERVIEWER_SYSTEM),
        ChatMessage::assistant(guidelines),
        ChatMessage::assistant(ack),
    ])
}

/// System prompt, format instructions and problem statement.
pub fn build_interviewee_context(task: &Task, guided: bool) -> Vec<ChatMessage> {
    let problem = render_problem(task);
    let (system, template) = if guided {
        (prompts::INTERVIEWEE_SYSTEM_GUIDED, prompts::INTERVIEWEE_PROBLEM_GUIDED)
    } else {
        (prompts::INTERVIEWEE_SYSTEM_UNGUIDED, prompts::INTERVIEWEE_PROBLEM_UNGUIDED)
    };
    vec![
        ChatMessage::system(system),
        ChatMessage::user(prompts::INTERVIEWEE_INSTRUCTION),
        ChatMessage::user(render(template, &[("query", &problem)]).expect("task query is non-empty")),
    ]
}

/// What the interviewer is shown about one turn.
#[derive(Debug, Clone, Copy)]
pub struct TurnView<'a> {
    pub iteration: usize,
    pub solution_text: &'a str,
    pub workspace: Option<&'a SolutionWorkspace>,
    pub parse_error: Option<&'a str>,
    pub execution: Option<&'a ExecutionResult>,
    pub execution_error: Option<&'a str>,
    pub verdicts: Option<&'a VerdictMap>,
}

const OUTPUT_EXCERPT: usize = 2000;

/// Last `max` bytes of `text`, on a char boundary.
fn tail(text: &str, max: usize) -> &str {
    if text.len() <= max {
        return text;
    }
    let mut start = text.len() - max;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    &text[start..]
}

fn requirement_lines(task: &Task, verdicts: &VerdictMap) -> String {
    task.requirements()
        .iter()
        .map(|r| match verdicts.get(r.id) {
            Some(v) => {
                let why = v.justification.lines().next().unwrap_or("");
                format!("- R{} {}: {}", r.id, v.status, why)
            }
            None => format!("- R{} not judged", r.id),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn turn_message(task: &Task, view: &TurnView<'_>) -> String {
    let mut msg = format!("Candidate solution (iteration {}):\n\n{}\n", view.iteration, view.solution_text.trim_end());
    if let Some(err) = view.parse_error {
        msg.push_str(&format!(
            "\nThe solution could not be parsed into files: {err}. Every file must be a fenced code block whose first line is a `# path` header.\n"
        ));
    }
    match (view.execution, view.execution_error) {
        (Some(exec), _) => {
            msg.push_str(&format!(
                "\nExecution of execute_workspace.sh: exit {:?}, {:.1} s{}\n",
                exec.exit_status,
                exec.wall_time,
                if exec.timed_out { ", timed out" } else { "" }
            ));
            if !exec.stdout.trim().is_empty() {
                msg.push_str(&format!("stdout (tail):\n{}\n", tail(&exec.stdout, OUTPUT_EXCERPT).trim_end()));
            }
            if !exec.stderr.trim().is_empty() {
                msg.push_str(&format!("stderr (tail):\n{}\n", tail(&exec.stderr, OUTPUT_EXCERPT).trim_end()));
            }
        }
        (None, Some(err)) => msg.push_str(&format!("\nExecution did not run: {err}\n")),
        (None, None) => {}
    }
    if let Some(verdicts) = view.verdicts {
        msg.push_str(&format!("\nRequirement status:\n{}\n", requirement_lines(task, verdicts)));
    }
    msg
}

fn turn_summary(task: &Task, view: &TurnView<'_>) -> String {
    let files = match (view.workspace, view.parse_error) {
        (Some(ws), _) => file_listing(ws),
        (None, Some(err)) => format!("(unparseable: {err})"),
        (None, None) => "(no files)".into(),
    };
    let failing = view
        .verdicts
        .and_then(|v| v.failed(task.graph()).ok())
        .map(|ids| {
            if ids.is_empty() {
                "none".to_string()
            } else {
                ids.iter().map(|i| format!("R{i}")).collect::<Vec<_>>().join(", ")
            }
        })
        .unwrap_or_else(|| "not judged".into());
    format!(
        "Candidate solution (iteration {}), files:\n{files}\nRequirements not passing: {failing}",
        view.iteration
    )
}

#[derive(Debug, Clone)]
struct Exchange {
    summary: String,
    reply: String,
}

/// Interviewer conversation. Earlier turns are replayed as file listings;
/// only the newest solution is shown in full.
pub struct InterviewerState {
    config: AgentConfig,
    base: Vec<ChatMessage>,
    exchanges: Vec<Exchange>,
    pub usage: Usage,
}

impl InterviewerState {
    pub fn new(task: &Task, ground_truth: &GroundTruth, config: AgentConfig) -> Result<Self, DialogueError> {
        Ok(Self {
            base: build_interviewer_context(task, ground_truth)?,
            config,
            exchanges: Vec::new(),
            usage: Usage::default(),
        })
    }

    pub fn messages_for(&self, current: String) -> Vec<ChatMessage> {
        let mut messages = self.base.clone();
        for ex in &self.exchanges {
            messages.push(ChatMessage::user(ex.summary.clone()));
            messages.push(ChatMessage::assistant(ex.reply.clone()));
        }
        messages.push(ChatMessage::user(current));
        messages
    }

    /// Full conversation with summaries for past turns; used for reports.
    pub fn history(&self) -> Vec<ChatMessage> {
        let mut messages = self.base.clone();
        for ex in &self.exchanges {
            messages.push(ChatMessage::user(ex.summary.clone()));
            messages.push(ChatMessage::assistant(ex.reply.clone()));
        }
        messages
    }
}

/// Asks the interviewer for the next hint about `latest`.
pub fn generate_hint(
    state: &mut InterviewerState,
    task: &Task,
    latest: &TurnView<'_>,
    provider: &dyn Provider,
) -> Result<Hint, DialogueError> {
    let messages = state.messages_for(turn_message(task, latest));
    let response = provider.send(&state.config.request(messages))?;
    state.usage += response.usage;
    let reply = response.into_text()?;
    if reply.trim().is_empty() {
        return Err(ProviderError::MalformedResponse("interviewer returned an empty hint".into()).into());
    }
    state.exchanges.push(Exchange {
        summary: turn_summary(task, latest),
        reply: reply.clone(),
    });
    Ok(Hint::from_reply(latest.iteration, reply))
}

/// Interviewee conversation, kept in full.
pub struct IntervieweeState {
    config: AgentConfig,
    messages: Vec<ChatMessage>,
    pub usage: Usage,
}

impl IntervieweeState {
    pub fn new(task: &Task, guided: bool, config: AgentConfig) -> Self {
        Self {
            messages: build_interviewee_context(task, guided),
            config,
            usage: Usage::default(),
        }
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    fn ask(&mut self, provider: &dyn Provider) -> Result<String, DialogueError> {
        let response = provider.send(&self.config.request(self.messages.clone()))?;
        self.usage += response.usage;
        let reply = response.into_text()?;
        let stored = if reply.is_empty() { "(empty response)".to_string() } else { reply.clone() };
        self.messages.push(ChatMessage::assistant(stored));
        Ok(reply)
    }

    /// First solution, from the initial context.
    pub fn initial_solution(&mut self, provider: &dyn Provider) -> Result<String, DialogueError> {
        self.ask(provider)
    }
}

/// Sends a non-terminal hint and returns the raw revised solution.
pub fn revise_solution(
    state: &mut IntervieweeState,
    hint: &Hint,
    provider: &dyn Provider,
) -> Result<String, DialogueError> {
    if hint.terminal {
        return Err(DialogueError::TerminalHint);
    }
    state.messages.push(ChatMessage::user(hint.text.clone()));
    state.ask(provider)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Solved,
    MaxIterations,
    ProviderFailure,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Solved => "solved",
            StopReason::MaxIterations => "max_iterations",
            StopReason::ProviderFailure => "provider_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub interviewer: AgentConfig,
    pub interviewee: AgentConfig,
    pub judge: JudgeConfig,
    pub limits: ExecutionLimits,
    pub max_iterations: usize,
    pub guided: bool,
    /// Judge only the first turn and the turn the session ends on.
    #[serde(default)]
    pub judge_final_only: bool,
    /// Dimension of the built-in hash embedder used for retrieval.
    #[serde(default = "default_embed_dimension")]
    pub embed_dimension: usize,
}

fn default_embed_dimension() -> usize {
    64
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            interviewer: AgentConfig::interviewer("gpt-4.1-mini"),
            interviewee: AgentConfig::interviewee("gpt-4o-mini"),
            judge: JudgeConfig::default(),
            limits: ExecutionLimits::default(),
            max_iterations: 5,
            guided: true,
            judge_final_only: false,
            embed_dimension: default_embed_dimension(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), DialogueError> {
        if self.max_iterations == 0 {
            return Err(DialogueError::Config("max_iterations must be at least 1".into()));
        }
        self.interviewer.validate()?;
        self.interviewee.validate()?;
        self.limits
            .validate()
            .map_err(|e| DialogueError::Config(e.to_string()))?;
        if self.judge.temperature < 0.0 || self.judge.max_output_tokens == 0 {
            return Err(DialogueError::Config("judge needs temperature >= 0 and a positive token limit".into()));
        }
        Ok(())
    }
}

/// Backends for one session; shareable across sessions.
#[derive(Clone)]
pub struct SessionProviders {
    pub interviewer: Arc<dyn Provider>,
    pub interviewee: Arc<dyn Provider>,
    pub judge: Arc<dyn Provider>,
    pub embedder: Arc<dyn Provider>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub task: Task,
    pub config: SessionConfig,
    pub started_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub iteration: usize,
    pub solution_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    /// Turn directory relative to the session directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workspace_dir: Option<String>,
    #[serde(default)]
    pub files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution: Option<ExecutionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<VerdictMap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub judge_details: Vec<JudgeVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<Hint>,
}

impl Turn {
    /// Every judge reply of this turn, in call order.
    pub fn judge_replies(&self) -> impl Iterator<Item = &String> {
        self.judge_details.iter().flat_map(|d| d.raw_replies.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub stop_reason: StopReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_score: Option<Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_score: Option<Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub usage: BTreeMap<String, Usage>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum TranscriptRecord {
    Header(SessionHeader),
    Turn(Turn),
    End(SessionOutcome),
}

/// The trajectory of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTranscript {
    pub header: SessionHeader,
    pub turns: Vec<Turn>,
    pub outcome: Option<SessionOutcome>,
    /// Where the transcript file lives, when it was read from or written to disk.
    pub path: Option<PathBuf>,
}

impl SessionTranscript {
    pub fn task(&self) -> &Task {
        &self.header.task
    }

    pub fn model_id(&self) -> &str {
        &self.header.config.interviewee.model
    }

    pub fn guided(&self) -> bool {
        self.header.config.guided
    }

    pub fn is_complete(&self) -> bool {
        self.outcome.is_some() && !self.turns.is_empty()
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.outcome.as_ref().map(|o| o.stop_reason)
    }

    pub fn initial_verdicts(&self) -> Option<&VerdictMap> {
        self.turns.first().and_then(|t| t.verdicts.as_ref())
    }

    /// Verdicts of the last judged turn.
    pub fn final_verdicts(&self) -> Option<&VerdictMap> {
        self.turns.iter().rev().find_map(|t| t.verdicts.as_ref())
    }

    pub fn initial_score(&self) -> Option<Score> {
        self.initial_verdicts()
            .and_then(|v| effective_score(self.task().graph(), v).ok())
    }

    pub fn final_score(&self) -> Option<Score> {
        self.final_verdicts()
            .and_then(|v| effective_score(self.task().graph(), v).ok())
    }

    pub fn hints(&self) -> impl Iterator<Item = &Hint> {
        self.turns.iter().filter_map(|t| t.hint.as_ref())
    }

    /// Replay backends reproducing this session's provider replies.
    pub fn replay_providers(&self) -> SessionProviders {
        let solutions = self.turns.iter().map(|t| t.solution_text.clone());
        let hints = self.turns.iter().filter_map(|t| t.hint.as_ref().map(|h| h.text.clone()));
        let judge: Vec<String> = self.turns.iter().flat_map(|t| t.judge_replies().cloned()).collect();
        SessionProviders {
            interviewer: Arc::new(ReplayProvider::from_texts(hints)),
            interviewee: Arc::new(ReplayProvider::from_texts(solutions)),
            judge: Arc::new(ReplayProvider::from_texts(judge)),
            embedder: Arc::new(HashEmbedder::new(self.header.config.embed_dimension, HashEmbedder::default().seed)),
        }
    }

    pub fn records(&self) -> Vec<TranscriptRecord> {
        let mut out = vec![TranscriptRecord::Header(self.header.clone())];
        out.extend(self.turns.iter().cloned().map(TranscriptRecord::Turn));
        out.extend(self.outcome.clone().map(TranscriptRecord::End));
        out
    }
}

/// Reads a transcript file. Fails on any unreadable record.
pub fn read_transcript(path: &Path) -> Result<SessionTranscript, DialogueError> {
    let corrupt = |message: String| DialogueError::Transcript {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut header = None;
    let mut turns = Vec::new();
    let mut outcome = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord =
            serde_json::from_str(&line).map_err(|e| corrupt(format!("line {}: {e}", n + 1)))?;
        match record {
            TranscriptRecord::Header(h) if header.is_none() && n == 0 => header = Some(h),
            TranscriptRecord::Header(_) => return Err(corrupt(format!("line {}: unexpected header", n + 1))),
            TranscriptRecord::Turn(t) if header.is_some() && outcome.is_none() => turns.push(t),
            TranscriptRecord::End(o) if header.is_some() && outcome.is_none() => outcome = Some(o),
            _ => return Err(corrupt(format!("line {}: record out of order", n + 1))),
        }
    }
    let header = header.ok_or_else(|| corrupt("missing header record".into()))?;
    Ok(SessionTranscript {
        header,
        turns,
        outcome,
        path: Some(path.to_path_buf()),
    })
}

struct TranscriptWriter {
    file: File,
    path: PathBuf,
}

impl TranscriptWriter {
    fn create(path: &Path) -> Result<Self, DialogueError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    fn append(&mut self, record: &TranscriptRecord) -> Result<(), DialogueError> {
        let line = serde_json::to_string(record).expect("transcript records serialize");
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.sync_data())
            .map_err(io_err(&self.path))
    }
}

/// File-system safe version of a model id.
pub fn path_segment(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        "_".into()
    } else {
        s
    }
}

/// `<out>/<task_id>/<model_id>` for guided runs and
/// `<out>/<task_id>/<model_id>__unguided` for base runs.
pub fn session_dir(out: &Path, task_id: &str, model_id: &str, guided: bool) -> PathBuf {
    let mut model = path_segment(model_id);
    if !guided {
        model.push_str("__unguided");
    }
    out.join(path_segment(task_id)).join(model)
}

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

struct Evaluated {
    turn: Turn,
    workspace: Option<SolutionWorkspace>,
}

struct Session<'a> {
    task: &'a Task,
    config: &'a SessionConfig,
    providers: &'a SessionProviders,
    dir: PathBuf,
    judge_usage: Usage,
}

impl Session<'_> {
    /// Parse, materialize and execute one solution. Judging is separate.
    fn prepare(&self, iteration: usize, solution_text: String) -> Result<Evaluated, DialogueError> {
        let mut turn = Turn {
            iteration,
            solution_text,
            parse_error: None,
            workspace_dir: None,
            files: Vec::new(),
            execution: None,
            execution_error: None,
            verdicts: None,
            judge_details: Vec::new(),
            score: None,
            hint: None,
        };
        let workspace = match parse_solution(&turn.solution_text, iteration) {
            Ok(ws) => ws,
            Err(e) => {
                turn.parse_error = Some(e.to_string());
                return Ok(Evaluated { turn, workspace: None });
            }
        };
        let rel = format!("turn_{iteration}");
        let root = self.dir.join(&rel);
        if root.exists() {
            fs::remove_dir_all(&root).map_err(io_err(&root))?;
        }
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        if let Err(e) = materialize(&workspace, &root) {
            turn.parse_error = Some(e.to_string());
            return Ok(Evaluated { turn, workspace: None });
        }
        turn.workspace_dir = Some(rel);
        turn.files = workspace.paths().iter().map(|p| p.to_string()).collect();
        match execute(&root, &self.config.limits) {
            Ok(result) => turn.execution = Some(result),
            Err(e) => turn.execution_error = Some(e.to_string()),
        }
        Ok(Evaluated {
            turn,
            workspace: Some(workspace),
        })
    }

    /// Fills verdicts and score. Only provider failures are errors; an
    /// unjudgeable solution fails every requirement with a diagnostic.
    fn judge(&mut self, evaluated: &mut Evaluated) -> Result<(), ProviderError> {
        let graph = self.task.graph();
        let turn = &mut evaluated.turn;
        let verdicts = match (&evaluated.workspace, &turn.parse_error) {
            (Some(ws), _) => {
                let root = self.dir.join(turn.workspace_dir.as_deref().unwrap_or_default());
                let artifacts = collect_artifacts(&root, &expected_artifacts(self.task));
                match judge_task(
                    self.task,
                    ws,
                    &artifacts,
                    &*self.providers.judge,
                    &*self.providers.embedder,
                    &self.config.judge,
                ) {
                    Ok(Judgement {
                        verdicts,
                        details,
                        usage,
                    }) => {
                        self.judge_usage += usage;
                        turn.judge_details = details;
                        verdicts
                    }
                    Err(JudgeError::Provider(e)) => return Err(e),
                    Err(e) => VerdictMap::failing(graph, &format!("solution could not be judged: {e}")),
                }
            }
            (None, err) => VerdictMap::failing(
                graph,
                &format!("solution could not be parsed: {}", err.as_deref().unwrap_or("unknown error")),
            ),
        };
        turn.score = effective_score(graph, &verdicts).ok();
        turn.verdicts = Some(verdicts);
        Ok(())
    }
}

/// Runs the full loop and returns the transcript, which is also persisted at
/// `<session dir>/transcript.jsonl`. Provider failures end the session with
/// `provider_failure` rather than an error.
pub fn run_session(
    task: &Task,
    ground_truth: Option<&GroundTruth>,
    config: &SessionConfig,
    providers: &SessionProviders,
    out_dir: &Path,
) -> Result<SessionTranscript, DialogueError> {
    config.validate()?;
    let mut interviewer = match (config.guided, ground_truth) {
        (true, Some(gt)) => Some(InterviewerState::new(task, gt, config.interviewer.clone())?),
        (true, None) => return Err(TemplateError::FieldMissing("reference_solution".into()).into()),
        (false, _) => None,
    };
    let dir = session_dir(out_dir, &task.id, &config.interviewee.model, config.guided);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let transcript_path = dir.join(TRANSCRIPT_FILE);
    let mut writer = TranscriptWriter::create(&transcript_path)?;

    let header = SessionHeader {
        task: task.clone(),
        config: config.clone(),
        started_at: Utc::now(),
    };
    writer.append(&TranscriptRecord::Header(header.clone()))?;
    let mut transcript = SessionTranscript {
        header,
        turns: Vec::new(),
        outcome: None,
        path: Some(transcript_path),
    };

    let mut session = Session {
        task,
        config,
        providers,
        dir,
        judge_usage: Usage::default(),
    };
    let mut interviewee = IntervieweeState::new(task, config.guided, config.interviewee.clone());
    let max_turns = if config.guided { config.max_iterations } else { 1 };

    let (stop_reason, error) = 'session: {
        let mut solution = match interviewee.initial_solution(&*providers.interviewee) {
            Ok(s) => s,
            Err(e) => break 'session (StopReason::ProviderFailure, Some(e.to_string())),
        };
        for iteration in 1..=max_turns {
            let mut evaluated = session.prepare(iteration, solution)?;
            let last = iteration == max_turns;
            let judge_now = !config.judge_final_only || iteration == 1 || last;
            if judge_now {
                if let Err(e) = session.judge(&mut evaluated) {
                    break 'session (StopReason::ProviderFailure, Some(e.to_string()));
                }
            }
            let solved = evaluated
                .turn
                .verdicts
                .as_ref()
                .is_some_and(|v| v.all_pass(task.graph()));
            if solved || last {
                writer.append(&TranscriptRecord::Turn(evaluated.turn.clone()))?;
                transcript.turns.push(evaluated.turn);
                break 'session (
                    if solved { StopReason::Solved } else { StopReason::MaxIterations },
                    None,
                );
            }

            let state = interviewer.as_mut().expect("guided sessions have an interviewer");
            let view = TurnView {
                iteration,
                solution_text: &evaluated.turn.solution_text,
                workspace: evaluated.workspace.as_ref(),
                parse_error: evaluated.turn.parse_error.as_deref(),
                execution: evaluated.turn.execution.as_ref(),
                execution_error: evaluated.turn.execution_error.as_deref(),
                verdicts: evaluated.turn.verdicts.as_ref(),
            };
            let hint = match generate_hint(state, task, &view, &*providers.interviewer) {
                Ok(h) => h,
                Err(e) => {
                    writer.append(&TranscriptRecord::Turn(evaluated.turn.clone()))?;
                    transcript.turns.push(evaluated.turn);
                    break 'session (StopReason::ProviderFailure, Some(e.to_string()));
                }
            };
            let terminal = hint.terminal;
            if terminal && evaluated.turn.verdicts.is_none() {
                if let Err(e) = session.judge(&mut evaluated) {
                    break 'session (StopReason::ProviderFailure, Some(e.to_string()));
                }
            }
            evaluated.turn.hint = Some(hint.clone());
            writer.append(&TranscriptRecord::Turn(evaluated.turn.clone()))?;
            transcript.turns.push(evaluated.turn);
            if terminal {
                break 'session (StopReason::Solved, None);
            }
            solution = match revise_solution(&mut interviewee, &hint, &*providers.interviewee) {
                Ok(s) => s,
                Err(e) => break 'session (StopReason::ProviderFailure, Some(e.to_string())),
            };
        }
        unreachable!("the last iteration always ends the session")
    };

    let mut usage = BTreeMap::new();
    usage.insert("interviewee".to_string(), interviewee.usage);
    if let Some(state) = &interviewer {
        usage.insert("interviewer".to_string(), state.usage);
    }
    usage.insert("judge".to_string(), session.judge_usage);
    let outcome = SessionOutcome {
        stop_reason,
        initial_score: transcript.initial_score(),
        final_score: transcript.final_score(),
        error,
        usage,
        finished_at: Utc::now(),
    };
    writer.append(&TranscriptRecord::End(outcome.clone()))?;
    transcript.outcome = Some(outcome);
    Ok(transcript)
}
