//! Post-session reports, score aggregation and hint sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{AgentConfig, SessionTranscript, Turn};
use crate::prompts;
use crate::providers::{ChatMessage, Provider, ProviderError};
use crate::scoring::{transition_delta, CategoryCounts, Score, Status};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("transcript for task {0} is incomplete")]
    IncompleteTranscript(String),
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot import {path}: {message}")]
    Import { path: PathBuf, message: String },
    #[error("no hints available for annotation")]
    NoHints,
}

/// Aspects a report is expected to cover, in presentation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportDimension {
    ProblemSolving,
    FeedbackSensitivity,
    OptimizationAwareness,
    AmbiguityHandling,
    CodeOrganization,
    ErrorRecognition,
}

impl ReportDimension {
    pub const ALL: [ReportDimension; 6] = [
        ReportDimension::ProblemSolving,
        ReportDimension::FeedbackSensitivity,
        ReportDimension::OptimizationAwareness,
        ReportDimension::AmbiguityHandling,
        ReportDimension::CodeOrganization,
        ReportDimension::ErrorRecognition,
    ];

    fn keywords(self) -> &'static [&'static str] {
        match self {
            ReportDimension::ProblemSolving => &["problem-solving", "problem solving", "approach", "logic", "reasoning"],
            ReportDimension::FeedbackSensitivity => &["hint", "feedback", "guidance", "guided"],
            ReportDimension::OptimizationAwareness => &["optimiz", "efficien", "performance", "complexity"],
            ReportDimension::AmbiguityHandling => &["ambigu", "assumption", "unclear", "interpret"],
            ReportDimension::CodeOrganization => &["organiz", "modular", "structure", "comment", "file"],
            ReportDimension::ErrorRecognition => &["error", "mistake", "bug", "incorrect", "fail"],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionFinding {
    pub dimension: ReportDimension,
    /// Report sections mentioning this dimension, verbatim.
    pub excerpts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub task_id: String,
    pub model_id: String,
    pub dimensions: Vec<DimensionFinding>,
    pub full_text: String,
}

/// Splits a report into blank-line separated sections and files each one
/// under every dimension whose keywords it mentions.
pub fn index_dimensions(text: &str) -> Vec<DimensionFinding> {
    let sections: Vec<&str> = text.split("\n\n").map(str::trim).filter(|s| !s.is_empty()).collect();
    ReportDimension::ALL
        .iter()
        .map(|&dimension| DimensionFinding {
            dimension,
            excerpts: sections
                .iter()
                .filter(|s| {
                    let lower = s.to_lowercase();
                    dimension.keywords().iter().any(|k| lower.contains(k))
                })
                .map(|s| s.to_string())
                .collect(),
        })
        .collect()
}

fn status_line(turn: &Turn, requirement_count: usize) -> String {
    let Some(verdicts) = &turn.verdicts else {
        return "not judged".into();
    };
    (0..requirement_count)
        .map(|id| {
            let s = verdicts.status(id).map_or("unknown".to_string(), |s| s.to_string());
            format!("R{id} {s}")
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// Plain-text account of a session: problem, and per turn the files,
/// execution outcome, requirement status and the hint given.
pub fn trajectory_summary(transcript: &SessionTranscript) -> String {
    let task = transcript.task();
    let mut out = String::new();
    let _ = writeln!(out, "[START OF PROBLEM]\n{}\n[END OF PROBLEM]\n", crate::dialogue::render_problem(task));
    for turn in &transcript.turns {
        let _ = writeln!(out, "Iteration {}:", turn.iteration);
        if let Some(err) = &turn.parse_error {
            let _ = writeln!(out, "  solution could not be parsed: {err}");
        } else {
            let _ = writeln!(out, "  files: {}", turn.files.join(", "));
        }
        match (&turn.execution, &turn.execution_error) {
            (Some(exec), _) => {
                let _ = writeln!(
                    out,
                    "  execution: {:?}{}",
                    exec.exit_status,
                    if exec.timed_out { ", timed out" } else { "" }
                );
            }
            (None, Some(err)) => {
                let _ = writeln!(out, "  execution: not run ({err})");
            }
            (None, None) => {}
        }
        let _ = writeln!(out, "  requirements: {}", status_line(turn, task.len()));
        if let Some(score) = turn.score {
            let _ = writeln!(out, "  score: {score}");
        }
        if let Some(hint) = &turn.hint {
            let _ = writeln!(out, "  hint: {}", hint.text.trim());
        }
    }
    out
}

/// Asks the analyzer for the qualitative report. The reply is stored as is.
pub fn generate_report(
    transcript: &SessionTranscript,
    analyzer: &AgentConfig,
    provider: &dyn Provider,
) -> Result<EvaluationReport, ReportError> {
    if !transcript.is_complete() {
        return Err(ReportError::IncompleteTranscript(transcript.task().id.clone()));
    }
    let messages = vec![
        ChatMessage::system(prompts::INTERVIEWER_SYSTEM),
        ChatMessage::user(trajectory_summary(transcript)),
        ChatMessage::user(prompts::REPORT_PROMPT),
    ];
    let full_text = provider.send(&analyzer.request(messages))?.into_text()?;
    if full_text.trim().is_empty() {
        return Err(ProviderError::MalformedResponse("analyzer returned an empty report".into()).into());
    }
    Ok(EvaluationReport {
        task_id: transcript.task().id.clone(),
        model_id: transcript.model_id().to_string(),
        dimensions: index_dimensions(&full_text),
        full_text,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorecardRow {
    pub task_id: String,
    pub model_id: String,
    pub guided: bool,
    pub initial_score: Score,
    pub final_score: Score,
    /// Task category.
    pub category: String,
    /// Requirement transitions between first and last judged turn, by
    /// requirement category.
    #[serde(default)]
    pub transitions: BTreeMap<String, CategoryCounts>,
}

impl ScorecardRow {
    /// Requirements passed on the final solution, gated ones excluded.
    pub fn passed(&self) -> u32 {
        self.final_score.passed
    }

    pub fn total(&self) -> u32 {
        self.final_score.total
    }

    fn key(&self) -> (&str, &str, bool) {
        (&self.task_id, &self.model_id, self.guided)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMean {
    pub model_id: String,
    pub guided: bool,
    pub sessions: usize,
    pub mean_passed: f64,
    pub mean_initial_score: f64,
    pub mean_final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMean {
    pub category: String,
    pub sessions: usize,
    pub mean_final_score: f64,
    pub perfect_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub by_model: Vec<ModelMean>,
    pub by_category: Vec<CategoryMean>,
    pub transitions: BTreeMap<String, CategoryCounts>,
    /// Fraction of sessions whose final score is 1.
    pub perfect_fraction: f64,
}

/// One row per session. Aggregates are always computed from the rows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scorecard {
    pub rows: Vec<ScorecardRow>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl Scorecard {
    pub fn from_rows(mut rows: Vec<ScorecardRow>) -> Self {
        rows.sort_by(|a, b| a.key().cmp(&b.key()));
        Self { rows }
    }

    pub fn aggregates(&self) -> Aggregates {
        let mut groups: BTreeMap<(&str, bool), Vec<&ScorecardRow>> = BTreeMap::new();
        let mut categories: BTreeMap<&str, Vec<&ScorecardRow>> = BTreeMap::new();
        let mut transitions: BTreeMap<String, CategoryCounts> = BTreeMap::new();
        for row in &self.rows {
            groups.entry((&row.model_id, row.guided)).or_default().push(row);
            categories.entry(&row.category).or_default().push(row);
            for (cat, counts) in &row.transitions {
                let t = transitions.entry(cat.clone()).or_default();
                t.improved += counts.improved;
                t.regressed += counts.regressed;
            }
        }
        let perfect = |rows: &[&ScorecardRow]| {
            mean(rows.iter().map(|r| if r.final_score.is_perfect() { 1.0 } else { 0.0 }))
        };
        Aggregates {
            by_model: groups
                .into_iter()
                .map(|((model, guided), rows)| ModelMean {
                    model_id: model.to_string(),
                    guided,
                    sessions: rows.len(),
                    mean_passed: mean(rows.iter().map(|r| f64::from(r.passed()))),
                    mean_initial_score: mean(rows.iter().map(|r| r.initial_score.as_f64())),
                    mean_final_score: mean(rows.iter().map(|r| r.final_score.as_f64())),
                })
                .collect(),
            by_category: categories
                .into_iter()
                .map(|(category, rows)| CategoryMean {
                    category: category.to_string(),
                    sessions: rows.len(),
                    mean_final_score: mean(rows.iter().map(|r| r.final_score.as_f64())),
                    perfect_fraction: perfect(&rows),
                })
                .collect(),
            transitions,
            perfect_fraction: perfect(&self.rows.iter().collect::<Vec<_>>()),
        }
    }
}

/// Row for one finished session, or `None` when no turn was judged.
pub fn scorecard_row(transcript: &SessionTranscript) -> Option<ScorecardRow> {
    let task = transcript.task();
    let initial = transcript.initial_verdicts()?;
    let last = transcript.final_verdicts()?;
    let delta = transition_delta(initial, last, task.graph()).ok()?;
    Some(ScorecardRow {
        task_id: task.id.clone(),
        model_id: transcript.model_id().to_string(),
        guided: transcript.guided(),
        initial_score: transcript.initial_score()?,
        final_score: transcript.final_score()?,
        category: task.category.clone(),
        transitions: delta.per_category_counts,
    })
}

/// Rows for every scoreable transcript, in (task, model, guided) order.
pub fn aggregate<'a>(transcripts: impl IntoIterator<Item = &'a SessionTranscript>) -> Scorecard {
    Scorecard::from_rows(transcripts.into_iter().filter_map(scorecard_row).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    /// Comma-separated rows followed by aggregate sections.
    Tabular,
    /// Pretty-printed JSON.
    Tree,
}

impl ExportFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ExportFormat::Tree,
            _ => ExportFormat::Tabular,
        }
    }
}

pub const CSV_HEADER: &str = "task_id,model_id,guided,initial_score,final_score,passed,total,category";
const CSV_TRANSITIONS_HEADER: &str = "# transitions\ntask_id,model_id,guided,requirement_category,improved,regressed";
const CSV_AGGREGATES_HEADER: &str = "# aggregates";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Scores are written as decimals; the exact numerator is recovered from
/// the `total` column on import.
fn score_cell(s: Score) -> String {
    format!("{:.6}", s.as_f64())
}

fn parse_score_cell(cell: &str, total: u32) -> Option<Score> {
    let value: f64 = cell.parse().ok()?;
    let passed = (value * f64::from(total)).round();
    if !(0.0..=f64::from(total)).contains(&passed) || total == 0 {
        return None;
    }
    let score = Score::new(passed as u32, total);
    ((score.as_f64() - value).abs() < 1e-6).then_some(score)
}

/// Tabular rendering. A scorecard without rows renders as the header line
/// alone.
pub fn to_csv(card: &Scorecard) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    if card.rows.is_empty() {
        return out;
    }
    for r in &card.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_field(&r.task_id),
            csv_field(&r.model_id),
            r.guided,
            score_cell(r.initial_score),
            score_cell(r.final_score),
            r.passed(),
            r.total(),
            csv_field(&r.category)
        );
    }
    let _ = write!(out, "\n{CSV_TRANSITIONS_HEADER}\n");
    for r in &card.rows {
        for (cat, c) in &r.transitions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.task_id),
                csv_field(&r.model_id),
                r.guided,
                csv_field(cat),
                c.improved,
                c.regressed
            );
        }
    }
    let agg = card.aggregates();
    let _ = write!(out, "\n{CSV_AGGREGATES_HEADER}\naggregate,key,guided,sessions,value\n");
    for m in &agg.by_model {
        let _ = writeln!(out, "mean_passed,{},{},{},{:.4}", csv_field(&m.model_id), m.guided, m.sessions, m.mean_passed);
        let _ = writeln!(
            out,
            "mean_initial_score,{},{},{},{:.4}",
            csv_field(&m.model_id),
            m.guided,
            m.sessions,
            m.mean_initial_score
        );
        let _ = writeln!(
            out,
            "mean_final_score,{},{},{},{:.4}",
            csv_field(&m.model_id),
            m.guided,
            m.sessions,
            m.mean_final_score
        );
    }
    for c in &agg.by_category {
        let _ = writeln!(out, "category_mean_final_score,{},,{},{:.4}", csv_field(&c.category), c.sessions, c.mean_final_score);
        let _ = writeln!(out, "category_perfect_fraction,{},,{},{:.4}", csv_field(&c.category), c.sessions, c.perfect_fraction);
    }
    for (cat, c) in &agg.transitions {
        let _ = writeln!(out, "improved,{},,,{}", csv_field(cat), c.improved);
        let _ = writeln!(out, "regressed,{},,,{}", csv_field(cat), c.regressed);
    }
    let _ = writeln!(out, "perfect_fraction,,,{},{:.4}", card.rows.len(), agg.perfect_fraction);
    out
}

/// Reads the rows and per-session transitions back; the aggregate section
/// is derived data and is ignored.
pub fn from_csv(text: &str) -> Result<Scorecard, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => return Err("missing header".into()),
    }
    let parse_bool = |s: &str, n: usize| s.parse::<bool>().map_err(|_| format!("line {}: bad guided flag", n + 1));
    let mut rows: Vec<ScorecardRow> = Vec::new();
    let mut section = "rows";
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with("# transitions") {
            section = "transitions";
            continue;
        }
        if line.starts_with(CSV_AGGREGATES_HEADER) {
            break;
        }
        let f = split_csv_line(line);
        match section {
            "rows" => {
                if f.len() != 8 {
                    return Err(format!("line {}: expected 8 fields", n + 1));
                }
                let total: u32 = f[6].parse().map_err(|_| format!("line {}: bad total", n + 1))?;
                let initial_score = parse_score_cell(&f[3], total).ok_or(format!("line {}: bad initial score", n + 1))?;
                let final_score = parse_score_cell(&f[4], total).ok_or(format!("line {}: bad final score", n + 1))?;
                if f[5] != final_score.passed.to_string() {
                    return Err(format!("line {}: passed disagrees with final score", n + 1));
                }
                rows.push(ScorecardRow {
                    task_id: f[0].clone(),
                    model_id: f[1].clone(),
                    guided: parse_bool(&f[2], n)?,
                    initial_score,
                    final_score,
                    category: f[7].clone(),
                    transitions: BTreeMap::new(),
                });
            }
            _ => {
                if f.first().map(String::as_str) == Some("task_id") {
                    continue;
                }
                if f.len() != 6 {
                    return Err(format!("line {}: expected 6 fields", n + 1));
                }
                let guided = parse_bool(&f[2], n)?;
                let num = |s: &str| s.parse::<u32>().map_err(|_| format!("line {}: bad count", n + 1));
                let counts = CategoryCounts {
                    improved: num(&f[4])?,
                    regressed: num(&f[5])?,
                };
                let row = rows
                    .iter_mut()
                    .find(|r| r.task_id == f[0] && r.model_id == f[1] && r.guided == guided)
                    .ok_or(format!("line {}: transitions for unknown session", n + 1))?;
                row.transitions.insert(f[3].clone(), counts);
            }
        }
    }
    Ok(Scorecard::from_rows(rows))
}

#[derive(Serialize, Deserialize)]
struct ScorecardDocument {
    rows: Vec<ScorecardRow>,
    aggregates: Aggregates,
}

pub fn to_json(card: &Scorecard) -> String {
    let doc = ScorecardDocument {
        rows: card.rows.clone(),
        aggregates: card.aggregates(),
    };
    serde_json::to_string_pretty(&doc).expect("scorecard serializes")
}

/// Rejects documents whose stored aggregates differ from the rows.
pub fn from_json(text: &str) -> Result<Scorecard, String> {
    let doc: ScorecardDocument = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let card = Scorecard::from_rows(doc.rows);
    if card.aggregates() != doc.aggregates {
        return Err("aggregates do not match rows".into());
    }
    Ok(card)
}

pub fn export(card: &Scorecard, format: ExportFormat, path: &Path) -> Result<(), ReportError> {
    let text = match format {
        ExportFormat::Tabular => to_csv(card),
        ExportFormat::Tree => to_json(card),
    };
    fs::write(path, text).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn import(path: &Path, format: ExportFormat) -> Result<Scorecard, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = match format {
        ExportFormat::Tabular => from_csv(&text),
        ExportFormat::Tree => from_json(&text),
    };
    parsed.map_err(|message| ReportError::Import {
        path: path.to_path_buf(),
        message,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintContext {
    pub query: String,
    pub files: Vec<String>,
    /// Requirements not passing when the hint was given, as `R<id>: text`.
    pub failing_requirements: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_score: Option<Score>,
}

/// One line of the annotation file. `grade` is filled in by annotators on
/// a 1 to 5 scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintRecord {
    pub task_id: String,
    pub model_id: String,
    pub iteration: usize,
    pub hint: String,
    pub context: HintContext,
    pub grade: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HintSample {
    pub records: Vec<HintRecord>,
    /// One note per model with fewer hints than requested.
    pub warnings: Vec<String>,
}

impl HintSample {
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("hint records serialize") + "\n")
            .collect()
    }
}

fn hint_pool(transcripts: &[&SessionTranscript]) -> BTreeMap<String, Vec<HintRecord>> {
    let mut pool: BTreeMap<String, Vec<HintRecord>> = BTreeMap::new();
    for t in transcripts {
        let task = t.task();
        for (i, turn) in t.turns.iter().enumerate() {
            let Some(hint) = turn.hint.as_ref().filter(|h| !h.terminal) else {
                continue;
            };
            let failing = turn
                .verdicts
                .as_ref()
                .map(|v| {
                    task.requirements()
                        .iter()
                        .filter(|r| v.status(r.id) != Some(Status::Satisfied))
                        .map(|r| format!("R{}: {}", r.id, r.text))
                        .collect()
                })
                .unwrap_or_default();
            pool.entry(t.model_id().to_string()).or_default().push(HintRecord {
                task_id: task.id.clone(),
                model_id: t.model_id().to_string(),
                iteration: turn.iteration,
                hint: hint.text.clone(),
                context: HintContext {
                    query: task.query.clone(),
                    files: turn.files.clone(),
                    failing_requirements: failing,
                    next_score: t.turns.get(i + 1).and_then(|n| n.score),
                },
                grade: None,
            });
        }
    }
    for records in pool.values_mut() {
        records.sort_by(|a, b| (&a.task_id, a.iteration, &a.hint).cmp(&(&b.task_id, b.iteration, &b.hint)));
        records.dedup();
    }
    pool
}

/// Samples up to `per_model` non-terminal hints for each interviewee model.
/// The same pool and seed always give the same sample, independent of the
/// order transcripts are passed in.
pub fn export_hints_for_annotation(
    transcripts: &[&SessionTranscript],
    per_model: usize,
    seed: u64,
) -> Result<HintSample, ReportError> {
    let pool = hint_pool(transcripts);
    if pool.values().all(Vec::is_empty) {
        return Err(ReportError::NoHints);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (model, hints) in &pool {
        if hints.len() < per_model {
            warnings.push(format!(
                "model {model}: {} hints available, {per_model} requested; exporting all",
                hints.len()
            ));
        }
        let mut picked: Vec<&HintRecord> = hints.choose_multiple(&mut rng, per_model.min(hints.len())).collect();
        picked.sort_by(|a, b| (&a.task_id, a.iteration).cmp(&(&b.task_id, b.iteration)));
        records.extend(picked.into_iter().cloned());
    }
    Ok(HintSample { records, warnings })
}

/// Distinct interviewee models in a hint sample.
pub fn sample_models(sample: &HintSample) -> BTreeSet<&str> {
    sample.records.iter().map(|r| r.model_id.as_str()).collect()
}
