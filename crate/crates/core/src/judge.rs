//! Per-requirement judging: retrieve the most similar chunk by cosine
//! similarity, then ask a classifier model for a SATISFIED/UNSATISFIED
//! verdict. Requirements whose prerequisites did not pass are gated and never
//! sent to the classifier.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{ChatMessage, Provider, ProviderError, ProviderRequest, Usage};
use crate::sandbox::ArtifactPresence;
use crate::scoring::{Status, Verdict, VerdictMap};
use crate::task::{topological_order, Requirement, RequirementId, Task};
use crate::workspace::{chunk_workspace, Chunk, ChunkPolicy, SolutionWorkspace, WorkspaceError};

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-length or all-zero vector")]
    ZeroVector,
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("no chunks to retrieve from")]
    NoChunks,
    #[error("parent R{0} has not been judged")]
    MissingParent(RequirementId),
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, JudgeError> {
        if values.is_empty() {
            return Err(JudgeError::ZeroVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(JudgeError::NonFinite);
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn embed(text: &str, provider: &dyn Provider, model: &str) -> Result<EmbeddingVector, JudgeError> {
    if text.trim().is_empty() {
        return Err(JudgeError::EmptyText);
    }
    let values = provider.send(&ProviderRequest::embed(model, text))?.into_vector()?;
    EmbeddingVector::new(values)
}

/// a·b / (|a||b|), clamped into [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, JudgeError> {
    if a.dimension() != b.dimension() {
        return Err(JudgeError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(JudgeError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub requirement_id: RequirementId,
    pub chunk_id: usize,
    pub similarity: f64,
}

/// Chunk embeddings computed once and reused for every requirement.
pub struct Retriever<'a> {
    chunks: &'a [Chunk],
    vectors: Vec<EmbeddingVector>,
}

impl<'a> Retriever<'a> {
    pub fn new(chunks: &'a [Chunk], provider: &dyn Provider, model: &str) -> Result<Self, JudgeError> {
        if chunks.is_empty() {
            return Err(JudgeError::NoChunks);
        }
        let vectors = chunks
            .iter()
            .map(|c| embed(&c.text, provider, model))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { chunks, vectors })
    }

    /// Argmax similarity; ties go to the lowest chunk id.
    pub fn best(&self, requirement_id: RequirementId, query: &EmbeddingVector) -> Result<RetrievalHit, JudgeError> {
        let mut best: Option<RetrievalHit> = None;
        for (chunk, vector) in self.chunks.iter().zip(&self.vectors) {
            let similarity = cosine_similarity(query, vector)?;
            let better = match &best {
                None => true,
                Some(b) => similarity > b.similarity || (similarity == b.similarity && chunk.id < b.chunk_id),
            };
            if better {
                best = Some(RetrievalHit {
                    requirement_id,
                    chunk_id: chunk.id,
                    similarity,
                });
            }
        }
        best.ok_or(JudgeError::NoChunks)
    }

    pub fn chunk(&self, id: usize) -> Option<&'a Chunk> {
        self.chunks.iter().find(|c| c.id == id)
    }
}

pub fn retrieve_best_chunk(
    requirement: &Requirement,
    chunks: &[Chunk],
    provider: &dyn Provider,
    model: &str,
) -> Result<RetrievalHit, JudgeError> {
    let retriever = Retriever::new(chunks, provider, model)?;
    let query = embed(&requirement.text, provider, model)?;
    retriever.best(requirement.id, &query)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_seconds: f64,
    pub embed_model: String,
    pub chunk_policy: ChunkPolicy,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            max_output_tokens: 512,
            timeout_seconds: 120.0,
            embed_model: "hash".into(),
            chunk_policy: ChunkPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit: Option<RetrievalHit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_location: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifact_notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub requirement_id: RequirementId,
    pub status: Status,
    pub justification: String,
    #[serde(default)]
    pub evidence: Evidence,
    /// Classifier replies in call order (empty when gated).
    #[serde(default)]
    pub raw_replies: Vec<String>,
}

impl JudgeVerdict {
    pub fn to_verdict(&self) -> Verdict {
        Verdict {
            requirement_id: self.requirement_id,
            status: self.status,
            justification: self.justification.clone(),
        }
    }
}

const CLASSIFIER_SYSTEM: &str = "You are a strict code reviewer. You decide whether a candidate solution satisfies one requirement, using the code excerpt and execution artifacts you are shown. Begin your reply with exactly one word, SATISFIED or UNSATISFIED, followed by a colon and a short justification.";

const REASK: &str = "Your reply could not be read. Answer again, beginning with exactly SATISFIED or UNSATISFIED, followed by a colon and a short justification.";

fn path_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?:[A-Za-z0-9_.\-]+/)*[A-Za-z0-9_\-]+\.[A-Za-z][A-Za-z0-9]{0,7}\b").expect("valid regex")
    })
}

const ARTIFACT_EXTENSIONS: &[&str] = &[
    "py", "txt", "csv", "tsv", "json", "jsonl", "png", "jpg", "jpeg", "gif", "pdf", "pkl", "pt", "pth", "h5",
    "npy", "npz", "joblib", "onnx", "ckpt", "md", "log", "sh", "yaml", "yml", "html", "parquet", "ipynb",
    "wav", "mp3", "mp4", "bin", "model", "xml",
];

/// File paths named in a requirement text, e.g. `results/metrics/accuracy_score.txt`.
pub fn referenced_paths(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in path_regex().find_iter(text) {
        let candidate = m.as_str().trim_end_matches('.');
        let ext = candidate.rsplit('.').next().unwrap_or("").to_ascii_lowercase();
        if (candidate.contains('/') || ARTIFACT_EXTENSIONS.contains(&ext.as_str()))
            && !out.iter().any(|p| p == candidate)
        {
            out.push(candidate.to_string());
        }
    }
    out
}

/// Every path referenced by any requirement of the task.
pub fn expected_artifacts(task: &Task) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for r in task.requirements() {
        for p in referenced_paths(&r.text) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

fn artifact_notes(requirement: &Requirement, artifacts: &BTreeMap<String, ArtifactPresence>) -> Vec<String> {
    referenced_paths(&requirement.text)
        .into_iter()
        .map(|path| match artifacts.get(&path) {
            Some(a) if a.exists => {
                let mut preview: String = a.preview.chars().take(200).collect();
                if preview.len() < a.preview.len() {
                    preview.push_str("...");
                }
                format!(
                    "{path}: present ({} bytes), starts with: {:?}",
                    a.byte_size.unwrap_or(0),
                    preview
                )
            }
            Some(a) => match &a.note {
                Some(note) => format!("{path}: absent ({note})"),
                None => format!("{path}: absent"),
            },
            None => format!("{path}: not checked"),
        })
        .collect()
}

/// Reads a classifier reply. The first word must be SATISFIED or
/// UNSATISFIED (case-insensitive, leading markdown emphasis ignored).
pub fn parse_verdict_reply(reply: &str) -> Option<(Status, String)> {
    let t = reply.trim_start().trim_start_matches(['*', '#', '`', '"', '\'', '_', ' ']);
    let token_len = |word: &str| -> Option<usize> {
        let head = t.get(..word.len())?;
        let boundary = t[word.len()..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        (head.eq_ignore_ascii_case(word) && boundary).then_some(word.len())
    };
    let (status, n) = match (token_len("UNSATISFIED"), token_len("SATISFIED")) {
        (Some(n), _) => (Status::Unsatisfied, n),
        (None, Some(n)) => (Status::Satisfied, n),
        (None, None) => return None,
    };
    let rest = t[n..]
        .trim_start_matches(['*', '_', '`', '"', '\''])
        .trim_start_matches([':', '-', '.', ',', ' ', '\u{2013}', '\u{2014}'])
        .trim();
    let justification = if rest.is_empty() {
        "no justification given".to_string()
    } else {
        rest.to_string()
    };
    Some((status, justification))
}

pub fn classifier_prompt(
    requirement: &Requirement,
    chunk: &Chunk,
    parents: &[&Verdict],
    notes: &[String],
) -> String {
    let mut prompt = format!("Requirement R{}: {}\n\nPrerequisites:\n", requirement.id, requirement.text);
    if parents.is_empty() {
        prompt.push_str("- none\n");
    }
    for p in parents {
        let first_line = p.justification.lines().next().unwrap_or("");
        prompt.push_str(&format!("- R{} ({}): {}\n", p.requirement_id, p.status, first_line));
    }
    prompt.push_str(&format!(
        "\nMost relevant code ({}, lines {}-{}):\n```\n{}",
        chunk.file_path, chunk.start_line, chunk.end_line, chunk.text
    ));
    if !chunk.text.ends_with('\n') {
        prompt.push('\n');
    }
    prompt.push_str("```\n");
    if !notes.is_empty() {
        prompt.push_str("\nFiles after execution:\n");
        for n in notes {
            prompt.push_str(&format!("- {n}\n"));
        }
    }
    prompt
}

/// Judges one requirement whose parents have all been judged. Gated
/// requirements return without calling the provider.
pub fn classify_requirement(
    requirement: &Requirement,
    hit: &RetrievalHit,
    chunk: &Chunk,
    parents: &[&Verdict],
    artifacts: &BTreeMap<String, ArtifactPresence>,
    provider: &dyn Provider,
    config: &JudgeConfig,
) -> Result<(JudgeVerdict, Usage), JudgeError> {
    for &p in &requirement.deps {
        if !parents.iter().any(|v| v.requirement_id == p) {
            return Err(JudgeError::MissingParent(p));
        }
    }
    let blocking: Vec<String> = parents
        .iter()
        .filter(|v| v.status != Status::Satisfied)
        .map(|v| format!("R{}", v.requirement_id))
        .collect();
    if !blocking.is_empty() {
        return Ok((
            JudgeVerdict {
                requirement_id: requirement.id,
                status: Status::Gated,
                justification: format!("gated: prerequisite {} not satisfied", blocking.join(", ")),
                evidence: Evidence::default(),
                raw_replies: Vec::new(),
            },
            Usage::default(),
        ));
    }

    let notes = artifact_notes(requirement, artifacts);
    let mut messages = vec![
        ChatMessage::system(CLASSIFIER_SYSTEM),
        ChatMessage::user(classifier_prompt(requirement, chunk, parents, &notes)),
    ];
    let mut usage = Usage::default();
    let mut raw_replies = Vec::new();
    let mut parsed = None;
    for attempt in 0..2 {
        let request = ProviderRequest {
            model: config.model.clone(),
            payload: crate::providers::RequestPayload::Chat {
                messages: messages.clone(),
            },
            temperature: config.temperature,
            max_output_tokens: config.max_output_tokens,
            timeout_seconds: config.timeout_seconds,
        };
        let response = provider.send(&request)?;
        usage += response.usage;
        let reply = response.into_text()?;
        parsed = parse_verdict_reply(&reply);
        raw_replies.push(reply.clone());
        if parsed.is_some() {
            break;
        }
        if attempt == 0 {
            messages.push(ChatMessage::assistant(if reply.is_empty() { "(empty)".to_string() } else { reply }));
            messages.push(ChatMessage::user(REASK));
        }
    }
    let (status, justification) = parsed.unwrap_or_else(|| {
        (
            Status::Unsatisfied,
            "UnparseableVerdict: classifier reply did not begin with SATISFIED or UNSATISFIED after one re-ask"
                .to_string(),
        )
    });
    Ok((
        JudgeVerdict {
            requirement_id: requirement.id,
            status,
            justification,
            evidence: Evidence {
                hit: Some(hit.clone()),
                chunk_location: Some(format!("{}:{}-{}", chunk.file_path, chunk.start_line, chunk.end_line)),
                artifact_notes: notes,
            },
            raw_replies,
        },
        usage,
    ))
}

/// Full judging of one workspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgement {
    pub verdicts: VerdictMap,
    pub details: Vec<JudgeVerdict>,
    #[serde(default)]
    pub usage: Usage,
}

impl Judgement {
    /// Every classifier reply, in the order the provider produced them.
    pub fn raw_replies(&self) -> Vec<String> {
        // Details are stored in judging order.
        self.details.iter().flat_map(|d| d.raw_replies.iter().cloned()).collect()
    }
}

/// Judges every requirement in topological order. Code files are chunked;
/// when a solution has no code files besides the run script, the run script
/// is chunked instead.
pub fn judge_task(
    task: &Task,
    workspace: &SolutionWorkspace,
    artifacts: &BTreeMap<String, ArtifactPresence>,
    judge: &dyn Provider,
    embedder: &dyn Provider,
    config: &JudgeConfig,
) -> Result<Judgement, JudgeError> {
    workspace.validate()?;
    let mut chunks = chunk_workspace(workspace, config.chunk_policy);
    if chunks.is_empty() {
        chunks = chunk_workspace(
            workspace,
            ChunkPolicy {
                include_run_script: true,
                ..config.chunk_policy
            },
        );
    }
    if chunks.is_empty() {
        return Err(JudgeError::NoChunks);
    }
    let order = topological_order(task.graph()).expect("task graphs are validated on construction");
    let mut verdicts = VerdictMap::new();
    let mut details = Vec::with_capacity(order.len());
    let mut usage = Usage::default();
    let mut retriever: Option<Retriever<'_>> = None;

    for id in order {
        let requirement = &task.requirements()[id];
        let parents: Vec<&Verdict> = requirement
            .deps
            .iter()
            .map(|p| verdicts.get(*p).ok_or(JudgeError::MissingParent(*p)))
            .collect::<Result<_, _>>()?;
        let gated = parents.iter().any(|v| v.status != Status::Satisfied);
        let (verdict, used) = if gated {
            let placeholder = RetrievalHit {
                requirement_id: id,
                chunk_id: 0,
                similarity: 0.0,
            };
            classify_requirement(requirement, &placeholder, &chunks[0], &parents, artifacts, judge, config)?
        } else {
            if retriever.is_none() {
                retriever = Some(Retriever::new(&chunks, embedder, &config.embed_model)?);
            }
            let r = retriever.as_ref().expect("initialised above");
            let query = embed(&requirement.text, embedder, &config.embed_model)?;
            let hit = r.best(id, &query)?;
            let chunk = r.chunk(hit.chunk_id).expect("hit refers to a known chunk");
            classify_requirement(requirement, &hit, chunk, &parents, artifacts, judge, config)?
        };
        usage += used;
        verdicts.insert(verdict.to_verdict());
        details.push(verdict);
    }
    Ok(Judgement {
        verdicts,
        details,
        usage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{HashEmbedder, ScriptedProvider};
    use crate::scoring::{effective_score, Score};
    use crate::task::fixtures::fig5;
    use crate::workspace::{fixtures::FIG5_SOLUTION_OK, parse_solution};

    fn v(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_cases() {
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let hand = 1.0 / 2f64.sqrt();
        assert!((cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((cosine_similarity(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap() - hand).abs() < 1e-12);
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(JudgeError::DimensionMismatch(1, 2))
        ));
        assert!(matches!(
            cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])),
            Err(JudgeError::ZeroVector)
        ));
        assert!(matches!(EmbeddingVector::new(vec![f64::NAN]), Err(JudgeError::NonFinite)));
    }

    #[test]
    fn embed_contract() {
        let e = HashEmbedder::new(64, 3);
        let a = embed("train an SVM", &e, "hash").unwrap();
        assert_eq!(a.dimension(), 64);
        assert_eq!(a, embed("train an SVM", &e, "hash").unwrap());
        assert!(matches!(embed("", &e, "hash"), Err(JudgeError::EmptyText)));
    }

    fn chunk(id: usize, text: &str) -> Chunk {
        Chunk {
            id,
            file_path: format!("f{id}.py"),
            start_line: 1,
            end_line: 1,
            text: text.into(),
        }
    }

    fn requirement(text: &str) -> Requirement {
        Requirement {
            id: 0,
            text: text.into(),
            category: String::new(),
            deps: Default::default(),
        }
    }

    #[test]
    fn retrieval_single_and_ties() {
        let e = HashEmbedder::default();
        let one = [chunk(0, "completely unrelated words")];
        assert_eq!(retrieve_best_chunk(&requirement("svm model"), &one, &e, "h").unwrap().chunk_id, 0);
        let same = [chunk(0, "svm model"), chunk(1, "svm model")];
        assert_eq!(retrieve_best_chunk(&requirement("other"), &same, &e, "h").unwrap().chunk_id, 0);
        let three = [chunk(0, "load dataset"), chunk(1, "train svm classifier"), chunk(2, "write accuracy")];
        let hit = retrieve_best_chunk(&requirement("train svm classifier"), &three, &e, "h").unwrap();
        assert_eq!(hit.chunk_id, 1);
        assert!((hit.similarity - 1.0).abs() < 1e-12);
        assert!(matches!(
            retrieve_best_chunk(&requirement("x"), &[], &e, "h"),
            Err(JudgeError::NoChunks)
        ));
    }

    #[test]
    fn reply_parsing() {
        assert_eq!(
            parse_verdict_reply("SATISFIED: loads the data").unwrap(),
            (Status::Satisfied, "loads the data".into())
        );
        assert_eq!(
            parse_verdict_reply("**UNSATISFIED** - no SVM").unwrap(),
            (Status::Unsatisfied, "no SVM".into())
        );
        assert_eq!(parse_verdict_reply("satisfied").unwrap().1, "no justification given");
        assert!(parse_verdict_reply("The requirement is satisfied").is_none());
        assert!(parse_verdict_reply("SATISFIEDLY").is_none());
        assert!(parse_verdict_reply("").is_none());
    }

    #[test]
    fn referenced_path_extraction() {
        assert_eq!(
            referenced_paths("Accuracy written to results/metrics/accuracy_score.txt."),
            vec!["results/metrics/accuracy_score.txt"]
        );
        assert_eq!(referenced_paths("Sentiment140 is loaded in src/data_loader.py"), vec!["src/data_loader.py"]);
        assert!(referenced_paths("Use Word2Vec, e.g. GloVe").is_empty());
        assert_eq!(referenced_paths("save model.pkl and model.pkl"), vec!["model.pkl"]);
    }

    fn parent(id: usize, status: Status) -> Verdict {
        Verdict {
            requirement_id: id,
            status,
            justification: "because".into(),
        }
    }

    #[test]
    fn classify_gated_makes_no_call() {
        let mut r = requirement("child");
        r.id = 1;
        r.deps.insert(0);
        let p = ScriptedProvider::texts(["SATISFIED: x"]);
        let failed = parent(0, Status::Unsatisfied);
        let hit = RetrievalHit { requirement_id: 1, chunk_id: 0, similarity: 0.0 };
        let (verdict, _) =
            classify_requirement(&r, &hit, &chunk(0, "x"), &[&failed], &BTreeMap::new(), &p, &JudgeConfig::default())
                .unwrap();
        assert_eq!(verdict.status, Status::Gated);
        assert_eq!(p.calls(), 0);
        assert!(matches!(
            classify_requirement(&r, &hit, &chunk(0, "x"), &[], &BTreeMap::new(), &p, &JudgeConfig::default()),
            Err(JudgeError::MissingParent(0))
        ));
    }

    #[test]
    fn classify_satisfied_with_prompt_contents() {
        let mut r = requirement("Accuracy written to results/metrics/accuracy_score.txt");
        r.id = 1;
        r.deps.insert(0);
        let p = ScriptedProvider::texts(["SATISFIED: the file holds 0.81"]);
        let ok = parent(0, Status::Satisfied);
        let mut artifacts = BTreeMap::new();
        artifacts.insert(
            "results/metrics/accuracy_score.txt".to_string(),
            ArtifactPresence { exists: true, byte_size: Some(5), preview: "0.81\n".into(), note: None },
        );
        let hit = RetrievalHit { requirement_id: 1, chunk_id: 0, similarity: 0.5 };
        let (verdict, _) =
            classify_requirement(&r, &hit, &chunk(0, "print(acc)"), &[&ok], &artifacts, &p, &JudgeConfig::default())
                .unwrap();
        assert_eq!(verdict.status, Status::Satisfied);
        assert_eq!(verdict.justification, "the file holds 0.81");
        let req = &p.requests()[0];
        assert_eq!(req.temperature, 0.0);
        let crate::providers::RequestPayload::Chat { messages } = &req.payload else { panic!() };
        let user = &messages[1].content;
        assert!(user.contains("R0 (satisfied): because"));
        assert!(user.contains("print(acc)"));
        assert!(user.contains("results/metrics/accuracy_score.txt: present (5 bytes)"));
    }

    #[test]
    fn classify_reasks_once_then_defaults_unsatisfied() {
        let r = requirement("anything");
        let p = ScriptedProvider::texts(["I think it looks fine", "Overall, yes"]);
        let hit = RetrievalHit { requirement_id: 0, chunk_id: 0, similarity: 0.1 };
        let (verdict, _) =
            classify_requirement(&r, &hit, &chunk(0, "x"), &[], &BTreeMap::new(), &p, &JudgeConfig::default()).unwrap();
        assert_eq!(verdict.status, Status::Unsatisfied);
        assert!(verdict.justification.starts_with("UnparseableVerdict"));
        assert_eq!(p.calls(), 2);
        assert_eq!(verdict.raw_replies.len(), 2);

        let p = ScriptedProvider::texts(["hmm", "SATISFIED: ok"]);
        let (verdict, _) =
            classify_requirement(&r, &hit, &chunk(0, "x"), &[], &BTreeMap::new(), &p, &JudgeConfig::default()).unwrap();
        assert_eq!(verdict.status, Status::Satisfied);
    }

    #[test]
    fn judge_fig5_all_pass_and_r2_failing() {
        let task = fig5();
        let ws = parse_solution(FIG5_SOLUTION_OK, 1).unwrap();
        let e = HashEmbedder::default();
        let all = ScriptedProvider::texts(vec!["SATISFIED: ok"; 5]);
        let j = judge_task(&task, &ws, &BTreeMap::new(), &all, &e, &JudgeConfig::default()).unwrap();
        assert_eq!(effective_score(task.graph(), &j.verdicts).unwrap(), Score::new(5, 5));

        let r2 = ScriptedProvider::texts(["SATISFIED: a", "SATISFIED: b", "UNSATISFIED: no embeddings"]);
        let j = judge_task(&task, &ws, &BTreeMap::new(), &r2, &e, &JudgeConfig::default()).unwrap();
        let statuses: Vec<Status> = j.verdicts.iter().map(|v| v.status).collect();
        assert_eq!(
            statuses,
            vec![Status::Satisfied, Status::Satisfied, Status::Unsatisfied, Status::Gated, Status::Gated]
        );
        assert_eq!(effective_score(task.graph(), &j.verdicts).unwrap().to_string(), "0.400");
        assert_eq!(r2.calls(), 3);
        assert!(j.verdicts.gating_is_sound(task.graph()));
        assert_eq!(j.raw_replies().len(), 3);
    }

    #[test]
    fn judge_empty_workspace_fails_before_calls() {
        let task = fig5();
        let p = ScriptedProvider::texts(["SATISFIED: x"]);
        let err = judge_task(&task, &SolutionWorkspace::default(), &BTreeMap::new(), &p, &HashEmbedder::default(), &JudgeConfig::default());
        assert!(matches!(err, Err(JudgeError::Workspace(WorkspaceError::NoFilesFound))));
        assert_eq!(p.calls(), 0);
    }

    #[test]
    fn judge_provider_failure_propagates() {
        let task = fig5();
        let ws = parse_solution(FIG5_SOLUTION_OK, 1).unwrap();
        let p = ScriptedProvider::texts(["SATISFIED: a"]);
        let err = judge_task(&task, &ws, &BTreeMap::new(), &p, &HashEmbedder::default(), &JudgeConfig::default());
        assert!(matches!(err, Err(JudgeError::Provider(ProviderError::QueueExhausted))));
    }
}
