//! Interactive, dependency-aware evaluation of code-generating models.
//!
//! Tasks are requirement DAGs ([`task`]). A candidate's multi-file answer is
//! parsed into a workspace ([`workspace`]), executed under limits
//! ([`sandbox`]), judged requirement by requirement ([`judge`]) and scored
//! with gating ([`scoring`]). The interviewer/interviewee loop lives in
//! [`dialogue`]; reports, scorecards and annotation exports in
//! [`reporting`]; model backends in [`providers`].

pub mod dialogue;
pub mod judge;
pub mod prompts;
pub mod providers;
pub mod reporting;
pub mod sandbox;
pub mod scoring;
pub mod task;
pub mod workspace;

pub use dialogue::{
    run_session, AgentConfig, AgentRole, Hint, SessionConfig, SessionProviders, SessionTranscript, StopReason,
};
pub use judge::{judge_task, JudgeConfig, Judgement};
pub use providers::{ChatMessage, Provider, ProviderError, Role};
pub use reporting::{EvaluationReport, Scorecard};
pub use sandbox::{ExecutionLimits, ExecutionResult, NetworkPolicy};
pub use scoring::{effective_score, interactive_score, Score, Status, VerdictMap};
pub use task::{parse_task, RequirementGraph, Task};
pub use workspace::{parse_solution, SolutionWorkspace};
