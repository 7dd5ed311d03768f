//! Command-line front end for the reqloop harness.

pub mod backends;
pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::{Failure, EXIT_USER};
use crate::config::{Flags, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "reqloop", version, about = "Interactive, dependency-aware evaluation of code-generating models")]
pub struct Cli {
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check task files for malformed documents and dependency problems.
    Validate {
        /// Task files; defaults to every task in --benchmark.
        files: Vec<PathBuf>,
        /// Also require `ground_truth/<task_id>/` for every task.
        #[arg(long)]
        require_ground_truth: bool,
    },
    /// Judge an existing workspace directory against one task.
    Judge {
        #[arg(long, value_name = "FILE")]
        task: PathBuf,
        #[arg(long, value_name = "DIR")]
        workspace: PathBuf,
        /// Where to write the verdict map (default `<out>/<task_id>/verdicts.json`).
        #[arg(long, value_name = "FILE")]
        verdicts: Option<PathBuf>,
    },
    /// Run interview sessions for tasks in --benchmark.
    Session {
        /// Only these task ids (repeatable); default is every task.
        #[arg(long = "task", value_name = "ID")]
        tasks: Vec<String>,
    },
    /// Build scorecard.csv and scorecard.json from transcripts.
    Aggregate {
        /// Directory searched for transcripts (default: --out).
        dir: Option<PathBuf>,
    },
    /// Ask the analyzer for a qualitative report on one session.
    Report {
        #[arg(long, value_name = "FILE")]
        transcript: PathBuf,
        /// Default: `report.json` next to the transcript.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Sample hints per interviewee model for offline grading.
    ExportHints {
        /// Directory searched for transcripts (default: --out).
        dir: Option<PathBuf>,
        #[arg(long, default_value_t = 20, value_name = "N")]
        per_model: usize,
        /// Default: `<out>/hints_for_annotation.jsonl`.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: Cli) -> u8 {
    let result = RunConfig::resolve(&cli.flags)
        .map_err(Failure::user)
        .and_then(|config| dispatch(&config, cli.command));
    match result {
        Ok(code) => code,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            code
        }
    }
}

fn dispatch(config: &RunConfig, command: Command) -> commands::CmdResult {
    match command {
        Command::Validate {
            files,
            require_ground_truth,
        } => commands::validate(config, &files, require_ground_truth),
        Command::Judge {
            task,
            workspace,
            verdicts,
        } => commands::judge(config, &task, &workspace, verdicts.as_deref()),
        Command::Session { tasks } => commands::session(config, &tasks),
        Command::Aggregate { dir } => commands::aggregate(config, dir.as_deref().unwrap_or(&config.out)),
        Command::Report { transcript, output } => commands::report(config, &transcript, output.as_deref()),
        Command::ExportHints {
            dir,
            per_model,
            output,
        } => {
            if per_model == 0 {
                return Err(Failure {
                    code: EXIT_USER,
                    error: anyhow::anyhow!("--per-model must be at least 1"),
                });
            }
            commands::export_hints(config, dir.as_deref().unwrap_or(&config.out), per_model, output.as_deref())
        }
    }
}
