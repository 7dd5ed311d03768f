//! Run configuration: an optional TOML file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::Args;
use reqloop_core::dialogue::{AgentConfig, SessionConfig};
use reqloop_core::judge::JudgeConfig;
use reqloop_core::sandbox::{ExecutionLimits, NetworkPolicy};
use reqloop_core::workspace::ChunkPolicy;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Http,
    Scripted(PathBuf),
    Replay(PathBuf),
}

impl FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "http" => Ok(ProviderSpec::Http),
            Some(("scripted", path)) if !path.is_empty() => Ok(ProviderSpec::Scripted(path.into())),
            Some(("replay", path)) if !path.is_empty() => Ok(ProviderSpec::Replay(path.into())),
            _ => Err(format!("expected http, scripted:FILE or replay:FILE, got `{s}`")),
        }
    }
}

fn parse_network(s: &str) -> Result<NetworkPolicy, String> {
    match s {
        "allow" => Ok(NetworkPolicy::Allow),
        "block" => Ok(NetworkPolicy::Block),
        _ => Err(format!("expected allow or block, got `{s}`")),
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML file with run settings.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory holding task files and `ground_truth/<task_id>/`.
    #[arg(long, global = true, value_name = "DIR")]
    pub benchmark: Option<PathBuf>,
    /// Output directory for runs and scorecards.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "MODEL")]
    pub interviewer: Option<String>,
    #[arg(long, global = true, value_name = "MODEL")]
    pub interviewee: Option<String>,
    #[arg(long = "judge", global = true, value_name = "MODEL")]
    pub judge_model: Option<String>,
    #[arg(long, global = true, value_name = "MODEL")]
    pub analyzer: Option<String>,
    #[arg(long, global = true, value_name = "N")]
    pub max_iterations: Option<usize>,
    /// Single-turn run without an interviewer.
    #[arg(long, global = true)]
    pub unguided: bool,
    /// Sessions run concurrently across tasks.
    #[arg(long, global = true, value_name = "N")]
    pub parallel: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    pub limits_wall_seconds: Option<f64>,
    #[arg(long, global = true, value_parser = parse_network, value_name = "allow|block")]
    pub network: Option<NetworkPolicy>,
    /// http, scripted:FILE or replay:FILE.
    #[arg(long, global = true, value_name = "SPEC")]
    pub provider: Option<ProviderSpec>,
    /// Judge only the first and last turn of a session.
    #[arg(long, global = true)]
    pub judge_final_only: bool,
}

/// Keys accepted in the config file. Credentials are not among them; they
/// come from the environment only.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub benchmark: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub interviewer: Option<String>,
    pub interviewee: Option<String>,
    pub judge: Option<String>,
    pub analyzer: Option<String>,
    pub max_iterations: Option<usize>,
    pub guided: Option<bool>,
    pub parallel: Option<usize>,
    pub seed: Option<u64>,
    pub limits_wall_seconds: Option<f64>,
    pub output_cap_bytes: Option<usize>,
    pub max_processes: Option<u32>,
    pub network: Option<String>,
    pub provider: Option<String>,
    pub judge_final_only: Option<bool>,
    pub chunk_max_lines: Option<usize>,
    pub embed_model: Option<String>,
    pub interviewer_temperature: Option<f64>,
    pub interviewee_temperature: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub benchmark: Option<PathBuf>,
    pub out: PathBuf,
    pub session: SessionConfig,
    pub analyzer: AgentConfig,
    pub parallel: usize,
    pub seed: u64,
    pub provider: ProviderSpec,
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> anyhow::Result<Self> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let defaults = SessionConfig::default();
        let pick = |flag: &Option<String>, file: &Option<String>, default: &str| {
            flag.clone().or_else(|| file.clone()).unwrap_or_else(|| default.to_string())
        };

        let mut interviewer = AgentConfig::interviewer(&pick(&flags.interviewer, &file.interviewer, &defaults.interviewer.model));
        let mut interviewee = AgentConfig::interviewee(&pick(&flags.interviewee, &file.interviewee, &defaults.interviewee.model));
        if let Some(t) = file.interviewer_temperature {
            interviewer.temperature = t;
        }
        if let Some(t) = file.interviewee_temperature {
            interviewee.temperature = t;
        }
        let analyzer = AgentConfig::analyzer(&pick(&flags.analyzer, &file.analyzer, &interviewer.model));

        let mut judge = JudgeConfig {
            model: pick(&flags.judge_model, &file.judge, &defaults.judge.model),
            ..JudgeConfig::default()
        };
        if let Some(model) = &file.embed_model {
            judge.embed_model = model.clone();
        }
        if let Some(max_lines) = file.chunk_max_lines {
            if max_lines == 0 {
                bail!("chunk_max_lines must be positive");
            }
            judge.chunk_policy = ChunkPolicy {
                max_lines,
                ..judge.chunk_policy
            };
        }

        let network = match (&flags.network, &file.network) {
            (Some(n), _) => *n,
            (None, Some(s)) => parse_network(s).map_err(anyhow::Error::msg)?,
            (None, None) => defaults.limits.network,
        };
        let limits = ExecutionLimits {
            wall_seconds: flags
                .limits_wall_seconds
                .or(file.limits_wall_seconds)
                .unwrap_or(defaults.limits.wall_seconds),
            output_cap_bytes: file.output_cap_bytes.unwrap_or(defaults.limits.output_cap_bytes),
            network,
            max_processes: file.max_processes.unwrap_or(defaults.limits.max_processes),
        };
        let provider = match (&flags.provider, &file.provider) {
            (Some(p), _) => p.clone(),
            (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
            (None, None) => ProviderSpec::Http,
        };
        let parallel = flags.parallel.or(file.parallel).unwrap_or(1);
        if parallel == 0 {
            bail!("--parallel must be at least 1");
        }

        let session = SessionConfig {
            interviewer,
            interviewee,
            judge,
            limits,
            max_iterations: flags.max_iterations.or(file.max_iterations).unwrap_or(defaults.max_iterations),
            guided: !flags.unguided && file.guided.unwrap_or(true),
            judge_final_only: flags.judge_final_only || file.judge_final_only.unwrap_or(false),
            embed_dimension: defaults.embed_dimension,
        };
        session.validate()?;
        Ok(Self {
            benchmark: flags.benchmark.clone().or(file.benchmark),
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from("runs")),
            session,
            analyzer,
            parallel,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            provider,
        })
    }

    pub fn benchmark_dir(&self) -> anyhow::Result<&Path> {
        match &self.benchmark {
            Some(dir) => Ok(dir),
            None => bail!("no benchmark directory given (use --benchmark DIR)"),
        }
    }
}
