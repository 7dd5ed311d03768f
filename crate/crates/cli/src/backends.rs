//! Turns a provider spec into concrete backends for each agent role.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use reqloop_core::dialogue::{read_transcript, SessionProviders};
use reqloop_core::providers::{HashEmbedder, HttpConfig, HttpProvider, Provider, ReplayProvider, ScriptedProvider, ScriptedReply};
use serde::Deserialize;

use crate::config::{ProviderSpec, RunConfig};

/// Scripted replies per role, as stored in a `scripted:FILE` fixture.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptFile {
    #[serde(default)]
    pub interviewer: Vec<ScriptedReply>,
    #[serde(default)]
    pub interviewee: Vec<ScriptedReply>,
    #[serde(default)]
    pub judge: Vec<ScriptedReply>,
    #[serde(default)]
    pub analyzer: Vec<ScriptedReply>,
}

impl ScriptFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading script {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing script {}", path.display()))
    }
}

pub struct Backends {
    pub session: SessionProviders,
    pub analyzer: Arc<dyn Provider>,
}

pub fn build(config: &RunConfig) -> anyhow::Result<Backends> {
    let hash: Arc<dyn Provider> = Arc::new(HashEmbedder::new(config.session.embed_dimension, HashEmbedder::default().seed));
    Ok(match &config.provider {
        ProviderSpec::Http => {
            let http: Arc<dyn Provider> = Arc::new(HttpProvider::new(HttpConfig::from_env())?);
            let embedder = if config.session.judge.embed_model == "hash" { hash } else { http.clone() };
            Backends {
                session: SessionProviders {
                    interviewer: http.clone(),
                    interviewee: http.clone(),
                    judge: http.clone(),
                    embedder,
                },
                analyzer: http,
            }
        }
        ProviderSpec::Scripted(path) => {
            let script = ScriptFile::load(path)?;
            Backends {
                session: SessionProviders {
                    interviewer: Arc::new(ScriptedProvider::new(script.interviewer)),
                    interviewee: Arc::new(ScriptedProvider::new(script.interviewee)),
                    judge: Arc::new(ScriptedProvider::new(script.judge)),
                    embedder: hash,
                },
                analyzer: Arc::new(ScriptedProvider::new(script.analyzer)),
            }
        }
        ProviderSpec::Replay(path) => {
            let transcript = read_transcript(path)?;
            Backends {
                session: transcript.replay_providers(),
                analyzer: Arc::new(ReplayProvider::default()),
            }
        }
    })
}
