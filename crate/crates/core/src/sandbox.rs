//! Runs a materialized workspace's `execute_workspace.sh` under limits.
//!
//! The script runs via `bash` in its own process group with the workspace as
//! working directory. Both output streams are drained concurrently and capped;
//! on wall-clock expiry the whole group is killed. Whatever the outcome, the
//! group is killed again after the leader exits so background children do
//! not outlive the run.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant, SystemTime};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workspace::{check_path, RUN_SCRIPT};

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("{0} has no {RUN_SCRIPT}")]
    MissingRunScript(PathBuf),
    #[error("failed to spawn run script in {root}: {source}")]
    SpawnFailure {
        root: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid limits: {0}")]
    InvalidLimits(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkPolicy {
    Allow,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLimits {
    pub wall_seconds: f64,
    pub output_cap_bytes: usize,
    pub network: NetworkPolicy,
    pub max_processes: u32,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        Self {
            wall_seconds: 600.0,
            output_cap_bytes: 1 << 20,
            network: NetworkPolicy::Allow,
            max_processes: 256,
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if !(self.wall_seconds.is_finite() && self.wall_seconds > 0.0) {
            return Err(SandboxError::InvalidLimits(format!(
                "wall_seconds must be positive, got {}",
                self.wall_seconds
            )));
        }
        if self.output_cap_bytes == 0 || self.max_processes == 0 {
            return Err(SandboxError::InvalidLimits(
                "output cap and process limit must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum ExitState {
    Code(i32),
    Signal(i32),
}

impl ExitState {
    pub fn success(&self) -> bool {
        matches!(self, ExitState::Code(0))
    }
}

/// Outputs O^(t) and errors E^(t) of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub exit_status: ExitState,
    pub stdout: String,
    pub stderr: String,
    pub stdout_truncated: bool,
    pub stderr_truncated: bool,
    pub wall_time: f64,
    pub timed_out: bool,
    pub produced_files: Vec<String>,
}

pub fn truncation_marker(cap: usize) -> String {
    format!("\n[output truncated at {cap} bytes]\n")
}

/// Environment variables never passed to candidate code.
fn is_credential(name: &str) -> bool {
    let upper = name.to_ascii_uppercase();
    upper.starts_with("REQLOOP_")
        || upper.ends_with("API_KEY")
        || upper.ends_with("_TOKEN")
        || upper.ends_with("_SECRET")
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct FileStamp {
    len: u64,
    modified: Option<SystemTime>,
}

fn snapshot(root: &Path) -> BTreeMap<String, FileStamp> {
    fn walk(dir: &Path, prefix: &str, out: &mut BTreeMap<String, FileStamp>) {
        let Ok(entries) = fs::read_dir(dir) else {
            return;
        };
        for entry in entries.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            let rel = if prefix.is_empty() {
                name
            } else {
                format!("{prefix}/{name}")
            };
            let Ok(ty) = entry.file_type() else { continue };
            if ty.is_dir() {
                walk(&entry.path(), &rel, out);
            } else if let Ok(meta) = entry.metadata() {
                out.insert(
                    rel,
                    FileStamp {
                        len: meta.len(),
                        modified: meta.modified().ok(),
                    },
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, "", &mut out);
    out
}

struct Captured {
    bytes: Vec<u8>,
    truncated: bool,
}

fn drain<R: Read + Send + 'static>(mut reader: R, cap: usize) -> mpsc::Receiver<Captured> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut bytes = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match reader.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(bytes.len());
                    if n > room {
                        truncated = true;
                    }
                    bytes.extend_from_slice(&buf[..n.min(room)]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        let _ = tx.send(Captured { bytes, truncated });
    });
    rx
}

fn render(captured: Option<Captured>, cap: usize) -> (String, bool) {
    match captured {
        Some(c) => {
            let mut text = String::from_utf8_lossy(&c.bytes).into_owned();
            if c.truncated {
                text.push_str(&truncation_marker(cap));
            }
            (text, c.truncated)
        }
        None => (String::new(), false),
    }
}

fn kill_group(pgid: i32) {
    // SAFETY: killpg has no memory-safety preconditions.
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

/// Executes `root/execute_workspace.sh`. A failing candidate is a normal
/// result with a nonzero exit status, not an error.
pub fn execute(root: &Path, limits: &ExecutionLimits) -> Result<ExecutionResult, SandboxError> {
    execute_with_env(root, limits, std::env::vars())
}

/// [`execute`] with an explicit parent environment. Credential-like
/// variables are dropped before the child sees them.
pub fn execute_with_env(
    root: &Path,
    limits: &ExecutionLimits,
    parent_env: impl IntoIterator<Item = (String, String)>,
) -> Result<ExecutionResult, SandboxError> {
    limits.validate()?;
    if !root.join(RUN_SCRIPT).is_file() {
        return Err(SandboxError::MissingRunScript(root.to_path_buf()));
    }
    let before = snapshot(root);

    let mut cmd = Command::new("bash");
    cmd.arg(RUN_SCRIPT)
        .current_dir(root)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .env_clear()
        .envs(parent_env.into_iter().filter(|(k, _)| !is_credential(k)));
    if limits.network == NetworkPolicy::Block {
        // Dead proxy as a fallback for tools that honour it.
        for var in ["http_proxy", "https_proxy", "HTTP_PROXY", "HTTPS_PROXY", "ALL_PROXY"] {
            cmd.env(var, "http://127.0.0.1:9");
        }
    }
    let max_processes = limits.max_processes as libc::rlim_t;
    let isolate_network = limits.network == NetworkPolicy::Block;
    // SAFETY: the closure only calls async-signal-safe libc functions.
    unsafe {
        cmd.pre_exec(move || {
            let lim = libc::rlimit {
                rlim_cur: max_processes,
                rlim_max: max_processes,
            };
            libc::setrlimit(libc::RLIMIT_NPROC, &lim);
            if isolate_network
                && libc::unshare(libc::CLONE_NEWNET) != 0
                && libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET) != 0
            {
                return Err(io::Error::last_os_error());
            }
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|source| SandboxError::SpawnFailure {
        root: root.to_path_buf(),
        source,
    })?;
    let pgid = child.id() as i32;
    let cap = limits.output_cap_bytes;
    let out_rx = drain(child.stdout.take().expect("piped stdout"), cap);
    let err_rx = drain(child.stderr.take().expect("piped stderr"), cap);

    let deadline = start + Duration::from_secs_f64(limits.wall_seconds);
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {}
            Err(_) => {
                kill_group(pgid);
                break child.wait().map_err(|source| SandboxError::SpawnFailure {
                    root: root.to_path_buf(),
                    source,
                })?;
            }
        }
        if Instant::now() >= deadline {
            timed_out = true;
            kill_group(pgid);
            break child.wait().map_err(|source| SandboxError::SpawnFailure {
                root: root.to_path_buf(),
                source,
            })?;
        }
        thread::sleep(Duration::from_millis(5));
    };
    kill_group(pgid);

    // Readers finish once every writer in the group is gone; a process that
    // left the group could hold a pipe open, so bound the wait.
    let grace = Duration::from_secs(2);
    let (stdout, stdout_truncated) = render(out_rx.recv_timeout(grace).ok(), cap);
    let (stderr, stderr_truncated) = render(err_rx.recv_timeout(grace).ok(), cap);
    let wall_time = start.elapsed().as_secs_f64();

    let exit_status = match (status.code(), status.signal()) {
        (Some(code), _) => ExitState::Code(code),
        (None, Some(sig)) => ExitState::Signal(sig),
        (None, None) => ExitState::Code(-1),
    };
    let after = snapshot(root);
    let produced_files = after
        .iter()
        .filter(|(path, stamp)| before.get(*path) != Some(stamp))
        .map(|(path, _)| path.clone())
        .collect();

    Ok(ExecutionResult {
        exit_status,
        stdout,
        stderr,
        stdout_truncated,
        stderr_truncated,
        wall_time,
        timed_out,
        produced_files,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactPresence {
    pub exists: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byte_size: Option<u64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub preview: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

const PREVIEW_BYTES: usize = 4096;

/// Presence, size and a short preview of each expected file under `root`.
pub fn collect_artifacts(root: &Path, expected: &[String]) -> BTreeMap<String, ArtifactPresence> {
    expected
        .iter()
        .map(|rel| {
            let presence = if check_path(rel).is_err() {
                ArtifactPresence {
                    note: Some("unsafe path".into()),
                    ..Default::default()
                }
            } else {
                let path = root.join(rel);
                match fs::metadata(&path) {
                    Ok(meta) if meta.is_file() => {
                        let mut head = Vec::with_capacity(PREVIEW_BYTES);
                        if let Ok(f) = fs::File::open(&path) {
                            let _ = f.take(PREVIEW_BYTES as u64).read_to_end(&mut head);
                        }
                        ArtifactPresence {
                            exists: true,
                            byte_size: Some(meta.len()),
                            preview: String::from_utf8_lossy(&head).into_owned(),
                            note: None,
                        }
                    }
                    Ok(_) => ArtifactPresence {
                        note: Some("path is a directory, not a file".into()),
                        ..Default::default()
                    },
                    Err(_) => ArtifactPresence::default(),
                }
            };
            (rel.clone(), presence)
        })
        .collect()
}
