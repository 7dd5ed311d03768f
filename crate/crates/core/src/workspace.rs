//! Multi-file solutions in fenced-block form.
//!
//! A solution is a sequence of triple-backtick fences. A fence whose first
//! non-blank body line is a comment header (`# <path>` or `// <path>`)
//! becomes a file. Plaintext fences containing the runtime note become
//! placeholders, and the file named `execute_workspace.sh` is the run
//! script. Everything outside fences is ignored.
//!
//! Bodies are stored without the header line, one `\n`-terminated line at a
//! time, so materialized files begin with real code (a shebang stays first).

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Path of the run script inside every workspace.
pub const RUN_SCRIPT: &str = "execute_workspace.sh";

/// Note marking a file the solution produces at runtime.
pub const RUNTIME_NOTE: &str = "This file will be created at runtime";

#[derive(Debug, Error)]
pub enum WorkspaceError {
    #[error("no files found in solution")]
    NoFilesFound,
    #[error("duplicate path {0}")]
    DuplicatePath(String),
    #[error("unsafe path {0}")]
    UnsafePath(String),
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl WorkspaceError {
    fn io(path: &Path) -> impl FnOnce(io::Error) -> Self + '_ {
        move |source| WorkspaceError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileKind {
    Code,
    RuntimePlaceholder,
    RunScript,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub path: String,
    pub kind: FileKind,
    pub language_tag: String,
    pub body: String,
}

impl SolutionFile {
    pub fn line_count(&self) -> usize {
        self.body.lines().count()
    }
}

/// One parsed candidate solution S^(t).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionWorkspace {
    pub files: Vec<SolutionFile>,
    pub source_turn: usize,
}

impl SolutionWorkspace {
    pub fn code_files(&self) -> impl Iterator<Item = &SolutionFile> {
        self.files.iter().filter(|f| f.kind == FileKind::Code)
    }

    pub fn run_script(&self) -> Option<&SolutionFile> {
        self.files.iter().find(|f| f.kind == FileKind::RunScript)
    }

    pub fn placeholders(&self) -> impl Iterator<Item = &SolutionFile> {
        self.files
            .iter()
            .filter(|f| f.kind == FileKind::RuntimePlaceholder)
    }

    pub fn paths(&self) -> Vec<&str> {
        self.files.iter().map(|f| f.path.as_str()).collect()
    }

    /// Checks path uniqueness and safety, and the single-run-script rule.
    pub fn validate(&self) -> Result<(), WorkspaceError> {
        if self.files.is_empty() {
            return Err(WorkspaceError::NoFilesFound);
        }
        let mut seen = BTreeSet::new();
        for f in &self.files {
            check_path(&f.path)?;
            if !seen.insert(f.path.as_str()) {
                return Err(WorkspaceError::DuplicatePath(f.path.clone()));
            }
            if f.kind == FileKind::RunScript && f.path != RUN_SCRIPT {
                return Err(WorkspaceError::UnsafePath(f.path.clone()));
            }
        }
        Ok(())
    }
}

/// Rejects absolute paths, `..` components and anything that is not a plain
/// relative file path.
pub fn check_path(path: &str) -> Result<(), WorkspaceError> {
    let unsafe_path = || WorkspaceError::UnsafePath(path.to_string());
    if path.is_empty() || path.ends_with('/') || path.contains('\\') || path.contains('\0') {
        return Err(unsafe_path());
    }
    let p = Path::new(path);
    let mut normal = 0;
    for comp in p.components() {
        match comp {
            Component::Normal(_) => normal += 1,
            Component::CurDir => {}
            _ => return Err(unsafe_path()),
        }
    }
    if normal == 0 {
        return Err(unsafe_path());
    }
    Ok(())
}

/// `a/./b` and `./a` normalised to `a/b`, `a`.
fn normalize_path(path: &str) -> String {
    path.split('/')
        .filter(|s| !s.is_empty() && *s != ".")
        .collect::<Vec<_>>()
        .join("/")
}

struct Fence<'a> {
    info: &'a str,
    lines: Vec<&'a str>,
}

/// Splits text into fenced blocks. An opening fence is a line of at least
/// three backticks followed by an info string; it closes at the next line
/// consisting only of at least as many backticks. An unterminated fence
/// runs to the end of input.
fn fences(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut lines = text.split_inclusive('\n');
    while let Some(line) = lines.next() {
        let trimmed = line.trim_end_matches(['\n', '\r']).trim_start();
        let ticks = trimmed.bytes().take_while(|&b| b == b'`').count();
        if ticks < 3 {
            continue;
        }
        let info = trimmed[ticks..].trim();
        if info.contains('`') {
            continue;
        }
        let mut body = Vec::new();
        for inner in lines.by_ref() {
            let t = inner.trim_end_matches(['\n', '\r']).trim();
            let closing = t.len() >= ticks && t.bytes().all(|b| b == b'`');
            if closing {
                break;
            }
            body.push(inner);
        }
        out.push(Fence { info, lines: body });
    }
    out
}

/// Extracts a path from a header line such as `# src/model.py`.
fn header_path(line: &str) -> Option<&str> {
    let line = line.trim();
    let rest = line
        .strip_prefix("//")
        .or_else(|| line.strip_prefix('#'))?
        .trim();
    if rest.is_empty()
        || rest.starts_with(['!', '#'])
        || rest.chars().any(|c| c.is_whitespace() || c.is_control())
    {
        return None;
    }
    Some(rest)
}

fn is_runtime_note(line: &str) -> bool {
    line.trim()
        .trim_start_matches(['#', '/'])
        .trim()
        .trim_end_matches('.')
        .eq_ignore_ascii_case(RUNTIME_NOTE)
}

fn is_plaintext(info: &str) -> bool {
    matches!(
        info.split_whitespace().next().unwrap_or(""),
        "" | "plaintext" | "text" | "txt" | "plain"
    )
}

/// Parses raw model output into a workspace. Never panics; malformed input
/// yields a typed error.
pub fn parse_solution(text: &str, turn: usize) -> Result<SolutionWorkspace, WorkspaceError> {
    let mut files = Vec::new();
    for fence in fences(text) {
        let Some(first) = fence.lines.iter().position(|l| !l.trim().is_empty()) else {
            continue;
        };
        let Some(raw_path) = header_path(fence.lines[first]) else {
            continue;
        };
        if raw_path.starts_with('/') {
            return Err(WorkspaceError::UnsafePath(raw_path.to_string()));
        }
        check_path(raw_path)?;
        let path = normalize_path(raw_path);
        let rest = &fence.lines[first + 1..];
        let language_tag = fence.info.to_string();

        let (kind, body) = if is_plaintext(fence.info) && rest.iter().any(|l| is_runtime_note(l)) {
            (FileKind::RuntimePlaceholder, String::new())
        } else {
            let mut body: String = rest.concat();
            if !body.is_empty() && !body.ends_with('\n') {
                body.push('\n');
            }
            let kind = if path == RUN_SCRIPT {
                FileKind::RunScript
            } else {
                FileKind::Code
            };
            (kind, body)
        };
        files.push(SolutionFile {
            path,
            kind,
            language_tag,
            body,
        });
    }
    let ws = SolutionWorkspace {
        files,
        source_turn: turn,
    };
    ws.validate()?;
    Ok(ws)
}

/// Lossy-UTF-8 entry point for arbitrary bytes.
pub fn parse_solution_bytes(bytes: &[u8], turn: usize) -> Result<SolutionWorkspace, WorkspaceError> {
    parse_solution(&String::from_utf8_lossy(bytes), turn)
}

/// Renders a workspace back into the fenced format. Fences are lengthened
/// when a body contains a line of backticks.
pub fn serialize_solution(ws: &SolutionWorkspace) -> String {
    let mut out = String::new();
    for (i, f) in ws.files.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let longest = f
            .body
            .lines()
            .map(|l| l.trim())
            .filter(|l| !l.is_empty() && l.bytes().all(|b| b == b'`'))
            .map(str::len)
            .max()
            .unwrap_or(0);
        let fence = "`".repeat(longest.max(2) + 1);
        out.push_str(&fence);
        out.push_str(&f.language_tag);
        out.push('\n');
        out.push_str("# ");
        out.push_str(&f.path);
        out.push('\n');
        match f.kind {
            FileKind::RuntimePlaceholder => {
                out.push_str("# ");
                out.push_str(RUNTIME_NOTE);
                out.push('\n');
            }
            _ => {
                out.push_str(&f.body);
                if !f.body.is_empty() && !f.body.ends_with('\n') {
                    out.push('\n');
                }
            }
        }
        out.push_str(&fence);
        out.push('\n');
    }
    out
}

/// Compact listing used where full texts would be too long.
pub fn file_listing(ws: &SolutionWorkspace) -> String {
    ws.files
        .iter()
        .map(|f| {
            let kind = match f.kind {
                FileKind::Code => format!("{} lines", f.line_count()),
                FileKind::RunScript => format!("run script, {} lines", f.line_count()),
                FileKind::RuntimePlaceholder => "created at runtime".to_string(),
            };
            format!("- {} ({kind})", f.path)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub kind: FileKind,
    /// Bytes written; 0 for placeholders, which only create directories.
    pub bytes: usize,
}

/// Writes the workspace under `root`. Code and run-script bodies are written
/// byte-exactly; placeholders only get their parent directories.
pub fn materialize(ws: &SolutionWorkspace, root: &Path) -> Result<Vec<ManifestEntry>, WorkspaceError> {
    ws.validate()?;
    let mut manifest = Vec::with_capacity(ws.files.len());
    for f in &ws.files {
        let target = root.join(&f.path);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(WorkspaceError::io(parent))?;
        }
        let bytes = match f.kind {
            FileKind::RuntimePlaceholder => 0,
            FileKind::Code | FileKind::RunScript => {
                fs::write(&target, f.body.as_bytes()).map_err(WorkspaceError::io(&target))?;
                f.body.len()
            }
        };
        if f.kind == FileKind::RunScript {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&target, fs::Permissions::from_mode(0o755))
                .map_err(WorkspaceError::io(&target))?;
        }
        manifest.push(ManifestEntry {
            path: f.path.clone(),
            kind: f.kind,
            bytes,
        });
    }
    Ok(manifest)
}

fn language_for(path: &str) -> &'static str {
    match Path::new(path).extension().and_then(|e| e.to_str()) {
        Some("py") => "python",
        Some("sh") => "bash",
        Some("js") => "javascript",
        Some("ts") => "typescript",
        Some("rs") => "rust",
        Some("json") => "json",
        Some("yaml" | "yml") => "yaml",
        Some("md") => "markdown",
        _ => "plaintext",
    }
}

/// Reads a directory tree back into a workspace: every regular UTF-8 file
/// becomes a code file, `execute_workspace.sh` the run script. Hidden
/// entries are skipped. Files sorted by path.
pub fn load_directory(root: &Path, turn: usize) -> Result<SolutionWorkspace, WorkspaceError> {
    fn walk(dir: &Path, prefix: &str, out: &mut Vec<(String, PathBuf)>) -> Result<(), WorkspaceError> {
        for entry in fs::read_dir(dir).map_err(WorkspaceError::io(dir))? {
            let entry = entry.map_err(WorkspaceError::io(dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with('.') {
                continue;
            }
            let rel = if prefix.is_empty() {
                name.clone()
            } else {
                format!("{prefix}/{name}")
            };
            let ty = entry.file_type().map_err(WorkspaceError::io(&entry.path()))?;
            if ty.is_dir() {
                walk(&entry.path(), &rel, out)?;
            } else if ty.is_file() {
                out.push((rel, entry.path()));
            }
        }
        Ok(())
    }
    let mut found = Vec::new();
    walk(root, "", &mut found)?;
    found.sort();
    let mut files = Vec::new();
    for (rel, abs) in found {
        let bytes = fs::read(&abs).map_err(WorkspaceError::io(&abs))?;
        let Ok(body) = String::from_utf8(bytes) else {
            continue;
        };
        let kind = if rel == RUN_SCRIPT {
            FileKind::RunScript
        } else {
            FileKind::Code
        };
        files.push(SolutionFile {
            language_tag: language_for(&rel).to_string(),
            path: rel,
            kind,
            body,
        });
    }
    let ws = SolutionWorkspace {
        files,
        source_turn: turn,
    };
    ws.validate()?;
    Ok(ws)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: usize,
    pub file_path: String,
    /// 1-based inclusive line range.
    pub start_line: usize,
    pub end_line: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPolicy {
    pub max_lines: usize,
    /// Also chunk the run script (off by default; only code is judged).
    #[serde(default)]
    pub include_run_script: bool,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        Self {
            max_lines: 80,
            include_run_script: false,
        }
    }
}

/// Fixed windows of `max_lines` lines per file, in file order. Chunk ids are
/// global ordinals.
pub fn chunk_workspace(ws: &SolutionWorkspace, policy: ChunkPolicy) -> Vec<Chunk> {
    let window = policy.max_lines.max(1);
    let mut chunks = Vec::new();
    let eligible = ws.files.iter().filter(|f| match f.kind {
        FileKind::Code => true,
        FileKind::RunScript => policy.include_run_script,
        FileKind::RuntimePlaceholder => false,
    });
    for f in eligible {
        let lines: Vec<&str> = f.body.split_inclusive('\n').collect();
        for (k, window_lines) in lines.chunks(window).enumerate() {
            let start = k * window + 1;
            chunks.push(Chunk {
                id: chunks.len(),
                file_path: f.path.clone(),
                start_line: start,
                end_line: start + window_lines.len() - 1,
                text: window_lines.concat(),
            });
        }
    }
    chunks
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_python_file() {
        let ws = parse_solution("intro\n```python\n# src/model.py\nprint(1)\n```\noutro\n", 2).unwrap();
        assert_eq!(ws.source_turn, 2);
        assert_eq!(ws.files.len(), 1);
        assert_eq!(ws.files[0].path, "src/model.py");
        assert_eq!(ws.files[0].kind, FileKind::Code);
        assert_eq!(ws.files[0].body, "print(1)\n");
    }

    #[test]
    fn runtime_placeholder() {
        let text = "```plaintext\n# results/metrics/accuracy_score.txt\n# This file will be created at runtime\n```\n";
        let ws = parse_solution(text, 0).unwrap();
        assert_eq!(ws.files[0].kind, FileKind::RuntimePlaceholder);
        assert_eq!(ws.files[0].path, "results/metrics/accuracy_score.txt");
        assert!(ws.files[0].body.is_empty());
    }

    #[test]
    fn run_script() {
        let text = "```bash\n# execute_workspace.sh\npython src/main.py\n```\n";
        let ws = parse_solution(text, 0).unwrap();
        assert_eq!(ws.run_script().unwrap().body, "python src/main.py\n");
    }

    #[test]
    fn slash_comment_header_and_leading_blank_lines() {
        let ws = parse_solution("```js\n\n// web/app.js\nlet a = 1;\n```", 0).unwrap();
        assert_eq!(ws.files[0].path, "web/app.js");
        assert_eq!(ws.files[0].body, "let a = 1;\n");
    }

    #[test]
    fn blocks_without_header_are_ignored() {
        let err = parse_solution("```python\nprint(1)\n```\n```bash\n#!/bin/bash\n```\n", 0).unwrap_err();
        assert!(matches!(err, WorkspaceError::NoFilesFound));
        assert!(matches!(parse_solution("", 0), Err(WorkspaceError::NoFilesFound)));
    }

    #[test]
    fn duplicate_and_unsafe_paths() {
        let dup = "```python\n# a.py\n```\n```python\n# ./a.py\nx\n```\n";
        assert!(matches!(parse_solution(dup, 0), Err(WorkspaceError::DuplicatePath(p)) if p == "a.py"));
        for bad in ["# ../etc/passwd", "# /etc/passwd", "# src/../../x.py"] {
            let text = format!("```python\n{bad}\nx\n```\n");
            assert!(
                matches!(parse_solution(&text, 0), Err(WorkspaceError::UnsafePath(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn unterminated_fence_runs_to_end() {
        let ws = parse_solution("```python\n# a.py\nx = 1\ny = 2", 0).unwrap();
        assert_eq!(ws.files[0].body, "x = 1\ny = 2\n");
    }

    #[test]
    fn longer_fences_nest_backticks() {
        let ws = SolutionWorkspace {
            files: vec![SolutionFile {
                path: "README.md".into(),
                kind: FileKind::Code,
                language_tag: "markdown".into(),
                body: "```python\nprint(1)\n```\n".into(),
            }],
            source_turn: 0,
        };
        let text = serialize_solution(&ws);
        assert!(text.starts_with("````markdown\n"));
        assert_eq!(parse_solution(&text, 0).unwrap(), ws);
    }

    #[test]
    fn materialize_writes_files_and_placeholder_dirs() {
        let ws = parse_solution(FIG5_SOLUTION_OK, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = materialize(&ws, dir.path()).unwrap();
        assert_eq!(manifest.len(), 4);
        let loader = fs::read(dir.path().join("src/data_loader.py")).unwrap();
        assert_eq!(loader, ws.files[0].body.as_bytes());
        assert!(dir.path().join("results/metrics").is_dir());
        assert!(!dir.path().join("results/metrics/accuracy_score.txt").exists());
        use std::os::unix::fs::PermissionsExt;
        let mode = fs::metadata(dir.path().join(RUN_SCRIPT)).unwrap().permissions().mode();
        assert_eq!(mode & 0o111, 0o111);
    }

    #[test]
    fn materialize_reports_io_failure_with_path() {
        let ws = parse_solution("```python\n# a/b.py\nx\n```\n", 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a"), "file, not dir").unwrap();
        match materialize(&ws, dir.path()) {
            Err(WorkspaceError::Io { path, .. }) => assert!(path.ends_with("a")),
            other => panic!("expected io failure, got {other:?}"),
        }
    }

    #[test]
    fn load_directory_round_trip() {
        let ws = parse_solution(FIG5_SOLUTION_OK, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        materialize(&ws, dir.path()).unwrap();
        let back = load_directory(dir.path(), 1).unwrap();
        assert_eq!(back.paths(), vec!["execute_workspace.sh", "src/data_loader.py", "src/model.py"]);
        assert_eq!(back.run_script().unwrap().body, ws.run_script().unwrap().body);
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_directory(empty.path(), 0), Err(WorkspaceError::NoFilesFound)));
    }

    fn code_file(path: &str, lines: usize) -> SolutionFile {
        SolutionFile {
            path: path.into(),
            kind: FileKind::Code,
            language_tag: "python".into(),
            body: (1..=lines).map(|i| format!("line {i}\n")).collect(),
        }
    }

    #[test]
    fn chunk_windows() {
        let small = SolutionWorkspace {
            files: vec![code_file("a.py", 10)],
            source_turn: 0,
        };
        let policy = ChunkPolicy {
            max_lines: 50,
            include_run_script: false,
        };
        let chunks = chunk_workspace(&small, policy);
        assert_eq!(chunks.len(), 1);
        assert_eq!((chunks[0].start_line, chunks[0].end_line), (1, 10));

        let big = SolutionWorkspace {
            files: vec![code_file("a.py", 120), code_file("b.py", 3)],
            source_turn: 0,
        };
        let chunks = chunk_workspace(&big, policy);
        let sizes: Vec<usize> = chunks.iter().map(|c| c.end_line - c.start_line + 1).collect();
        assert_eq!(sizes, vec![50, 50, 20, 3]);
        assert_eq!(chunks.iter().map(|c| c.id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        assert!(chunks[..3].iter().all(|c| c.file_path == "a.py"));
        assert_eq!(chunks[3].file_path, "b.py");
        assert!(chunks[3].text.starts_with("line 1\n"));
    }

    #[test]
    fn run_script_excluded_from_chunks_by_default() {
        let ws = parse_solution(FIG5_SOLUTION_OK, 0).unwrap();
        let chunks = chunk_workspace(&ws, ChunkPolicy::default());
        assert!(chunks.iter().all(|c| c.file_path != RUN_SCRIPT));
        let with = chunk_workspace(
            &ws,
            ChunkPolicy {
                include_run_script: true,
                ..Default::default()
            },
        );
        assert!(with.iter().any(|c| c.file_path == RUN_SCRIPT));
    }

    fn arb_workspace() -> impl Strategy<Value = SolutionWorkspace> {
        let line = "[ -~]{0,20}".prop_filter("no fence-like lines", |l: &String| !l.trim_start().starts_with("```"));
        let file = (
            "[a-z]{1,6}(/[a-z]{1,6}){0,2}\\.(py|txt|sh)",
            prop_oneof![Just(FileKind::Code), Just(FileKind::RuntimePlaceholder)],
            prop_oneof![Just("python"), Just("bash"), Just("plaintext")],
            proptest::collection::vec(line, 0..12),
        )
            .prop_map(|(path, kind, tag, lines)| {
                let (tag, body) = match kind {
                    FileKind::RuntimePlaceholder => ("plaintext".to_string(), String::new()),
                    _ => (tag.to_string(), lines.iter().map(|l| format!("{l}\n")).collect()),
                };
                SolutionFile {
                    path,
                    kind,
                    language_tag: tag,
                    body,
                }
            });
        proptest::collection::vec(file, 1..6).prop_map(|files| {
            let mut seen = BTreeSet::new();
            let files = files
                .into_iter()
                .filter(|f| seen.insert(f.path.clone()))
                .filter(|f| !(f.kind == FileKind::Code && f.body.lines().any(is_runtime_note) && f.language_tag == "plaintext"))
                .collect();
            SolutionWorkspace { files, source_turn: 3 }
        })
    }

    proptest! {
        #[test]
        fn serialize_then_parse_is_identity(ws in arb_workspace()) {
            let text = serialize_solution(&ws);
            prop_assert_eq!(parse_solution(&text, 3).unwrap(), ws);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            let _ = parse_solution_bytes(&bytes, 0);
        }

        #[test]
        fn chunks_cover_every_line_once(ws in arb_workspace(), max_lines in 1usize..8) {
            let chunks = chunk_workspace(&ws, ChunkPolicy { max_lines, include_run_script: false });
            for f in ws.code_files() {
                let mine: Vec<&Chunk> = chunks.iter().filter(|c| c.file_path == f.path).collect();
                let mut covered = Vec::new();
                for c in &mine {
                    prop_assert!(c.end_line - c.start_line < max_lines);
                    prop_assert!(!c.text.is_empty());
                    covered.extend(c.start_line..=c.end_line);
                }
                prop_assert_eq!(covered, (1..=f.line_count()).collect::<Vec<_>>());
                prop_assert_eq!(mine.iter().map(|c| c.text.as_str()).collect::<String>(), f.body.clone());
            }
        }
    }
}
