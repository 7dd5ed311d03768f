//! Tasks modeled as requirement dependency graphs.
//!
//! A task file is a JSON document:
//!
//! ```json
//! {
//!   "id": "S26",
//!   "query": "Build a sentiment analysis system ...",
//!   "category": "Natural Language Processing",
//!   "requirements": [
//!     { "id": 0, "text": "...", "category": "Dataset or Environment", "deps": [] },
//!     { "id": 1, "text": "...", "category": "Data preprocessing", "deps": [0] }
//!   ]
//! }
//! ```
//!
//! Requirement ids are dense 0-based ordinals in file order. A benchmark
//! directory holds one such file per task plus `ground_truth/<task_id>/`
//! reference workspaces.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workspace::{self, SolutionWorkspace, WorkspaceError};

/// Ordinal index of a requirement within its task.
pub type RequirementId = usize;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("malformed task document: {0}")]
    MalformedDocument(String),
    #[error("requirement R{requirement} depends on unknown requirement R{dep}")]
    UnknownDependency {
        requirement: RequirementId,
        dep: RequirementId,
    },
    #[error("cyclic dependency among requirements {members:?}")]
    CyclicDependency { members: Vec<RequirementId> },
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ground truth for task {task_id}: {source}")]
    GroundTruth {
        task_id: String,
        #[source]
        source: WorkspaceError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: RequirementId,
    pub text: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub deps: BTreeSet<RequirementId>,
}

/// Requirements plus the dependency edges implied by their `deps`.
///
/// Construction does not validate; call [`validate_graph`] or build a
/// [`Task`], which refuses invalid graphs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RequirementGraph {
    requirements: Vec<Requirement>,
}

impl RequirementGraph {
    pub fn new(requirements: Vec<Requirement>) -> Self {
        Self { requirements }
    }

    pub fn len(&self) -> usize {
        self.requirements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
    }

    pub fn requirements(&self) -> &[Requirement] {
        &self.requirements
    }

    pub fn requirement(&self, id: RequirementId) -> Option<&Requirement> {
        self.requirements.get(id)
    }

    /// The parent set P(j). Empty for unknown ids.
    pub fn parents(&self, id: RequirementId) -> &BTreeSet<RequirementId> {
        static EMPTY: BTreeSet<RequirementId> = BTreeSet::new();
        self.requirements.get(id).map_or(&EMPTY, |r| &r.deps)
    }

    /// Edge set `(parent, child)`, sorted.
    pub fn edges(&self) -> BTreeSet<(RequirementId, RequirementId)> {
        self.requirements
            .iter()
            .enumerate()
            .flat_map(|(j, r)| r.deps.iter().map(move |&i| (i, j)))
            .collect()
    }

    pub fn children(&self, id: RequirementId) -> Vec<RequirementId> {
        self.requirements
            .iter()
            .enumerate()
            .filter(|(_, r)| r.deps.contains(&id))
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Finding {
    /// Requirements lying on a dependency cycle (a self-loop has one member).
    Cycle { members: Vec<RequirementId> },
    UnknownDep {
        requirement: RequirementId,
        dep: RequirementId,
    },
    /// Requirement at position `position` carries a different `id`.
    NonDenseId {
        position: usize,
        id: RequirementId,
    },
    EmptyText { requirement: RequirementId },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Cycle { members } => {
                let names: Vec<String> = members.iter().map(|m| format!("R{m}")).collect();
                write!(f, "cycle: {{{}}}", names.join(", "))
            }
            Finding::UnknownDep { requirement, dep } => {
                write!(f, "unknown-dep: R{requirement} depends on R{dep}")
            }
            Finding::NonDenseId { position, id } => {
                write!(f, "non-dense-id: position {position} has id {id}")
            }
            Finding::EmptyText { requirement } => write!(f, "empty-text: R{requirement}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Checks ids, texts, dependency ranges and acyclicity. Never fails; problems
/// are returned as findings.
pub fn validate_graph(graph: &RequirementGraph) -> ValidationReport {
    let m = graph.len();
    let mut findings = Vec::new();
    for (position, req) in graph.requirements().iter().enumerate() {
        if req.id != position {
            findings.push(Finding::NonDenseId {
                position,
                id: req.id,
            });
        }
        if req.text.trim().is_empty() {
            findings.push(Finding::EmptyText {
                requirement: position,
            });
        }
        for &dep in &req.deps {
            if dep >= m {
                findings.push(Finding::UnknownDep {
                    requirement: position,
                    dep,
                });
            }
        }
    }
    for members in cyclic_components(graph) {
        findings.push(Finding::Cycle { members });
    }
    ValidationReport { findings }
}

/// Strongly connected components that contain a cycle (size > 1, or a
/// self-loop). Out-of-range deps are ignored. Members sorted ascending;
/// components ordered by their smallest member.
fn cyclic_components(graph: &RequirementGraph) -> Vec<Vec<RequirementId>> {
    // Tarjan, iterative.
    let m = graph.len();
    let adj: Vec<Vec<usize>> = graph
        .requirements()
        .iter()
        .map(|r| r.deps.iter().copied().filter(|&d| d < m).collect())
        .collect();
    let mut index = vec![usize::MAX; m];
    let mut low = vec![0usize; m];
    let mut on_stack = vec![false; m];
    let mut stack = Vec::new();
    let mut next = 0usize;
    let mut out = Vec::new();

    for root in 0..m {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut edge)) = work.last_mut() {
            if *edge == 0 && index[v] == usize::MAX {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *edge < adj[v].len() {
                let w = adj[v][*edge];
                *edge += 1;
                if index[w] == usize::MAX {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                let self_loop = comp.len() == 1 && adj[v].contains(&v);
                if comp.len() > 1 || self_loop {
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out.sort();
    out
}

/// Kahn's algorithm with a min-ordered frontier: every id follows its
/// parents and ties go to the smallest id.
pub fn topological_order(graph: &RequirementGraph) -> Result<Vec<RequirementId>, TaskError> {
    let m = graph.len();
    let mut indegree = vec![0usize; m];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (j, req) in graph.requirements().iter().enumerate() {
        for &i in &req.deps {
            if i >= m {
                return Err(TaskError::UnknownDependency {
                    requirement: j,
                    dep: i,
                });
            }
            indegree[j] += 1;
            children[i].push(j);
        }
    }
    let mut ready: BTreeSet<usize> = (0..m).filter(|&j| indegree[j] == 0).collect();
    let mut order = Vec::with_capacity(m);
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for &c in &children[next] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != m {
        let members = cyclic_components(graph).into_iter().flatten().collect();
        return Err(TaskError::CyclicDependency { members });
    }
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: String,
    pub query: String,
    pub category: String,
    graph: RequirementGraph,
}

impl Task {
    /// Builds a task, rejecting graphs with any validation finding.
    pub fn new(
        id: impl Into<String>,
        query: impl Into<String>,
        category: impl Into<String>,
        graph: RequirementGraph,
    ) -> Result<Self, TaskError> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(TaskError::MalformedDocument("task id is empty".into()));
        }
        if graph.is_empty() {
            return Err(TaskError::MalformedDocument(format!("task {id} has no requirements")));
        }
        let report = validate_graph(&graph);
        if let Some(first) = report.findings.first() {
            let unknown = report.findings.iter().find_map(|f| match f {
                Finding::UnknownDep { requirement, dep } => Some(TaskError::UnknownDependency {
                    requirement: *requirement,
                    dep: *dep,
                }),
                _ => None,
            });
            let cycle = report.findings.iter().find_map(|f| match f {
                Finding::Cycle { members } => Some(TaskError::CyclicDependency {
                    members: members.clone(),
                }),
                _ => None,
            });
            return Err(unknown
                .or(cycle)
                .unwrap_or_else(|| TaskError::MalformedDocument(first.to_string())));
        }
        Ok(Self {
            id,
            query: query.into(),
            category: category.into(),
            graph,
        })
    }

    pub fn graph(&self) -> &RequirementGraph {
        &self.graph
    }

    pub fn requirements(&self) -> &[Requirement] {
        self.graph.requirements()
    }

    /// Number of requirements, m.
    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDocument {
    id: String,
    query: String,
    #[serde(default)]
    category: String,
    requirements: Vec<Requirement>,
}

impl Serialize for Task {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        TaskDocument {
            id: self.id.clone(),
            query: self.query.clone(),
            category: self.category.clone(),
            requirements: self.graph.requirements.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Task {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let doc = TaskDocument::deserialize(deserializer)?;
        Task::new(
            doc.id,
            doc.query,
            doc.category,
            RequirementGraph::new(doc.requirements),
        )
        .map_err(serde::de::Error::custom)
    }
}

/// Parses one task document, preserving requirement order.
pub fn parse_task(document: &str) -> Result<Task, TaskError> {
    let doc: TaskDocument = serde_json::from_str(document)
        .map_err(|e| TaskError::MalformedDocument(e.to_string()))?;
    Task::new(
        doc.id,
        doc.query,
        doc.category,
        RequirementGraph::new(doc.requirements),
    )
}

pub fn serialize_task(task: &Task) -> String {
    serde_json::to_string_pretty(task).expect("task serialization is infallible")
}

/// Reference solution S* for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub task_id: String,
    pub workspace: SolutionWorkspace,
    #[serde(default)]
    pub provenance: String,
}

/// A task file that failed to load, kept so `validate` can report all of them.
#[derive(Debug)]
pub struct LoadFailure {
    pub path: PathBuf,
    pub task_id: Option<String>,
    pub error: TaskError,
}

#[derive(Debug, Default)]
pub struct Benchmark {
    pub root: PathBuf,
    pub tasks: Vec<Task>,
    pub ground_truth: BTreeMap<String, GroundTruth>,
    pub failures: Vec<LoadFailure>,
}

impl Benchmark {
    pub fn task(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }
}

/// Loads every `*.json` task file directly under `dir` (sorted by file name)
/// and any `ground_truth/<task_id>/` workspace directories. Per-file failures
/// are collected rather than aborting the load.
pub fn load_benchmark(dir: &Path) -> Result<Benchmark, TaskError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| TaskError::Io { path, source }
    };
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();

    let mut bench = Benchmark {
        root: dir.to_path_buf(),
        ..Default::default()
    };
    for path in files {
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        match parse_task(&text) {
            Ok(task) => {
                if bench.task(&task.id).is_some() {
                    bench.failures.push(LoadFailure {
                        path,
                        task_id: Some(task.id.clone()),
                        error: TaskError::MalformedDocument(format!(
                            "duplicate task id {}",
                            task.id
                        )),
                    });
                } else {
                    bench.tasks.push(task);
                }
            }
            Err(error) => {
                let task_id = serde_json::from_str::<serde_json::Value>(&text)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(String::from));
                bench.failures.push(LoadFailure {
                    path,
                    task_id,
                    error,
                });
            }
        }
    }

    let gt_root = dir.join("ground_truth");
    for task in &bench.tasks {
        let gt_dir = gt_root.join(&task.id);
        if !gt_dir.is_dir() {
            continue;
        }
        let workspace = workspace::load_directory(&gt_dir, 0).map_err(|source| {
            TaskError::GroundTruth {
                task_id: task.id.clone(),
                source,
            }
        })?;
        bench.ground_truth.insert(
            task.id.clone(),
            GroundTruth {
                task_id: task.id.clone(),
                workspace,
                provenance: gt_dir.display().to_string(),
            },
        );
    }
    Ok(bench)
}
