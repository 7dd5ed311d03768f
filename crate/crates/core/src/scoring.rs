//! Dependency-aware scores over verdict maps.
//!
//! A requirement *effectively passes* when it is judged satisfied and every
//! parent effectively passes. Gated requirements are never judged, so their
//! evaluation value is 0 and gating propagates to all descendants. The
//! effective score is the count of effectively passing requirements over m,
//! kept as an exact fraction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task::{RequirementGraph, RequirementId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoringError {
    #[error("no verdict for requirement R{0}")]
    MissingVerdict(RequirementId),
    #[error("graph has no requirements")]
    EmptyGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Satisfied,
    Unsatisfied,
    Gated,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Satisfied => "satisfied",
            Status::Unsatisfied => "unsatisfied",
            Status::Gated => "gated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub requirement_id: RequirementId,
    pub status: Status,
    #[serde(default)]
    pub justification: String,
}

/// One verdict per requirement, keyed by id. Serialized as a list ordered
/// by id; a repeated id keeps the last entry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<Verdict>", into = "Vec<Verdict>")]
pub struct VerdictMap {
    entries: BTreeMap<RequirementId, Verdict>,
}

impl From<Vec<Verdict>> for VerdictMap {
    fn from(list: Vec<Verdict>) -> Self {
        let mut map = Self::new();
        for v in list {
            map.insert(v);
        }
        map
    }
}

impl From<VerdictMap> for Vec<Verdict> {
    fn from(map: VerdictMap) -> Self {
        map.entries.into_values().collect()
    }
}

impl VerdictMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, verdict: Verdict) {
        self.entries.insert(verdict.requirement_id, verdict);
    }

    pub fn get(&self, id: RequirementId) -> Option<&Verdict> {
        self.entries.get(&id)
    }

    pub fn status(&self, id: RequirementId) -> Option<Status> {
        self.entries.get(&id).map(|v| v.status)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Verdict> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Map from raw local judgments (`true` = satisfied), with no gating
    /// applied. Useful for reasoning about g directly.
    pub fn from_outcomes(outcomes: &[bool]) -> Self {
        let mut map = Self::new();
        for (id, &ok) in outcomes.iter().enumerate() {
            map.insert(Verdict {
                requirement_id: id,
                status: if ok {
                    Status::Satisfied
                } else {
                    Status::Unsatisfied
                },
                justification: String::new(),
            });
        }
        map
    }

    /// Map for a solution that could not be judged at all: roots unsatisfied
    /// with `reason`, everything else gated.
    pub fn failing(graph: &RequirementGraph, reason: &str) -> Self {
        let mut map = Self::new();
        for id in 0..graph.len() {
            map.insert(Verdict {
                requirement_id: id,
                status: Status::Unsatisfied,
                justification: reason.to_string(),
            });
        }
        map.apply_gating(graph)
            .expect("every requirement has an entry");
        map
    }

    /// True iff every requirement effectively passes.
    pub fn all_pass(&self, graph: &RequirementGraph) -> bool {
        effective_passes(graph, self).is_ok_and(|p| p.iter().all(|&x| x))
    }

    /// Rewrites entries so that a requirement is `gated` exactly when some
    /// parent does not effectively pass. Entries without gated parents keep
    /// their local status (a previously `gated` entry with passing parents
    /// becomes `unsatisfied`, since it was never judged).
    pub fn apply_gating(&mut self, graph: &RequirementGraph) -> Result<(), ScoringError> {
        let passes = effective_passes(graph, self)?;
        for (id, _) in graph.requirements().iter().enumerate() {
            let gated = graph.parents(id).iter().any(|&p| !passes[p]);
            let entry = self.entries.get_mut(&id).expect("checked by effective_passes");
            if gated {
                if entry.status != Status::Gated {
                    entry.status = Status::Gated;
                    entry.justification = gated_justification(graph, &passes, id);
                }
            } else if entry.status == Status::Gated {
                entry.status = Status::Unsatisfied;
            }
        }
        Ok(())
    }

    /// True iff every `gated` entry has a parent that is not satisfied and
    /// every non-gated entry has only satisfied parents.
    pub fn gating_is_sound(&self, graph: &RequirementGraph) -> bool {
        graph.requirements().iter().enumerate().all(|(id, _)| {
            let Some(status) = self.status(id) else {
                return false;
            };
            let blocked = graph
                .parents(id)
                .iter()
                .any(|&p| self.status(p) != Some(Status::Satisfied));
            (status == Status::Gated) == blocked
        })
    }

    /// Requirements not effectively passing, in id order (R_fail).
    pub fn failed(&self, graph: &RequirementGraph) -> Result<Vec<RequirementId>, ScoringError> {
        let passes = effective_passes(graph, self)?;
        Ok((0..graph.len()).filter(|&j| !passes[j]).collect())
    }
}

pub(crate) fn gated_justification(
    graph: &RequirementGraph,
    passes: &[bool],
    id: RequirementId,
) -> String {
    let blocking: Vec<String> = graph
        .parents(id)
        .iter()
        .filter(|&&p| !passes[p])
        .map(|p| format!("R{p}"))
        .collect();
    format!("gated: prerequisite {} not satisfied", blocking.join(", "))
}

/// Exact score `passed / total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Score {
    pub passed: u32,
    pub total: u32,
}

impl Score {
    pub fn new(passed: u32, total: u32) -> Self {
        debug_assert!(total > 0 && passed <= total);
        Self { passed, total }
    }

    pub fn as_f64(&self) -> f64 {
        f64::from(self.passed) / f64::from(self.total)
    }

    pub fn is_perfect(&self) -> bool {
        self.passed == self.total
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}", self.as_f64())
    }
}

/// Initial and final scores of one session, S_G and S'_G.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorePair {
    pub initial: Score,
    pub r#final: Score,
}

impl ScorePair {
    pub fn m(&self) -> u32 {
        self.initial.total
    }

    /// final - initial, as a float for display.
    pub fn delta(&self) -> f64 {
        self.r#final.as_f64() - self.initial.as_f64()
    }
}

/// `passes[j]`: requirement j is satisfied and all its parents pass.
fn effective_passes(graph: &RequirementGraph, verdicts: &VerdictMap) -> Result<Vec<bool>, ScoringError> {
    let m = graph.len();
    for id in 0..m {
        if verdicts.get(id).is_none() {
            return Err(ScoringError::MissingVerdict(id));
        }
    }
    let order = crate::task::topological_order(graph)
        .expect("scoring requires a validated acyclic graph");
    let mut passes = vec![false; m];
    for j in order {
        passes[j] = verdicts.status(j) == Some(Status::Satisfied)
            && graph.parents(j).iter().all(|&p| passes[p]);
    }
    Ok(passes)
}

/// Requirements whose parents all effectively pass (roots always included).
pub fn evaluable_set(
    graph: &RequirementGraph,
    verdicts: &VerdictMap,
) -> Result<BTreeSet<RequirementId>, ScoringError> {
    let passes = effective_passes(graph, verdicts)?;
    Ok((0..graph.len())
        .filter(|&j| graph.parents(j).iter().all(|&p| passes[p]))
        .collect())
}

/// S_G: fraction of requirements satisfied with every prerequisite satisfied.
pub fn effective_score(graph: &RequirementGraph, verdicts: &VerdictMap) -> Result<Score, ScoringError> {
    if graph.is_empty() {
        return Err(ScoringError::EmptyGraph);
    }
    let passes = effective_passes(graph, verdicts)?;
    let passed = passes.iter().filter(|&&p| p).count();
    Ok(Score::new(passed as u32, graph.len() as u32))
}

/// S'_G: the same measure on the final, post-hint verdict map. Gating uses
/// only that map.
pub fn interactive_score(
    graph: &RequirementGraph,
    final_verdicts: &VerdictMap,
) -> Result<Score, ScoringError> {
    effective_score(graph, final_verdicts)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCounts {
    pub improved: u32,
    pub regressed: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionDelta {
    pub improved: BTreeSet<RequirementId>,
    pub regressed: BTreeSet<RequirementId>,
    pub unchanged: BTreeSet<RequirementId>,
    pub per_category_counts: BTreeMap<String, CategoryCounts>,
}

/// Classifies each requirement by how its effective pass changed between
/// two maps. Categories with no movement are still listed with zero counts.
pub fn transition_delta(
    initial: &VerdictMap,
    r#final: &VerdictMap,
    graph: &RequirementGraph,
) -> Result<TransitionDelta, ScoringError> {
    let before = effective_passes(graph, initial)?;
    let after = effective_passes(graph, r#final)?;
    let mut delta = TransitionDelta::default();
    for (j, req) in graph.requirements().iter().enumerate() {
        let counts = delta
            .per_category_counts
            .entry(req.category.clone())
            .or_default();
        match (before[j], after[j]) {
            (false, true) => {
                delta.improved.insert(j);
                counts.improved += 1;
            }
            (true, false) => {
                delta.regressed.insert(j);
                counts.regressed += 1;
            }
            _ => {
                delta.unchanged.insert(j);
            }
        }
    }
    Ok(delta)
}
