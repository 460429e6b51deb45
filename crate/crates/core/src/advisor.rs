//! Rule-based critique of a human strategy against the optimal baseline.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{world_digest, Schedule, StrategicDecision, Strategy, WorldState};
use crate::scheduler::{build_schedule, thread_finish_times};
use crate::search::OptimalPlan;
use crate::strategy::apply_choice;

pub const DEFAULT_PRIORITY_GAP: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommendationKind {
    RebalanceAgents,
    InfeasibleThread,
    RaisePriority,
    AddCapabilityCoverage,
    MergeThreads,
}

impl RecommendationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RebalanceAgents => "rebalance_agents",
            Self::InfeasibleThread => "infeasible_thread",
            Self::RaisePriority => "raise_priority",
            Self::AddCapabilityCoverage => "add_capability_coverage",
            Self::MergeThreads => "merge_threads",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadField {
    Priority,
    MinAgents,
    MaxAgents,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadEdit {
    pub thread: String,
    pub field: ThreadField,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub id: String,
    pub kind: RecommendationKind,
    pub subject: Vec<String>,
    pub rationale: String,
    pub predicted_gain: f64,
    /// What `refine` changes when the recommendation is accepted.
    #[serde(default)]
    pub edits: Vec<ThreadEdit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvisorConfig {
    /// R3 fires when a higher-priority thread trails by more than this share of the makespan.
    pub priority_gap: f64,
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        Self { priority_gap: DEFAULT_PRIORITY_GAP }
    }
}

fn recommendation(
    kind: RecommendationKind,
    subject: Vec<String>,
    rationale: String,
    gain: f64,
    edits: Vec<ThreadEdit>,
) -> Recommendation {
    let id = format!("{}:{}", kind.as_str(), subject.join(","));
    Recommendation { id, kind, subject, rationale, predicted_gain: gain.max(0.0), edits }
}

/// Checks that `current` and `optimal` were both computed from `world`.
fn check_snapshot(
    world: &WorldState,
    strategy: &Strategy,
    current: &Schedule,
    optimal: &OptimalPlan,
) -> Result<WorldState> {
    if optimal.world_digest != world_digest(world) {
        return Err(Error::Staleness);
    }
    let d = StrategicDecision::new(&strategy.id, current.assignment.clone(), current.makespan);
    let applied = apply_choice(world, &d).map_err(|_| Error::Staleness)?;
    if world_digest(&applied) != current.world_digest {
        return Err(Error::Staleness);
    }
    Ok(applied)
}

/// Recommendations for the commander, best predicted gain first.
pub fn critique(
    world: &WorldState,
    strategy: &Strategy,
    current: &Schedule,
    optimal: &OptimalPlan,
    config: AdvisorConfig,
) -> Result<Vec<Recommendation>> {
    let applied = check_snapshot(world, strategy, current, optimal)?;
    let mut out = Vec::new();

    // R1
    let best = &optimal.decision.assignment;
    let moved: Vec<String> = best
        .keys()
        .chain(current.assignment.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|a| best.get(*a) != current.assignment.get(*a))
        .cloned()
        .collect();
    if !moved.is_empty() {
        let count = |m: &BTreeMap<String, String>, t: &str| m.values().filter(|x| *x == t).count() as u32;
        let mut edits = Vec::new();
        for t in strategy.threads_by_id() {
            let n = count(best, &t.id);
            if n != count(&current.assignment, &t.id) {
                edits.push(ThreadEdit { thread: t.id.clone(), field: ThreadField::MinAgents, value: n });
                edits.push(ThreadEdit { thread: t.id.clone(), field: ThreadField::MaxAgents, value: n });
            }
        }
        let moves: Vec<String> =
            moved.iter().map(|a| format!("{a} to {}", best.get(a).map_or("reserve", String::as_str))).collect();
        out.push(recommendation(
            RecommendationKind::RebalanceAgents,
            moved,
            format!("the optimal plan moves {}", moves.join(", ")),
            current.makespan - optimal.makespan,
            edits,
        ));
    }

    // R2
    let unstaffable: Vec<String> = strategy
        .threads_by_id()
        .into_iter()
        .filter(|t| !world.agents.values().any(|a| a.is_active() && t.accepts_agent(a)))
        .map(|t| t.id.clone())
        .collect();
    if !unstaffable.is_empty() {
        let edits = unstaffable
            .iter()
            .map(|t| ThreadEdit { thread: t.clone(), field: ThreadField::MinAgents, value: 0 })
            .collect();
        out.push(recommendation(
            RecommendationKind::InfeasibleThread,
            unstaffable.clone(),
            format!("no agent in the team can serve {}", unstaffable.join(", ")),
            0.0,
            edits,
        ));
    }

    // R3
    let finishes = thread_finish_times(current);
    let mut worst: Option<(f64, &str, &str)> = None;
    for hi in strategy.threads_by_id() {
        for lo in strategy.threads_by_id() {
            if hi.priority >= lo.priority {
                continue;
            }
            let (Some(fh), Some(fl)) = (finishes.get(&hi.id), finishes.get(&lo.id)) else { continue };
            let gap = fh - fl;
            if gap > config.priority_gap * current.makespan && worst.is_none_or(|w| gap > w.0) {
                worst = Some((gap, &hi.id, &lo.id));
            }
        }
    }
    if let Some((gap, hi, lo)) = worst {
        let th = strategy.thread(lo).expect("thread exists");
        let edit = ThreadEdit {
            thread: lo.to_string(),
            field: ThreadField::Priority,
            value: th.priority.saturating_sub(1).max(1),
        };
        let mut trial = strategy.clone();
        apply_edits(&mut trial, std::slice::from_ref(&edit));
        let d = StrategicDecision::new(&strategy.id, current.assignment.clone(), 0.0);
        let gain = build_schedule(&applied, &trial, &d).map_or(0.0, |s| current.makespan - s.makespan);
        out.push(recommendation(
            RecommendationKind::RaisePriority,
            vec![lo.to_string(), hi.to_string()],
            format!("{hi} outranks {lo} yet finishes {gap:.0} s later; raise {lo} so it can take shared work"),
            gain,
            vec![edit],
        ));
    }

    // R4
    let thin: Vec<String> = world
        .open_tasks()
        .map(|t| t.task_type.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|ty| world.agents.values().filter(|a| a.is_active() && a.can_do(ty)).count() < 2)
        .collect();
    if !thin.is_empty() {
        out.push(recommendation(
            RecommendationKind::AddCapabilityCoverage,
            thin.clone(),
            format!("fewer than two active agents can perform {}", thin.join(", ")),
            0.0,
            vec![],
        ));
    }

    out.sort_by(|a, b| b.predicted_gain.total_cmp(&a.predicted_gain).then(a.kind.cmp(&b.kind)));
    Ok(out)
}

fn apply_edits(strategy: &mut Strategy, edits: &[ThreadEdit]) {
    for e in edits {
        if let Some(t) = strategy.threads.iter_mut().find(|t| t.id == e.thread) {
            match e.field {
                ThreadField::Priority => t.priority = e.value,
                ThreadField::MinAgents => t.min_agents = e.value,
                ThreadField::MaxAgents => t.max_agents = e.value,
            }
        }
    }
}

/// Applies accepted recommendations to `strategy`.
pub fn refine(strategy: &Strategy, accepted: &[Recommendation]) -> Result<Strategy> {
    let mut owner: BTreeMap<(&str, ThreadField), (&str, u32)> = BTreeMap::new();
    for r in accepted {
        for e in &r.edits {
            if strategy.thread(&e.thread).is_none() {
                return Err(Error::Contract(format!("{} edits unknown thread {}", r.id, e.thread)));
            }
            match owner.get(&(e.thread.as_str(), e.field)) {
                Some((other, v)) if *v != e.value => {
                    return Err(Error::Conflict(other.to_string(), r.id.clone()));
                }
                _ => {
                    owner.insert((e.thread.as_str(), e.field), (r.id.as_str(), e.value));
                }
            }
        }
    }
    let mut next = strategy.clone();
    for r in accepted {
        apply_edits(&mut next, &r.edits);
    }
    // A lowered minimum may sit above an untouched maximum and vice versa; widen the other bound.
    for t in &mut next.threads {
        if t.min_agents > t.max_agents {
            let min_fixed = owner.contains_key(&(t.id.as_str(), ThreadField::MinAgents));
            if min_fixed {
                t.max_agents = t.min_agents;
            } else {
                t.min_agents = t.max_agents;
            }
        }
    }
    let v = next.violations(&format!("strategies/{}", next.id));
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    Ok(next)
}
