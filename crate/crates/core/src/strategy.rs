//! Strategic planning: feasible agent→thread assignments, their ranking, and
//! releases of agents whose thread has run out of work.
//!
//! Only `available` agents are decision variables. Agents already holding a
//! thread stay where they are and count toward that thread's bounds. An
//! available agent may be left in reserve only when every thread it could
//! serve is already at `max_agents`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_strategy, Agent, AgentId, AgentStatus, Release, Schedule, StrategicDecision, Strategy, TaskId, Thread,
    ThreadId, WorldState,
};
use crate::scheduler::build_schedule;

pub const DEFAULT_CHOICE_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceSet {
    pub decisions: Vec<StrategicDecision>,
    pub truncated: bool,
}

/// The discrete search space shared by enumeration and branch-and-bound.
pub(crate) struct AssignmentSpace<'a> {
    pub world: &'a WorldState,
    pub strategy: &'a Strategy,
    pub threads: Vec<&'a Thread>,
    pub free: Vec<&'a Agent>,
    pub fixed: BTreeMap<AgentId, ThreadId>,
    pub fixed_counts: Vec<u32>,
    /// `accepts[agent][thread]`: the agent has a capability in the thread's goal.
    pub accepts: Vec<Vec<bool>>,
}

impl<'a> AssignmentSpace<'a> {
    pub fn new(world: &'a WorldState, strategy: &'a Strategy) -> Result<Self> {
        let v = validate_strategy(world, strategy, &format!("strategies/{}", strategy.id));
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        let threads = strategy.threads_by_id();
        let free: Vec<&Agent> = world.agents.values().filter(|a| a.status == AgentStatus::Available).collect();
        let fixed = world.assignment_for(strategy);
        let fixed_counts = threads.iter().map(|t| fixed.values().filter(|x| **x == t.id).count() as u32).collect();
        let accepts = free.iter().map(|a| threads.iter().map(|t| t.accepts_agent(a)).collect()).collect();
        let space = Self { world, strategy, threads, free, fixed, fixed_counts, accepts };

        let short: Vec<ThreadId> = space
            .threads
            .iter()
            .enumerate()
            .filter(|&(t, th)| {
                let capable = space.accepts.iter().filter(|row| row[t]).count() as u32;
                space.fixed_counts[t] + capable < th.min_agents
            })
            .map(|(_, th)| th.id.clone())
            .collect();
        if !short.is_empty() {
            return Err(Error::Infeasible { threads: short });
        }
        Ok(space)
    }

    pub fn can_place(&self, counts: &[u32], agent: usize, thread: usize) -> bool {
        self.accepts[agent][thread] && counts[thread] < self.threads[thread].max_agents
    }

    /// Necessary condition: agents from `from` onward could still lift every
    /// thread to its minimum.
    pub fn min_reachable(&self, counts: &[u32], from: usize) -> bool {
        (0..self.threads.len()).all(|t| {
            let spare = (from..self.free.len()).filter(|&i| self.accepts[i][t]).count() as u32;
            counts[t] + spare >= self.threads[t].min_agents
        })
    }

    pub fn leaf_ok(&self, counts: &[u32], choice: &[Option<usize>]) -> bool {
        let bounds = self.threads.iter().zip(counts).all(|(t, &c)| c >= t.min_agents && c <= t.max_agents);
        bounds
            && choice.iter().enumerate().all(|(i, c)| {
                c.is_some()
                    || (0..self.threads.len()).all(|t| !self.accepts[i][t] || counts[t] >= self.threads[t].max_agents)
            })
    }

    pub fn assignment(&self, choice: &[Option<usize>]) -> BTreeMap<AgentId, ThreadId> {
        let mut out = self.fixed.clone();
        for (i, c) in choice.iter().enumerate() {
            if let Some(t) = c {
                out.insert(self.free[i].id.clone(), self.threads[*t].id.clone());
            }
        }
        out
    }

    pub fn infeasible(&self) -> Error {
        let threads = self
            .threads
            .iter()
            .enumerate()
            .filter(|&(t, th)| th.min_agents > self.fixed_counts[t])
            .map(|(_, th)| th.id.clone())
            .collect();
        Error::Infeasible { threads }
    }

    /// Every feasible completion, in lexicographic (agent, thread-then-reserve) order.
    pub fn enumerate(&self) -> Vec<BTreeMap<AgentId, ThreadId>> {
        let mut out = Vec::new();
        let mut counts = self.fixed_counts.clone();
        let mut choice = Vec::with_capacity(self.free.len());
        self.dfs(&mut counts, &mut choice, &mut out);
        out
    }

    fn dfs(&self, counts: &mut Vec<u32>, choice: &mut Vec<Option<usize>>, out: &mut Vec<BTreeMap<AgentId, ThreadId>>) {
        let i = choice.len();
        if i == self.free.len() {
            if self.leaf_ok(counts, choice) {
                out.push(self.assignment(choice));
            }
            return;
        }
        for t in 0..self.threads.len() {
            if self.can_place(counts, i, t) {
                counts[t] += 1;
                choice.push(Some(t));
                if self.min_reachable(counts, i + 1) {
                    self.dfs(counts, choice, out);
                }
                choice.pop();
                counts[t] -= 1;
            }
        }
        choice.push(None);
        if self.min_reachable(counts, i + 1) {
            self.dfs(counts, choice, out);
        }
        choice.pop();
    }
}

/// Open tasks the strategy is expected to cover: a matching thread exists and
/// some active agent able to do the task could serve that thread.
pub fn demanded_tasks(world: &WorldState, strategy: &Strategy) -> BTreeSet<TaskId> {
    world
        .open_tasks()
        .filter(|task| {
            strategy.threads.iter().filter(|t| t.matches(task)).any(|t| {
                world.agents.values().any(|a| {
                    a.can_do(&task.task_type)
                        && (a.status == AgentStatus::Available
                            || (a.status.holds_thread() && a.assigned_thread.as_deref() == Some(&t.id)))
                })
            })
        })
        .map(|t| t.id.clone())
        .collect()
}

/// Apply an assignment and schedule it. Score is the makespan, or `inf` when
/// some demanded task ends up without a thread able to do it.
pub fn evaluate(
    world: &WorldState,
    strategy: &Strategy,
    assignment: &BTreeMap<AgentId, ThreadId>,
) -> Result<(StrategicDecision, Schedule)> {
    let demanded = demanded_tasks(world, strategy);
    let mut decision = StrategicDecision::new(&strategy.id, assignment.clone(), 0.0);
    let applied = apply_choice(world, &decision)?;
    let schedule = build_schedule(&applied, strategy, &decision)?;
    let covered = demanded.iter().all(|t| schedule.entry_for(t).is_some());
    decision.score = if covered { schedule.makespan } else { f64::INFINITY };
    Ok((decision, schedule))
}

fn rank_decisions(decisions: &mut [StrategicDecision]) {
    decisions.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.id.cmp(&b.id)));
}

/// The ranked shortlist of feasible decisions for `strategy`.
pub fn enumerate_choices(world: &WorldState, strategy: &Strategy, cap: usize) -> Result<ChoiceSet> {
    let space = AssignmentSpace::new(world, strategy)?;
    let all = space.enumerate();
    if all.is_empty() {
        return Err(space.infeasible());
    }
    let mut decisions = all.iter().map(|a| evaluate(world, strategy, a).map(|(d, _)| d)).collect::<Result<Vec<_>>>()?;
    rank_decisions(&mut decisions);
    let truncated = decisions.len() > cap;
    decisions.truncate(cap);
    Ok(ChoiceSet { decisions, truncated })
}

/// World where every agent in `d` holds its thread.
pub fn apply_choice(world: &WorldState, d: &StrategicDecision) -> Result<WorldState> {
    let mut next = world.clone();
    for (aid, tid) in &d.assignment {
        let agent = next.agents.get_mut(aid).ok_or_else(|| Error::StaleDecision(format!("unknown agent {aid}")))?;
        match agent.status {
            AgentStatus::Available => {
                agent.status = AgentStatus::Assigned;
                agent.assigned_thread = Some(tid.clone());
            }
            s if s.holds_thread() && agent.assigned_thread.as_deref() == Some(tid) => {}
            s => {
                return Err(Error::StaleDecision(format!(
                    "agent {aid} is {s:?}{}",
                    agent.assigned_thread.as_ref().map(|t| format!(" on {t}")).unwrap_or_default()
                )))
            }
        }
    }
    Ok(next)
}

/// Machine-checkable decision invariants, written straight from their
/// definition. Empty means the decision is feasible against `world`.
pub fn decision_violations(world: &WorldState, strategy: &Strategy, d: &StrategicDecision) -> Vec<String> {
    let mut v = Vec::new();
    let mut counts: BTreeMap<&str, u32> = strategy.threads.iter().map(|t| (t.id.as_str(), 0)).collect();
    for (aid, tid) in &d.assignment {
        let Some(thread) = strategy.thread(tid) else {
            v.push(format!("{aid}: unknown thread {tid}"));
            continue;
        };
        let Some(agent) = world.agents.get(aid) else {
            v.push(format!("{aid}: unknown agent"));
            continue;
        };
        match agent.status {
            AgentStatus::Available => {}
            s if s.holds_thread() => {
                if agent.assigned_thread.as_deref() != Some(tid.as_str()) {
                    v.push(format!("{aid}: already holds another thread"));
                }
            }
            _ => v.push(format!("{aid}: agent is disabled")),
        }
        if !agent.capabilities.iter().any(|c| thread.goal_task_types.contains(c)) {
            v.push(format!("{aid}: no capability in the goal of {tid}"));
        }
        *counts.get_mut(tid.as_str()).expect("thread exists") += 1;
    }
    for t in &strategy.threads {
        let n = counts[t.id.as_str()];
        if n < t.min_agents || n > t.max_agents {
            v.push(format!("{}: {n} agents outside [{}, {}]", t.id, t.min_agents, t.max_agents));
        }
    }
    for a in world.agents.values() {
        if a.status.holds_thread() {
            if let Some(t) = a.assigned_thread.as_deref() {
                if strategy.thread(t).is_some() && !d.assignment.contains_key(&a.id) {
                    v.push(format!("{}: holds {t} but is missing from the decision", a.id));
                }
            }
        }
        if a.status == AgentStatus::Available && !d.assignment.contains_key(&a.id) {
            let idle_ok =
                strategy.threads.iter().filter(|t| t.accepts_agent(a)).all(|t| counts[t.id.as_str()] >= t.max_agents);
            if !idle_ok {
                v.push(format!("{}: left in reserve while a thread it serves has room", a.id));
            }
        }
    }
    v
}

/// Agents to release once their thread's scheduled work is exhausted.
///
/// A thread qualifies when no open task in its goal is left unscheduled for
/// its members and no entry of the schedule expects to reveal work of its
/// goal. Each member is released at its last finish, or at the schedule's
/// creation when it has no entries.
pub fn compute_releases(world: &WorldState, strategy: &Strategy, schedule: &Schedule) -> Vec<Release> {
    let mut out = Vec::new();
    for thread in strategy.threads_by_id() {
        let members: Vec<&Agent> = world
            .agents
            .values()
            .filter(|a| a.status.holds_thread() && a.assigned_thread.as_deref() == Some(&thread.id))
            .collect();
        if members.is_empty() {
            continue;
        }
        let leftover = world.open_tasks().any(|task| {
            thread.matches(task)
                && schedule.entry_for(&task.id).is_none()
                && members.iter().any(|a| a.can_do(&task.task_type))
        });
        let pending = schedule.entries.iter().any(|e| {
            thread.covers_region(&e.region)
                && e.estimated_reveals.iter().any(|r| r.count > 0 && thread.goal_task_types.contains(&r.task_type))
        });
        if leftover || pending {
            continue;
        }
        for a in members {
            let at = schedule
                .entries
                .iter()
                .filter(|e| e.agents.contains(&a.id))
                .map(|e| e.finish)
                .fold(schedule.created_at, f64::max);
            out.push(Release { agent: a.id.clone(), thread: thread.id.clone(), at });
        }
    }
    out.sort_by(|a, b| a.at.total_cmp(&b.at).then_with(|| a.agent.cmp(&b.agent)));
    out
}

/// `world` with idle holders of `strategy`'s threads returned to the pool, so
/// choices can be weighed afresh. Agents at work keep their thread.
pub fn planning_world(world: &WorldState, strategy: &Strategy) -> WorldState {
    let mut w = world.clone();
    for a in w.agents.values_mut() {
        let ours = a.assigned_thread.as_deref().is_some_and(|t| strategy.thread(t).is_some());
        if a.status == AgentStatus::Assigned && ours {
            a.status = AgentStatus::Available;
            a.assigned_thread = None;
        }
    }
    w
}

/// Copy of `strategy` keeping only the named threads.
pub fn restrict(strategy: &Strategy, keep: &[&Thread]) -> Strategy {
    Strategy {
        id: strategy.id.clone(),
        objective: strategy.objective.clone(),
        threads: keep.iter().map(|t| (*t).clone()).collect(),
    }
}
