//! Depth-first branch-and-bound over agent→thread assignments.
//!
//! Decision variables are the available agents in id order; values are the
//! threads that accept the agent plus "reserve". Leaves are scored exactly as
//! the strategy module ranks choices, so the optimum here is comparable with
//! every entry of a choice set.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::canonical::{inf_f64, inf_f64_seq, Digest};
use crate::error::{Error, Result};
use crate::geo::travel_time;
use crate::model::{
    world_digest, AgentId, AgentStatus, MacroTask, Schedule, StrategicDecision, Strategy, ThreadId, WorldState,
};
use crate::scheduler::centroids;
use crate::strategy::{decision_violations, demanded_tasks, evaluate, AssignmentSpace};

pub const BRUTE_FORCE_MAX_AGENTS: usize = 6;
pub const BRUTE_FORCE_MAX_THREADS: usize = 4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    /// Choices made so far for available agents.
    pub decision_prefix: BTreeMap<AgentId, ThreadId>,
    /// Available agents already decided to stay in reserve.
    #[serde(default)]
    pub reserved: BTreeSet<AgentId>,
    /// Bound inherited from the parent node.
    pub scheduled_makespan: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPlan {
    pub decision: StrategicDecision,
    pub schedule: Schedule,
    #[serde(with = "inf_f64")]
    pub makespan: f64,
    pub nodes_expanded: u64,
    pub proven_optimal: bool,
    /// Incumbent makespan after each improvement, starting with the greedy dive.
    #[serde(with = "inf_f64_seq")]
    pub incumbent_history: Vec<f64>,
    #[serde(with = "inf_f64")]
    pub root_bound: f64,
    /// Digest of the world the search started from.
    pub world_digest: Digest,
}

/// Admissible bound on the score of every feasible completion of `node`.
pub fn lower_bound(world: &WorldState, strategy: &Strategy, node: &SearchNode) -> f64 {
    let demanded = demanded_tasks(world, strategy);
    let tasks: Vec<&MacroTask> = world.open_tasks().collect();
    let now = world.time;
    let cents = centroids(world);

    // Thread of every active agent that is not in reserve, or None if undecided.
    let mut placed: BTreeMap<&str, Option<&str>> = BTreeMap::new();
    for a in world.agents.values().filter(|a| a.is_active()) {
        if node.reserved.contains(&a.id) {
            continue;
        }
        let t = match a.status {
            AgentStatus::Available => node.decision_prefix.get(&a.id).map(String::as_str),
            _ => a.assigned_thread.as_deref(),
        };
        placed.insert(a.id.as_str(), t);
    }
    let undecided: Vec<&str> = placed.iter().filter(|(_, t)| t.is_none()).map(|(a, _)| *a).collect();
    let members =
        |thread: &str| -> Vec<&str> { placed.iter().filter(|(_, t)| **t == Some(thread)).map(|(a, _)| *a).collect() };
    let counts: BTreeMap<&str, usize> =
        strategy.threads.iter().map(|t| (t.id.as_str(), members(&t.id).len())).collect();
    let can_join = |aid: &str, thread: &crate::model::Thread, task_type: &str| {
        let a = &world.agents[aid];
        a.can_do(task_type) && counts[thread.id.as_str()] < thread.max_agents as usize
    };

    let mut bound = node.scheduled_makespan.max(0.0);
    let demanded_tasks: Vec<&&MacroTask> = tasks.iter().filter(|t| demanded.contains(&t.id)).collect();

    if !demanded_tasks.is_empty() {
        // (a) total work over the agents that could take part.
        let work: f64 = demanded_tasks.iter().map(|t| world.remaining_workload(t)).sum();
        let eligible =
            placed.keys().filter(|a| demanded_tasks.iter().any(|t| world.agents[**a].can_do(&t.task_type))).count();
        if eligible == 0 {
            return f64::INFINITY;
        }
        bound = bound.max(now + work / eligible as f64);

        // (b) the nearest capable agent still has to reach some task.
        let mut nearest = f64::INFINITY;
        for t in &demanded_tasks {
            let target = cents[t.region.as_str()];
            for aid in placed.keys() {
                let a = &world.agents[*aid];
                if a.can_do(&t.task_type) {
                    if let Ok(tt) = travel_time(a, a.location, target) {
                        nearest = nearest.min(tt);
                    }
                }
            }
        }
        bound = bound.max(now + nearest);

        // Coverage: every demanded task needs some matching thread that has or can get a capable member.
        for t in &demanded_tasks {
            let coverable = strategy.threads.iter().filter(|th| th.matches(t)).any(|th| {
                members(&th.id).iter().any(|a| world.agents[*a].can_do(&t.task_type))
                    || undecided.iter().any(|a| can_join(a, th, &t.task_type))
            });
            if !coverable {
                return f64::INFINITY;
            }
        }
    }

    // (c) work a thread is certain to claim, spread over the most members it can reach.
    let mut owed: BTreeMap<&str, f64> = BTreeMap::new();
    for t in &tasks {
        let mut matching: Vec<&crate::model::Thread> = strategy.threads.iter().filter(|th| th.matches(t)).collect();
        matching.sort_by(|a, b| a.rank().cmp(&b.rank()));
        for th in matching {
            let has = members(&th.id).iter().any(|a| world.agents[*a].can_do(&t.task_type));
            if has {
                *owed.entry(th.id.as_str()).or_default() += world.remaining_workload(t);
                break;
            }
            if undecided.iter().any(|a| can_join(a, th, &t.task_type)) {
                // A better-ranked thread may still take it.
                break;
            }
        }
    }
    for (tid, work) in owed {
        let th = strategy.thread(tid).expect("owed threads exist");
        let reachable = counts[tid] + undecided.iter().filter(|a| th.accepts_agent(&world.agents[**a])).count();
        let n = reachable.min(th.max_agents as usize).max(1);
        bound = bound.max(now + work / n as f64);
    }
    bound
}

struct Search<'a> {
    space: AssignmentSpace<'a>,
    budget: u64,
    cancel: Option<&'a AtomicBool>,
    nodes: u64,
    stopped: bool,
    best: Option<(StrategicDecision, Schedule)>,
    history: Vec<f64>,
    /// Per free agent, thread indices in the order they are tried.
    order: Vec<Vec<usize>>,
}

impl<'a> Search<'a> {
    fn offer(&mut self, choice: &[Option<usize>]) -> Result<()> {
        let assignment = self.space.assignment(choice);
        let (d, s) = evaluate(self.space.world, self.space.strategy, &assignment)?;
        let better = match &self.best {
            None => true,
            Some((b, _)) => d.score < b.score || (d.score == b.score && d.id < b.id),
        };
        if better {
            let improved = self.best.as_ref().is_none_or(|(b, _)| d.score < b.score);
            if improved || self.history.is_empty() {
                self.history.push(d.score);
            }
            self.best = Some((d, s));
        }
        Ok(())
    }

    fn incumbent(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |(d, _)| d.score)
    }

    fn children(&self, i: usize) -> impl Iterator<Item = Option<usize>> + '_ {
        self.order[i].iter().map(|t| Some(*t)).chain(std::iter::once(None))
    }

    /// First feasible leaf along the preferred child order.
    fn dive(&mut self, counts: &mut Vec<u32>, choice: &mut Vec<Option<usize>>) -> Result<bool> {
        let i = choice.len();
        if i == self.space.free.len() {
            if self.space.leaf_ok(counts, choice) {
                self.offer(choice)?;
                return Ok(true);
            }
            return Ok(false);
        }
        let kids: Vec<Option<usize>> = self.children(i).collect();
        for c in kids {
            if let Some(t) = c {
                if !self.space.can_place(counts, i, t) {
                    continue;
                }
                counts[t] += 1;
            }
            choice.push(c);
            let ok = self.space.min_reachable(counts, i + 1) && self.dive(counts, choice)?;
            choice.pop();
            if let Some(t) = c {
                counts[t] -= 1;
            }
            if ok {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn node(&self, choice: &[Option<usize>], parent_bound: f64) -> SearchNode {
        let mut n = SearchNode { scheduled_makespan: parent_bound, depth: 0, ..Default::default() };
        for (i, c) in choice.iter().enumerate() {
            let id = self.space.free[i].id.clone();
            match c {
                Some(t) => {
                    n.decision_prefix.insert(id, self.space.threads[*t].id.clone());
                    n.depth += 1;
                }
                None => {
                    n.reserved.insert(id);
                }
            }
        }
        n
    }

    fn branch(&mut self, counts: &mut Vec<u32>, choice: &mut Vec<Option<usize>>, parent_bound: f64) -> Result<()> {
        if self.nodes >= self.budget || self.cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            self.stopped = true;
            return Ok(());
        }
        self.nodes += 1;
        let bound = lower_bound(self.space.world, self.space.strategy, &self.node(choice, parent_bound));
        if self.best.is_some() && bound >= self.incumbent() {
            return Ok(());
        }
        let i = choice.len();
        if i == self.space.free.len() {
            if self.space.leaf_ok(counts, choice) {
                self.offer(choice)?;
            }
            return Ok(());
        }
        let kids: Vec<Option<usize>> = self.children(i).collect();
        for c in kids {
            if self.stopped {
                break;
            }
            if let Some(t) = c {
                if !self.space.can_place(counts, i, t) {
                    continue;
                }
                counts[t] += 1;
            }
            choice.push(c);
            if self.space.min_reachable(counts, i + 1) {
                self.branch(counts, choice, bound)?;
            }
            choice.pop();
            if let Some(t) = c {
                counts[t] -= 1;
            }
        }
        Ok(())
    }
}

/// Predicted completion if `agent` joined each thread: travel to the nearest
/// matching task plus the thread's matching work shared by one more member.
fn child_order(space: &AssignmentSpace<'_>) -> Vec<Vec<usize>> {
    let world = space.world;
    let cents = centroids(world);
    let tasks: Vec<&MacroTask> = world.open_tasks().collect();
    space
        .free
        .iter()
        .enumerate()
        .map(|(i, agent)| {
            let mut keyed: Vec<(f64, usize)> = (0..space.threads.len())
                .filter(|&t| space.accepts[i][t])
                .map(|t| {
                    let th = space.threads[t];
                    let mine: Vec<&&MacroTask> =
                        tasks.iter().filter(|x| th.matches(x) && agent.can_do(&x.task_type)).collect();
                    let travel = mine
                        .iter()
                        .filter_map(|x| travel_time(agent, agent.location, cents[x.region.as_str()]).ok())
                        .fold(f64::INFINITY, f64::min);
                    let work: f64 = tasks.iter().filter(|x| th.matches(x)).map(|x| world.remaining_workload(x)).sum();
                    let k = space.fixed_counts[t] as f64 + 1.0;
                    (if mine.is_empty() { f64::INFINITY } else { travel + work / k }, t)
                })
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().map(|(_, t)| t).collect()
        })
        .collect()
}

/// Branch-and-bound optimum under a node budget (`u64::MAX` for unbounded).
pub fn optimal_plan(world: &WorldState, strategy: &Strategy, budget: u64) -> Result<OptimalPlan> {
    optimal_plan_cancelable(world, strategy, budget, None)
}

pub fn optimal_plan_cancelable(
    world: &WorldState,
    strategy: &Strategy,
    budget: u64,
    cancel: Option<&AtomicBool>,
) -> Result<OptimalPlan> {
    let space = AssignmentSpace::new(world, strategy)?;
    let order = child_order(&space);
    let root_bound = lower_bound(world, strategy, &SearchNode::default());
    let mut s = Search { space, budget, cancel, nodes: 0, stopped: false, best: None, history: Vec::new(), order };

    let mut counts = s.space.fixed_counts.clone();
    let mut choice = Vec::new();
    if !s.dive(&mut counts, &mut choice)? {
        return Err(s.space.infeasible());
    }
    s.branch(&mut counts, &mut choice, 0.0)?;

    let (decision, schedule) = s.best.expect("dive found an incumbent");
    Ok(OptimalPlan {
        makespan: decision.score,
        decision,
        schedule,
        nodes_expanded: s.nodes,
        proven_optimal: !s.stopped,
        incumbent_history: s.history,
        root_bound,
        world_digest: world_digest(world),
    })
}

/// Exhaustive oracle: every raw assignment, filtered by the decision predicate.
pub fn brute_force_makespan(world: &WorldState, strategy: &Strategy) -> Result<(StrategicDecision, f64)> {
    let free: Vec<&AgentId> =
        world.agents.values().filter(|a| a.status == AgentStatus::Available).map(|a| &a.id).collect();
    if world.agents.len() > BRUTE_FORCE_MAX_AGENTS || strategy.threads.len() > BRUTE_FORCE_MAX_THREADS {
        return Err(Error::Size(format!(
            "{} agents and {} threads exceed the {BRUTE_FORCE_MAX_AGENTS}/{BRUTE_FORCE_MAX_THREADS} guard",
            world.agents.len(),
            strategy.threads.len()
        )));
    }
    // Surface validation and staffing errors the same way the search does.
    AssignmentSpace::new(world, strategy)?;

    let fixed = world.assignment_for(strategy);
    let values = strategy.threads.len() + 1;
    let total = values.pow(free.len() as u32);
    let mut best: Option<StrategicDecision> = None;
    for code in 0..total {
        let mut assignment = fixed.clone();
        let mut c = code;
        for a in &free {
            let v = c % values;
            c /= values;
            if v > 0 {
                assignment.insert((*a).clone(), strategy.threads[v - 1].id.clone());
            }
        }
        let probe = StrategicDecision::new(&strategy.id, assignment.clone(), 0.0);
        if !decision_violations(world, strategy, &probe).is_empty() {
            continue;
        }
        let (d, _) = evaluate(world, strategy, &assignment)?;
        let better = best.as_ref().is_none_or(|b| d.score < b.score || (d.score == b.score && d.id < b.id));
        if better {
            best = Some(d);
        }
    }
    match best {
        Some(d) => {
            let m = d.score;
            Ok((d, m))
        }
        None => Err(Error::Infeasible {
            threads: strategy.threads.iter().filter(|t| t.min_agents > 0).map(|t| t.id.clone()).collect(),
        }),
    }
}
