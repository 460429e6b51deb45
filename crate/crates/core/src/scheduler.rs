//! Centralized scheduling: turns a strategic decision into macro decisions.
//!
//! Open tasks are claimed by the highest-priority thread (ties by id) that
//! matches the task and owns at least one capable agent. Each thread then runs
//! a list-scheduling greedy over its own agent pool: at the current clock the
//! free capable agents form one group per entry, and the task with the
//! earliest completion is committed next (ties by region id, then task id).
//! A group larger than the task's micro-task count is trimmed in agent-id order.
//! Work is shared linearly: k agents finish a task k times faster.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::geo::{haversine_distance, region_centroid, travel_time};
use crate::model::{
    agent_intervals_disjoint, world_digest, Agent, AgentId, GeoPoint, MacroDecision, MacroTask, RevealEstimate,
    Schedule, StrategicDecision, Strategy, TaskId, TaskState, Thread, ThreadId, WorldState, TIME_EPS,
};
use crate::strategy::compute_releases;

/// An agent together with when and where it becomes free.
#[derive(Debug, Clone, Copy)]
pub struct ReadyAgent<'a> {
    pub agent: &'a Agent,
    pub ready: f64,
    pub at: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub start: f64,
    pub finish: f64,
    pub estimated_done: u32,
    pub estimated_reveals: Vec<RevealEstimate>,
}

pub(crate) fn centroids(world: &WorldState) -> BTreeMap<&str, GeoPoint> {
    world.regions.iter().map(|(id, r)| (id.as_str(), region_centroid(r).point)).collect()
}

fn reveal_estimates(task: &MacroTask) -> Vec<RevealEstimate> {
    task.reveal_rules
        .iter()
        .map(|r| RevealEstimate { task_type: r.successor_type.clone(), count: r.expected_count })
        .collect()
}

/// Start, finish and yield of `task` when worked by `agents` together.
pub fn estimate_completion(world: &WorldState, task: &MacroTask, agents: &[ReadyAgent<'_>]) -> Result<Estimate> {
    if agents.is_empty() {
        return Err(Error::Contract(format!("task {} estimated with no agents", task.id)));
    }
    if let Some(a) = agents.iter().find(|a| !a.agent.can_do(&task.task_type)) {
        return Err(Error::Contract(format!("agent {} cannot perform {}", a.agent.id, task.task_type)));
    }
    let region = world
        .regions
        .get(&task.region)
        .ok_or_else(|| Error::Contract(format!("task {} has unknown region", task.id)))?;
    let target = region_centroid(region).point;
    let mut start = f64::NEG_INFINITY;
    for a in agents {
        start = start.max(a.ready + travel_time(a.agent, a.at, target)?);
    }
    let work = world.remaining_workload(task) / agents.len() as f64;
    Ok(Estimate {
        start,
        finish: start + work,
        estimated_done: task.quantity,
        estimated_reveals: reveal_estimates(task),
    })
}

/// Members of each thread under `assignment`, restricted to active agents, id-sorted.
fn thread_pools<'w>(
    world: &'w WorldState,
    assignment: &'w BTreeMap<AgentId, ThreadId>,
) -> BTreeMap<&'w str, Vec<&'w Agent>> {
    let mut pools: BTreeMap<&str, Vec<&Agent>> = BTreeMap::new();
    for (aid, tid) in assignment {
        if let Some(a) = world.agents.get(aid).filter(|a| a.is_active()) {
            pools.entry(tid.as_str()).or_default().push(a);
        }
    }
    pools
}

/// Thread that claims `task`: the best-ranked matching thread with a capable member.
pub(crate) fn claiming_thread<'s>(
    strategy: &'s Strategy,
    pools: &BTreeMap<&str, Vec<&Agent>>,
    task: &MacroTask,
) -> Option<&'s Thread> {
    strategy
        .threads
        .iter()
        .filter(|t| t.matches(task))
        .filter(|t| pools.get(t.id.as_str()).is_some_and(|p| p.iter().any(|a| a.can_do(&task.task_type))))
        .min_by(|a, b| a.rank().cmp(&b.rank()))
}

struct AgentSlot {
    ready: f64,
    at: GeoPoint,
}

fn schedule_thread(
    world: &WorldState,
    cents: &BTreeMap<&str, GeoPoint>,
    thread: &Thread,
    pool: &[&Agent],
    mut tasks: Vec<&MacroTask>,
    slots: &mut BTreeMap<String, AgentSlot>,
) -> Result<Vec<MacroDecision>> {
    let mut out = Vec::new();
    tasks.sort_by(|a, b| a.region.cmp(&b.region).then_with(|| a.id.cmp(&b.id)));
    let Some(mut clock) = pool.iter().map(|a| slots[&a.id].ready).min_by(f64::total_cmp) else {
        return Ok(out);
    };
    while !tasks.is_empty() {
        let free: Vec<&Agent> = pool.iter().copied().filter(|a| slots[&a.id].ready <= clock + TIME_EPS).collect();
        let mut best: Option<(usize, Vec<&Agent>, Estimate)> = None;
        for (i, task) in tasks.iter().enumerate() {
            let mut group: Vec<&Agent> = free.iter().copied().filter(|a| a.can_do(&task.task_type)).collect();
            if group.is_empty() {
                continue;
            }
            let useful = (task.remaining() - TIME_EPS).ceil().max(1.0) as usize;
            group.truncate(useful);
            let ready: Vec<ReadyAgent<'_>> =
                group.iter().map(|a| ReadyAgent { agent: a, ready: slots[&a.id].ready, at: slots[&a.id].at }).collect();
            let est = estimate_completion(world, task, &ready)?;
            let better = match &best {
                None => true,
                // Candidates come in (region, id) order, so the first minimum wins ties.
                Some((_, _, b)) => est.finish < b.finish,
            };
            if better {
                best = Some((i, group, est));
            }
        }
        match best {
            Some((i, group, est)) => {
                let task = tasks.remove(i);
                let target = cents[task.region.as_str()];
                for a in &group {
                    let s = slots.get_mut(&a.id).expect("pool agents have slots");
                    s.ready = est.finish;
                    s.at = target;
                }
                out.push(MacroDecision {
                    task_type: task.task_type.clone(),
                    agents: group.iter().map(|a| a.id.clone()).collect(),
                    region: task.region.clone(),
                    start: est.start,
                    finish: est.finish,
                    estimated_done: est.estimated_done,
                    estimated_reveals: est.estimated_reveals,
                    task: task.id.clone(),
                    thread: thread.id.clone(),
                });
            }
            None => {
                let next =
                    pool.iter().map(|a| slots[&a.id].ready).filter(|r| *r > clock + TIME_EPS).min_by(f64::total_cmp);
                match next {
                    Some(t) => clock = t,
                    None => break,
                }
            }
        }
    }
    Ok(out)
}

/// Shared core of build and adapt: schedules every open task not covered by `preserved`.
fn plan(
    world: &WorldState,
    strategy: &Strategy,
    assignment: &BTreeMap<AgentId, ThreadId>,
    preserved: Vec<MacroDecision>,
    decision: String,
) -> Result<Schedule> {
    let cents = centroids(world);
    let pools = thread_pools(world, assignment);

    let mut slots: BTreeMap<String, AgentSlot> = BTreeMap::new();
    for pool in pools.values() {
        for a in pool {
            slots.insert(a.id.clone(), AgentSlot { ready: world.time, at: a.location });
        }
    }
    let held: BTreeSet<&str> = preserved.iter().map(|e| e.task.as_str()).collect();
    for e in &preserved {
        for a in &e.agents {
            if let Some(s) = slots.get_mut(a) {
                if e.finish >= s.ready {
                    s.ready = e.finish;
                    s.at = cents[e.region.as_str()];
                }
            }
        }
    }

    let mut claimed: BTreeMap<&str, Vec<&MacroTask>> = BTreeMap::new();
    for task in world.open_tasks() {
        if held.contains(task.id.as_str()) {
            continue;
        }
        if let Some(t) = claiming_thread(strategy, &pools, task) {
            claimed.entry(t.id.as_str()).or_default().push(task);
        }
    }

    let mut entries = preserved;
    for thread in strategy.threads_by_id() {
        let Some(pool) = pools.get(thread.id.as_str()) else { continue };
        let tasks = claimed.remove(thread.id.as_str()).unwrap_or_default();
        entries.extend(schedule_thread(world, &cents, thread, pool, tasks, &mut slots)?);
    }
    entries.sort_by(|a, b| {
        a.start.total_cmp(&b.start).then(a.finish.total_cmp(&b.finish)).then_with(|| a.task.cmp(&b.task))
    });

    let makespan = entries.iter().map(|e| e.finish).fold(0.0, f64::max);
    let mut schedule = Schedule {
        decision,
        strategy: strategy.id.clone(),
        assignment: assignment.clone(),
        created_at: world.time,
        world_digest: world_digest(world),
        entries,
        adaption_time: f64::INFINITY,
        makespan,
        releases: Vec::new(),
    };
    schedule.releases = compute_releases(world, strategy, &schedule);
    schedule.adaption_time = adaption_time(&schedule, world, strategy);
    Ok(schedule)
}

/// Feasible schedule for an applied decision.
pub fn build_schedule(world: &WorldState, strategy: &Strategy, decision: &StrategicDecision) -> Result<Schedule> {
    for (aid, tid) in &decision.assignment {
        if strategy.thread(tid).is_none() {
            return Err(Error::Contract(format!("decision names unknown thread {tid}")));
        }
        let applied =
            world.agents.get(aid).is_some_and(|a| a.status.holds_thread() && a.assigned_thread.as_deref() == Some(tid));
        if !applied {
            return Err(Error::Contract(format!(
                "decision {} is not applied: agent {aid} is not on thread {tid}",
                decision.id
            )));
        }
    }
    plan(world, strategy, &decision.assignment, Vec::new(), decision.id.clone())
}

/// Earliest moment the schedule has to be revisited, or `inf`.
///
/// Triggers are entries whose completion is expected to reveal new work and
/// agent releases that happen before the schedule completes.
pub fn adaption_time(schedule: &Schedule, world: &WorldState, strategy: &Strategy) -> f64 {
    if schedule.entries.is_empty() {
        return f64::INFINITY;
    }
    let reveal = schedule.entries.iter().filter(|e| e.estimated_reveals.iter().any(|r| r.count > 0)).map(|e| e.finish);
    let release = compute_releases(world, strategy, schedule)
        .into_iter()
        .map(|r| r.at)
        // Idle members leave at once without forcing a replan of their own.
        .filter(|at| *at > schedule.created_at + TIME_EPS && *at < schedule.makespan - TIME_EPS);
    let t = reveal.chain(release).fold(f64::INFINITY, f64::min);
    if t.is_finite() {
        t.max(world.time)
    } else {
        t
    }
}

/// Threads with work still outstanding: open matching tasks, or matching
/// reveals expected from unfinished entries of `schedule`.
pub fn threads_with_work<'s>(
    world: &WorldState,
    strategy: &'s Strategy,
    schedule: Option<&Schedule>,
) -> Vec<&'s Thread> {
    strategy
        .threads
        .iter()
        .filter(|t| {
            world.open_tasks().any(|task| t.matches(task))
                || schedule.is_some_and(|s| {
                    s.entries.iter().any(|e| {
                        let unfinished =
                            world.macro_tasks.get(&e.task).is_some_and(|task| task.state != TaskState::Done);
                        unfinished
                            && t.covers_region(&e.region)
                            && e.estimated_reveals
                                .iter()
                                .any(|r| r.count > 0 && t.goal_task_types.contains(&r.task_type))
                    })
                })
        })
        .collect()
}

/// Rebuild after execution progress, keeping in-progress entries committed.
///
/// Agents that are no longer active leave their entries; an in-progress entry
/// that loses every agent is dropped and its task is scheduled afresh.
pub fn adapt_schedule(world: &WorldState, strategy: &Strategy, old: &Schedule) -> Result<Schedule> {
    if world.time + TIME_EPS < old.created_at {
        return Err(Error::Contract(format!(
            "world time {} precedes schedule creation {}",
            world.time, old.created_at
        )));
    }
    let assignment = world.assignment_for(strategy);

    let mut broken: Vec<ThreadId> = threads_with_work(world, strategy, Some(old))
        .into_iter()
        .filter(|t| {
            let n = assignment.values().filter(|x| **x == t.id).count() as u32;
            n < t.min_agents || n > t.max_agents
        })
        .map(|t| t.id.clone())
        .collect();
    if !broken.is_empty() {
        broken.sort();
        return Err(Error::ReplanRequired { threads: broken });
    }

    let mut preserved = Vec::new();
    for e in &old.entries {
        let Some(task) = world.macro_tasks.get(&e.task) else { continue };
        if task.state != TaskState::InProgress {
            continue;
        }
        let still: BTreeSet<AgentId> =
            e.agents.iter().filter(|a| assignment.get(*a) == Some(&e.thread)).cloned().collect();
        if still.is_empty() {
            continue;
        }
        let mut kept = e.clone();
        if still.len() != e.agents.len() {
            let work = world.remaining_workload(task) / still.len() as f64;
            kept.finish = world.time.max(kept.start) + work;
            kept.agents = still;
        }
        preserved.push(kept);
    }

    plan(world, strategy, &assignment, preserved, crate::model::decision_id(&assignment))
}

/// Independent checker for every schedule invariant. Empty means feasible.
pub fn feasibility_violations(world: &WorldState, strategy: &Strategy, s: &Schedule) -> Vec<String> {
    let mut v = Vec::new();
    if !agent_intervals_disjoint(&s.entries) {
        v.push("agent intervals overlap".to_string());
    }
    let cents = centroids(world);
    let members: BTreeMap<AgentId, ThreadId> = world.assignment_for(strategy);

    let mut seen = BTreeSet::new();
    for e in &s.entries {
        let tag = format!("entry {}", e.task);
        if !seen.insert(e.task.as_str()) {
            v.push(format!("{tag}: task scheduled twice"));
        }
        if e.agents.is_empty() {
            v.push(format!("{tag}: no agents"));
        }
        if e.finish < e.start - TIME_EPS {
            v.push(format!("{tag}: finish before start"));
        }
        let Some(task) = world.macro_tasks.get(&e.task) else {
            v.push(format!("{tag}: unknown task"));
            continue;
        };
        if !task.state.is_open() {
            v.push(format!("{tag}: task is not open"));
        }
        if e.task_type != task.task_type || e.region != task.region {
            v.push(format!("{tag}: type/region disagree with the task"));
        }
        if e.estimated_done != task.quantity {
            v.push(format!("{tag}: estimated_done differs from quantity"));
        }
        match strategy.thread(&e.thread) {
            None => v.push(format!("{tag}: unknown thread {}", e.thread)),
            Some(t) if !t.matches(task) => v.push(format!("{tag}: task outside thread goal")),
            _ => {}
        }
        for a in &e.agents {
            match world.agents.get(a) {
                None => v.push(format!("{tag}: unknown agent {a}")),
                Some(agent) => {
                    if !agent.can_do(&e.task_type) {
                        v.push(format!("{tag}: agent {a} lacks capability {}", e.task_type));
                    }
                    if members.get(a) != Some(&e.thread) {
                        v.push(format!("{tag}: agent {a} is not a member of {}", e.thread));
                    }
                }
            }
        }
        let preserved = task.state == TaskState::InProgress && e.start < s.created_at - TIME_EPS;
        if !preserved {
            if e.start < s.created_at - TIME_EPS {
                v.push(format!("{tag}: starts before the schedule was created"));
            }
            let k = e.agents.len().max(1) as f64;
            let expect = e.start + world.remaining_workload(task) / k;
            if (e.finish - expect).abs() > TIME_EPS.max(1e-9 * expect.abs()) {
                v.push(format!("{tag}: finish {} differs from start + work/k = {expect}", e.finish));
            }
        }
    }

    // Travel feasibility: each agent reaches every entry after its previous one.
    let mut per_agent: BTreeMap<&str, Vec<&MacroDecision>> = BTreeMap::new();
    for e in &s.entries {
        for a in &e.agents {
            per_agent.entry(a).or_default().push(e);
        }
    }
    for (aid, mut list) in per_agent {
        let Some(agent) = world.agents.get(aid) else { continue };
        list.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut pos = agent.location;
        let mut free = s.created_at;
        for e in list {
            let Some(&target) = cents.get(e.region.as_str()) else { continue };
            let in_progress = world.macro_tasks.get(&e.task).is_some_and(|t| t.state == TaskState::InProgress);
            if !(in_progress && e.start < s.created_at - TIME_EPS) {
                let arrive = free + haversine_distance(pos, target) / agent.speed;
                if e.start < arrive - TIME_EPS.max(1e-9 * arrive.abs()) {
                    v.push(format!("entry {}: agent {aid} cannot arrive by {}", e.task, e.start));
                }
            }
            pos = target;
            free = e.finish;
        }
    }

    // Priority compliance: claims go to the best-ranked able thread, and
    // nothing doable is left out.
    let mut pools: BTreeMap<&str, Vec<&Agent>> = BTreeMap::new();
    for (a, t) in &members {
        if let Some(agent) = world.agents.get(a) {
            pools.entry(t.as_str()).or_default().push(agent);
        }
    }
    for task in world.open_tasks() {
        let best = claiming_thread(strategy, &pools, task);
        match (s.entry_for(&task.id), best) {
            (None, Some(t)) => v.push(format!("task {} is doable by {} but unscheduled", task.id, t.id)),
            (Some(e), Some(t)) if e.thread != t.id => {
                let preserved = task.state == TaskState::InProgress && e.start < s.created_at - TIME_EPS;
                if !preserved {
                    v.push(format!("task {} went to {} although higher-ranked {} can do it", task.id, e.thread, t.id));
                }
            }
            _ => {}
        }
    }

    let makespan = s.entries.iter().map(|e| e.finish).fold(0.0, f64::max);
    if (makespan - s.makespan).abs() > TIME_EPS {
        v.push(format!("makespan {} differs from max finish {makespan}", s.makespan));
    }
    if s.adaption_time < s.created_at - TIME_EPS {
        v.push("adaption_time precedes creation".to_string());
    }
    v
}

/// Per-thread latest finish in `schedule`.
pub fn thread_finish_times(schedule: &Schedule) -> BTreeMap<ThreadId, f64> {
    let mut out: BTreeMap<ThreadId, f64> = BTreeMap::new();
    for e in &schedule.entries {
        let f = out.entry(e.thread.clone()).or_insert(f64::NEG_INFINITY);
        *f = f.max(e.finish);
    }
    out
}

/// Task ids in `schedule`.
pub fn scheduled_tasks(schedule: &Schedule) -> BTreeSet<TaskId> {
    schedule.entries.iter().map(|e| e.task.clone()).collect()
}
