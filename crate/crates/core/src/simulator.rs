//! Continuous-time execution of schedules with closed-loop re-planning.
//!
//! Within a step, due items are handled in time order. At equal times a task
//! completion comes before a release, a release before a re-plan, and a
//! re-plan before a start; ties inside a class go by id. Agent positions and
//! task progress are derived from anchors (where and when an agent set off,
//! how much work a group had done when it last changed), so the tick size only
//! controls how often snapshots are taken, never what happens.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::canonical::Digest;
use crate::error::{Error, Result};
use crate::geo::{move_toward, region_centroid};
use crate::model::{
    validate_strategy, validate_world, world_digest, AgentId, AgentStatus, Event, EventKind, GeoPoint, MacroDecision,
    MacroTask, Schedule, StrategicDecision, Strategy, TaskId, TaskState, Violation, WorldState, TIME_EPS,
};
use crate::scheduler::{adapt_schedule, threads_with_work};
use crate::strategy::{apply_choice, enumerate_choices, restrict};

const MAX_REPLANS: u32 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default = "default_tick")]
    pub tick: f64,
    /// Stop time; `None` runs to quiescence.
    #[serde(default)]
    pub stop_at: Option<f64>,
    /// Reserved for stochastic reveal modes; the deterministic rules ignore it.
    #[serde(default)]
    pub seed: u64,
}

fn default_tick() -> f64 {
    1.0
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { tick: 1.0, stop_at: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// No revealed or in-progress work and nothing pending.
    Quiescent,
    /// Reached `stop_at`.
    Stopped,
    /// Work remains that no agent of the strategy can do.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub initial: WorldState,
    pub events: Vec<Event>,
    pub final_world: WorldState,
    pub replans: u32,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Class {
    Done,
    Release,
    Start,
}

#[derive(Debug, Clone, PartialEq)]
struct Item {
    at: f64,
    class: Class,
    id: String,
    /// Thread for releases.
    thread: String,
}

struct Work {
    p0: f64,
    t0: f64,
    rate: f64,
}

struct Sim {
    world: WorldState,
    strategy: Strategy,
    schedule: Schedule,
    cents: BTreeMap<String, GeoPoint>,
    /// Where and when each agent last set off.
    legs: BTreeMap<AgentId, (GeoPoint, f64)>,
    running: BTreeMap<TaskId, Work>,
    events: Vec<Event>,
}

impl Sim {
    fn new(world: WorldState, strategy: Strategy, schedule: Schedule) -> Self {
        let cents = world.regions.iter().map(|(id, r)| (id.clone(), region_centroid(r).point)).collect();
        let now = world.time;
        let legs = world.agents.values().map(|a| (a.id.clone(), (a.location, now))).collect();
        let mut sim = Sim { world, strategy, schedule, cents, legs, running: BTreeMap::new(), events: Vec::new() };
        sim.rebuild_running(true);
        sim
    }

    fn entry(&self, task: &str) -> Option<&MacroDecision> {
        self.schedule.entry_for(task)
    }

    fn crew(&self, e: &MacroDecision) -> BTreeSet<AgentId> {
        e.agents.iter().filter(|a| self.world.agents.get(*a).is_some_and(|x| x.is_active())).cloned().collect()
    }

    /// Running tasks are in progress with a scheduled entry whose crew is at work.
    fn rebuild_running(&mut self, fresh: bool) {
        let now = self.world.time;
        let mut next = BTreeMap::new();
        for task in self.world.macro_tasks.values().filter(|t| t.state == TaskState::InProgress) {
            let Some(e) = self.entry(&task.id) else { continue };
            if !fresh && !self.running.contains_key(&task.id) {
                continue;
            }
            let crew: Vec<_> =
                self.crew(e).into_iter().filter(|a| self.world.agents[a].status == AgentStatus::Working).collect();
            if crew.is_empty() {
                continue;
            }
            let uw = self.world.unit_workload(&task.task_type);
            next.insert(task.id.clone(), Work { p0: task.progress, t0: now, rate: crew.len() as f64 / uw });
        }
        self.running = next;
    }

    fn progress_at(&self, task: &MacroTask, t: f64) -> f64 {
        match self.running.get(&task.id) {
            Some(w) => (w.p0 + w.rate * (t - w.t0).max(0.0)).min(task.quantity as f64),
            None => task.progress,
        }
    }

    /// Next place an agent is heading for, if it is free to move.
    fn target(&self, aid: &str) -> Option<GeoPoint> {
        let a = &self.world.agents[aid];
        if !a.is_active() || a.status == AgentStatus::Working {
            return None;
        }
        self.schedule
            .entries
            .iter()
            .filter(|e| e.agents.contains(aid))
            .filter(|e| {
                self.world.macro_tasks.get(&e.task).is_some_and(|t| t.state.is_open())
                    && !self.running.contains_key(&e.task)
            })
            .min_by(|x, y| x.start.total_cmp(&y.start))
            .map(|e| self.cents[&e.region])
    }

    fn position_at(&self, aid: &str, t: f64) -> GeoPoint {
        let (origin, since) = self.legs[aid];
        match self.target(aid) {
            Some(to) => {
                let speed = self.world.agents[aid].speed;
                move_toward(origin, to, speed * (t - since).max(0.0))
            }
            None => origin,
        }
    }

    /// Writes derived positions and progress into the world at time `t`.
    fn sync(&mut self, t: f64) {
        let positions: Vec<(AgentId, GeoPoint)> =
            self.world.agents.keys().map(|a| (a.clone(), self.position_at(a, t))).collect();
        for (a, p) in positions {
            self.world.agents.get_mut(&a).expect("agent exists").location = p;
        }
        let progress: Vec<(TaskId, f64)> =
            self.running.keys().map(|id| (id.clone(), self.progress_at(&self.world.macro_tasks[id], t))).collect();
        for (id, p) in progress {
            self.world.macro_tasks.get_mut(&id).expect("task exists").progress = p;
        }
        self.world.time = self.world.time.max(t);
    }

    /// Re-anchors every leg and work group at the current time.
    fn reanchor(&mut self) {
        let now = self.world.time;
        for a in self.world.agents.values() {
            self.legs.insert(a.id.clone(), (a.location, now));
        }
        for (id, w) in self.running.iter_mut() {
            w.p0 = self.world.macro_tasks[id].progress;
            w.t0 = now;
        }
    }

    fn peek(&self, hold: Option<f64>) -> Option<Item> {
        let mut items = Vec::new();
        for id in self.running.keys() {
            if let Some(e) = self.entry(id) {
                items.push(Item { at: e.finish, class: Class::Done, id: id.clone(), thread: String::new() });
            }
        }
        for r in &self.schedule.releases {
            let holds =
                self.world.agents.get(&r.agent).is_some_and(|a| {
                    a.status == AgentStatus::Assigned && a.assigned_thread.as_deref() == Some(&r.thread)
                });
            let busy = self.schedule.entries.iter().any(|e| {
                e.agents.contains(&r.agent) && self.world.macro_tasks.get(&e.task).is_some_and(|t| t.state.is_open())
            });
            if holds && !busy {
                items.push(Item { at: r.at, class: Class::Release, id: r.agent.clone(), thread: r.thread.clone() });
            }
        }
        for e in &self.schedule.entries {
            let open = self.world.macro_tasks.get(&e.task).is_some_and(|t| t.state.is_open());
            if !open || self.running.contains_key(&e.task) {
                continue;
            }
            if hold.is_some_and(|h| e.start >= h - TIME_EPS) {
                continue;
            }
            let crew = self.crew(e);
            let free = crew.iter().all(|a| self.world.agents[a].status != AgentStatus::Working);
            if !crew.is_empty() && free {
                items.push(Item { at: e.start, class: Class::Start, id: e.task.clone(), thread: String::new() });
            }
        }
        items.into_iter().min_by(|a, b| a.at.total_cmp(&b.at).then(a.class.cmp(&b.class)).then_with(|| a.id.cmp(&b.id)))
    }

    fn emit(&mut self, kind: EventKind) {
        self.events.push(Event::new(self.world.time, kind));
    }

    fn process(&mut self, item: Item) {
        let t = item.at.max(self.world.time);
        self.sync(t);
        match item.class {
            Class::Done => {
                let e = self.entry(&item.id).expect("running tasks are scheduled").clone();
                self.running.remove(&item.id);
                let centre = self.cents[&e.region];
                let crew = self.crew(&e);
                for a in &crew {
                    let agent = self.world.agents.get_mut(a).expect("crew exists");
                    if agent.status == AgentStatus::Working {
                        agent.status = AgentStatus::Assigned;
                    }
                    agent.location = centre;
                    self.legs.insert(a.clone(), (centre, t));
                }
                let task = self.world.macro_tasks.get_mut(&item.id).expect("task exists");
                task.progress = task.quantity as f64;
                task.state = TaskState::Done;
                let quantity = task.quantity;
                let parent = task.clone();
                self.emit(EventKind::TaskDone { task: item.id.clone(), agents: crew, quantity });
                let revealed = reveal_successors(&mut self.world, &parent);
                if !revealed.is_empty() {
                    self.emit(EventKind::TasksRevealed { parent: Some(parent.id.clone()), tasks: revealed });
                }
            }
            Class::Release => {
                let agent = self.world.agents.get_mut(&item.id).expect("agent exists");
                agent.status = AgentStatus::Available;
                agent.assigned_thread = None;
                self.legs.insert(item.id.clone(), (agent.location, t));
                self.emit(EventKind::AgentReleased { agent: item.id, thread: item.thread });
            }
            Class::Start => {
                let e = self.entry(&item.id).expect("started tasks are scheduled").clone();
                let centre = self.cents[&e.region];
                let crew = self.crew(&e);
                for a in &crew {
                    let agent = self.world.agents.get_mut(a).expect("crew exists");
                    agent.status = AgentStatus::Working;
                    agent.location = centre;
                    self.legs.insert(a.clone(), (centre, t));
                }
                let task = self.world.macro_tasks.get_mut(&item.id).expect("task exists");
                task.state = TaskState::InProgress;
                let uw = self.world.unit_workload(&e.task_type);
                let p0 = self.world.macro_tasks[&item.id].progress;
                self.running.insert(item.id.clone(), Work { p0, t0: t, rate: crew.len() as f64 / uw });
                self.emit(EventKind::TaskStarted { task: item.id, agents: crew });
            }
        }
    }

    /// Handles every due item up to `until`; starts at or after `hold` wait.
    fn advance(&mut self, until: f64, hold: Option<f64>) {
        while let Some(item) = self.peek(hold).filter(|i| i.at <= until) {
            self.process(item);
        }
        self.sync(until);
    }

    fn positions(&self) -> BTreeMap<AgentId, GeoPoint> {
        self.world.agents.values().map(|a| (a.id.clone(), a.location)).collect()
    }

    fn progress(&self) -> BTreeMap<TaskId, f64> {
        self.running.keys().map(|id| (id.clone(), self.world.macro_tasks[id].progress)).collect()
    }

    fn replan_event(&mut self, reason: &str) {
        let kind = EventKind::ReplanTriggered {
            reason: reason.to_string(),
            decision: self.schedule.decision.clone(),
            assignment: holders(&self.world),
            positions: self.positions(),
            progress: self.progress(),
        };
        self.emit(kind);
    }

    /// Replaces the schedule (and possibly the assignment) at the current time.
    fn replan(&mut self, reason: &str) -> Result<()> {
        self.reanchor();
        let (world, strategy, schedule) = replan(&self.world, &self.strategy, Some(&self.schedule))?;
        self.world = world;
        self.strategy = strategy;
        self.schedule = schedule;
        self.rebuild_running(false);
        self.reanchor();
        self.replan_event(reason);
        Ok(())
    }
}

/// Thread held by every agent that holds one.
fn holders(world: &WorldState) -> BTreeMap<AgentId, String> {
    world
        .agents
        .values()
        .filter(|a| a.status.holds_thread())
        .filter_map(|a| a.assigned_thread.clone().map(|t| (a.id.clone(), t)))
        .collect()
}

/// Applies a completed task's reveal rules, returning the tasks that became visible.
fn reveal_successors(world: &mut WorldState, parent: &MacroTask) -> Vec<MacroTask> {
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for r in &parent.reveal_rules {
        *counts.entry(r.successor_type.as_str()).or_default() += r.expected_count;
    }
    let mut out = Vec::new();
    for (ty, n) in counts {
        if n == 0 {
            continue;
        }
        let id = format!("{}/{ty}", parent.id);
        let task = match world.macro_tasks.get(&id) {
            Some(existing) if existing.state != TaskState::Hidden => continue,
            Some(existing) => MacroTask { state: TaskState::Revealed, quantity: n, progress: 0.0, ..existing.clone() },
            None => MacroTask {
                id: id.clone(),
                task_type: ty.to_string(),
                region: parent.region.clone(),
                quantity: n,
                state: TaskState::Revealed,
                reveal_rules: Vec::new(),
                certainty: parent.certainty,
                progress: 0.0,
            },
        };
        world.macro_tasks.insert(id, task.clone());
        out.push(task);
    }
    out
}

fn relaxed(strategy: &Strategy) -> Strategy {
    let mut s = strategy.clone();
    for t in &mut s.threads {
        t.min_agents = 0;
    }
    s
}

/// Available agents that could take on open or expected work of some active thread with room.
fn helpers(world: &WorldState, active: &Strategy, old: Option<&Schedule>) -> BTreeSet<AgentId> {
    let counts = world.assignment_for(active);
    world
        .agents
        .values()
        .filter(|a| a.status == AgentStatus::Available)
        .filter(|a| {
            active.threads.iter().any(|t| {
                let n = counts.values().filter(|x| **x == t.id).count() as u32;
                let open = world.open_tasks().any(|task| t.matches(task) && a.can_do(&task.task_type));
                let expected = old.is_some_and(|s| {
                    s.entries.iter().any(|e| {
                        t.covers_region(&e.region)
                            && e.estimated_reveals.iter().any(|r| {
                                r.count > 0 && t.goal_task_types.contains(&r.task_type) && a.can_do(&r.task_type)
                            })
                    })
                });
                n < t.max_agents && (open || expected)
            })
        })
        .map(|a| a.id.clone())
        .collect()
}

fn best_choice(world: &WorldState, active: &Strategy, helpers: &BTreeSet<AgentId>) -> Result<StrategicDecision> {
    let mut pool = world.clone();
    pool.agents.retain(|id, a| a.status != AgentStatus::Available || helpers.contains(id));
    match enumerate_choices(&pool, active, 1) {
        Ok(mut cs) => Ok(cs.decisions.remove(0)),
        Err(Error::Infeasible { .. }) => Ok(enumerate_choices(&pool, &relaxed(active), 1)?.decisions.remove(0)),
        Err(e) => Err(e),
    }
}

/// New assignment and schedule for `world`, adapting `old` when given.
/// Falls back to relaxed thread minimums when the strategy can no longer be
/// staffed; the strategy actually used is returned alongside.
pub fn replan(
    world: &WorldState,
    strategy: &Strategy,
    old: Option<&Schedule>,
) -> Result<(WorldState, Strategy, Schedule)> {
    let active_threads = threads_with_work(world, strategy, old);
    let active = restrict(strategy, &active_threads);
    let mut next = world.clone();
    let mut strategy = strategy.clone();
    if !active.threads.is_empty() {
        let help = helpers(&next, &active, old);
        if !help.is_empty() {
            let d = best_choice(&next, &active, &help)?;
            next = apply_choice(&next, &d)?;
        }
    }
    let empty = Schedule {
        decision: String::new(),
        strategy: strategy.id.clone(),
        assignment: BTreeMap::new(),
        created_at: next.time,
        world_digest: world_digest(&next),
        entries: Vec::new(),
        adaption_time: f64::INFINITY,
        makespan: 0.0,
        releases: Vec::new(),
    };
    let base = old.unwrap_or(&empty);
    let schedule = match adapt_schedule(&next, &strategy, base) {
        Ok(s) => s,
        Err(Error::ReplanRequired { .. }) => {
            strategy = relaxed(&strategy);
            adapt_schedule(&next, &strategy, base)?
        }
        Err(e) => return Err(e),
    };
    Ok((next, strategy, schedule))
}

fn check_inputs(world: &WorldState, strategy: &Strategy) -> Result<()> {
    let mut v = validate_world(world);
    v.extend(validate_strategy(world, strategy, &format!("strategies/{}", strategy.id)));
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(v))
    }
}

/// Advances `world` by `dt` seconds under `schedule`.
pub fn step(world: &WorldState, strategy: &Strategy, schedule: &Schedule, dt: f64) -> Result<(WorldState, Vec<Event>)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Contract(format!("step length must be positive, got {dt}")));
    }
    let mut sim = Sim::new(world.clone(), strategy.clone(), schedule.clone());
    let t0 = world.time;
    let end = t0 + dt;
    let adapt = schedule.adaption_time;
    if adapt > t0 && adapt <= end {
        sim.advance(adapt, Some(adapt));
        sim.replan_event("adaption_time");
    }
    sim.advance(end, None);
    Ok((sim.world, sim.events))
}

/// Closed-loop run: plan, execute until the adaption time, re-plan, repeat.
pub fn run(world: &WorldState, strategy: &Strategy, config: &SimConfig) -> Result<Trace> {
    run_observed(world, strategy, config, |_| {})
}

/// What an observer sees each time a plan is adopted.
pub struct PlanSnapshot<'a> {
    pub world: &'a WorldState,
    pub strategy: &'a Strategy,
    pub schedule: &'a Schedule,
}

/// [`run`], calling `observe` after the initial plan and every re-plan.
pub fn run_observed(
    world: &WorldState,
    strategy: &Strategy,
    config: &SimConfig,
    mut observe: impl FnMut(PlanSnapshot<'_>),
) -> Result<Trace> {
    check_inputs(world, strategy)?;
    if !(config.tick > 0.0) || !config.tick.is_finite() {
        return Err(Error::Contract(format!("tick must be positive, got {}", config.tick)));
    }
    let stop = config.stop_at.unwrap_or(f64::INFINITY);

    let (planned, working, schedule) = replan(world, strategy, None)?;
    let changed = holders(&planned) != holders(world);
    let mut sim = Sim::new(planned, working, schedule);
    let mut replans = 0u32;
    if changed {
        sim.replan_event("initial");
        replans += 1;
    }

    observe(snapshot(&sim));
    let (outcome, more) = drive(&mut sim, stop, config.tick, true, &mut observe)?;
    replans += more;
    Ok(Trace { initial: world.clone(), events: sim.events, final_world: sim.world, replans, outcome })
}

/// State after [`advance`].
#[derive(Debug, Clone, PartialEq)]
pub struct Advance {
    pub world: WorldState,
    pub schedule: Schedule,
    pub events: Vec<Event>,
    pub replans: u32,
    pub outcome: Outcome,
}

/// Closed-loop counterpart of [`step`]: runs `dt` seconds from an adopted
/// schedule, re-planning whenever it is due.
pub fn advance(world: &WorldState, strategy: &Strategy, schedule: &Schedule, dt: f64) -> Result<Advance> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Contract(format!("step length must be positive, got {dt}")));
    }
    let stop = world.time + dt;
    let mut sim = Sim::new(world.clone(), strategy.clone(), schedule.clone());
    let (outcome, replans) = drive(&mut sim, stop, dt, false, &mut |_| {})?;
    sim.sync(stop);
    Ok(Advance { world: sim.world, schedule: sim.schedule, events: sim.events, replans, outcome })
}

fn drive(
    sim: &mut Sim,
    stop: f64,
    tick: f64,
    checkpoint: bool,
    observe: &mut impl FnMut(PlanSnapshot<'_>),
) -> Result<(Outcome, u32)> {
    let mut replans = 0u32;
    let mut seen: BTreeSet<(Digest, u64)> = BTreeSet::new();
    let mut quiet = sim.events.len();
    let outcome = loop {
        let adapt = sim.schedule.adaption_time;
        let created = sim.schedule.created_at;
        // A trigger at the very instant of planning waits for that instant's work.
        let hold = (adapt > created + TIME_EPS).then_some(adapt);
        let horizon = adapt.min(stop);
        let next = sim.peek(hold).filter(|i| i.at <= horizon);

        if let Some(item) = next {
            tick_to(sim, item.at, tick);
            sim.process(item);
            continue;
        }
        let reason = if adapt.is_finite() && adapt <= stop {
            tick_to(sim, adapt, tick);
            "adaption_time"
        } else if sim.world.open_tasks().next().is_none() {
            break Outcome::Quiescent;
        } else if stop.is_finite() {
            tick_to(sim, stop, tick);
            if checkpoint {
                let kind = EventKind::TaskProgress { progress: sim.progress(), positions: sim.positions() };
                sim.emit(kind);
            }
            break Outcome::Stopped;
        } else if sim.events.len() == quiet {
            // Nothing has happened since the last plan, so another would be the same.
            break Outcome::Stalled;
        } else {
            "exhausted"
        };
        sim.replan(reason)?;
        replans += 1;
        guard(&mut seen, sim, replans)?;
        observe(snapshot(sim));
        quiet = sim.events.len();
    };
    Ok((outcome, replans))
}

fn snapshot(sim: &Sim) -> PlanSnapshot<'_> {
    PlanSnapshot { world: &sim.world, strategy: &sim.strategy, schedule: &sim.schedule }
}

fn tick_to(sim: &mut Sim, t: f64, tick: f64) {
    let mut at = sim.world.time;
    while at + tick < t {
        at += tick;
        sim.sync(at);
    }
    sim.sync(t);
}

fn guard(seen: &mut BTreeSet<(Digest, u64)>, sim: &Sim, replans: u32) -> Result<()> {
    let key = (world_digest(&sim.world), sim.world.time.to_bits());
    if !seen.insert(key) || replans > MAX_REPLANS {
        return Err(Error::Livelock(sim.world.time));
    }
    Ok(())
}

/// Applies an event's effect on the world without checking it.
fn apply_event(world: &mut WorldState, e: &Event) {
    world.time = world.time.max(e.at);
    let centroid = |w: &WorldState, task: &str| {
        w.macro_tasks.get(task).and_then(|t| w.regions.get(&t.region)).map(|r| region_centroid(r).point)
    };
    match &e.kind {
        EventKind::TaskStarted { task, agents } => {
            let c = centroid(world, task);
            if let Some(t) = world.macro_tasks.get_mut(task) {
                t.state = TaskState::InProgress;
            }
            for a in agents {
                if let Some(agent) = world.agents.get_mut(a) {
                    agent.status = AgentStatus::Working;
                    if let Some(c) = c {
                        agent.location = c;
                    }
                }
            }
        }
        EventKind::TaskProgress { progress, positions } => {
            set_progress(world, progress);
            set_positions(world, positions);
        }
        EventKind::TaskDone { task, agents, quantity } => {
            let c = centroid(world, task);
            if let Some(t) = world.macro_tasks.get_mut(task) {
                t.state = TaskState::Done;
                t.quantity = *quantity;
                t.progress = *quantity as f64;
            }
            for a in agents {
                if let Some(agent) = world.agents.get_mut(a) {
                    if agent.status == AgentStatus::Working {
                        agent.status = AgentStatus::Assigned;
                    }
                    if let Some(c) = c {
                        agent.location = c;
                    }
                }
            }
        }
        EventKind::TasksRevealed { tasks, .. } => {
            for t in tasks {
                let mut t = t.clone();
                t.state = TaskState::Revealed;
                world.macro_tasks.insert(t.id.clone(), t);
            }
        }
        EventKind::AgentReleased { agent, .. } => {
            if let Some(a) = world.agents.get_mut(agent) {
                a.status = AgentStatus::Available;
                a.assigned_thread = None;
            }
        }
        EventKind::AgentDisabled { agent } => {
            if let Some(a) = world.agents.get_mut(agent) {
                a.status = AgentStatus::Disabled;
                a.assigned_thread = None;
            }
        }
        EventKind::ReplanTriggered { assignment, positions, progress, .. } => {
            for a in world.agents.values_mut() {
                match assignment.get(&a.id) {
                    Some(t) => {
                        if a.status != AgentStatus::Working {
                            a.status = AgentStatus::Assigned;
                        }
                        a.assigned_thread = Some(t.clone());
                    }
                    None if a.status.holds_thread() => {
                        a.status = AgentStatus::Available;
                        a.assigned_thread = None;
                    }
                    None => {}
                }
            }
            set_positions(world, positions);
            set_progress(world, progress);
        }
        EventKind::AllocationMade { .. } => {}
    }
}

fn set_positions(world: &mut WorldState, positions: &BTreeMap<AgentId, GeoPoint>) {
    for (a, p) in positions {
        if let Some(agent) = world.agents.get_mut(a) {
            agent.location = *p;
        }
    }
}

fn set_progress(world: &mut WorldState, progress: &BTreeMap<TaskId, f64>) {
    for (t, p) in progress {
        if let Some(task) = world.macro_tasks.get_mut(t) {
            task.progress = *p;
        }
    }
}

/// Applies an exogenous event: an agent dropping out or new tasks appearing.
pub fn inject_event(world: &WorldState, e: &Event) -> Result<WorldState> {
    let mut v = Vec::new();
    match &e.kind {
        EventKind::AgentDisabled { agent } => {
            if !world.agents.contains_key(agent) {
                v.push(Violation::new("event/agent", format!("unknown agent {agent}")));
            }
        }
        EventKind::TasksRevealed { tasks, .. } => {
            for (i, t) in tasks.iter().enumerate() {
                let path = format!("event/tasks/{i}");
                if !world.task_types.contains_key(&t.task_type) {
                    v.push(Violation::new(format!("{path}/task_type"), format!("unknown task type {}", t.task_type)));
                }
                if !world.regions.contains_key(&t.region) {
                    v.push(Violation::new(format!("{path}/region"), format!("unknown region {}", t.region)));
                }
                if world.macro_tasks.get(&t.id).is_some_and(|x| x.state != TaskState::Hidden) {
                    v.push(Violation::new(format!("{path}/id"), format!("task {} already exists", t.id)));
                }
                if !(0.0..=1.0).contains(&t.certainty) {
                    v.push(Violation::new(format!("{path}/certainty"), "certainty outside [0, 1]"));
                }
            }
        }
        other => {
            return Err(Error::Contract(format!("{} cannot be injected", other.name())));
        }
    }
    if !(e.at >= 0.0) {
        v.push(Violation::new("event/at", "event time must be non-negative"));
    }
    if !v.is_empty() {
        return Err(Error::Validation(v));
    }
    let mut next = world.clone();
    apply_event(&mut next, e);
    Ok(next)
}

/// Rebuilds the world a log describes, starting from `initial`.
pub fn replay(initial: &WorldState, log: &[Event]) -> Result<WorldState> {
    let mut world = initial.clone();
    let mut previous = f64::NEG_INFINITY;
    for e in log {
        if e.at < previous - TIME_EPS {
            return Err(Error::Ordering { at: e.at, previous });
        }
        previous = previous.max(e.at);
        apply_event(&mut world, e);
    }
    Ok(world)
}
