//! Domain types of the coordination problem and whole-world validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::canonical::{inf_f64, keyed, Digest};

/// Absolute tolerance for every time comparison, in seconds.
pub const TIME_EPS: f64 = 1e-6;

pub type AgentId = String;
pub type RegionId = String;
pub type TaskTypeId = String;
pub type TaskId = String;
pub type RefugeId = String;
pub type ClusterId = String;
pub type ThreadId = String;
pub type StrategyId = String;

/// Items stored in id-keyed collections.
pub trait Keyed {
    fn key(&self) -> &str;
}

macro_rules! keyed_by_id {
    ($($t:ty),*) => {
        $(impl Keyed for $t {
            fn key(&self) -> &str {
                &self.id
            }
        })*
    };
}

/// WGS84 position, serialized as a `[lon, lat]` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub const fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

impl From<[f64; 2]> for GeoPoint {
    fn from([lon, lat]: [f64; 2]) -> Self {
        Self { lon, lat }
    }
}

impl From<GeoPoint> for [f64; 2] {
    fn from(p: GeoPoint) -> Self {
        [p.lon, p.lat]
    }
}

/// A macro geographic zone: a simple polygon without the closing vertex repeated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: RegionId,
    pub name: String,
    pub boundary: Vec<GeoPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskType {
    pub id: TaskTypeId,
    /// Agent-seconds of work per micro task.
    pub unit_workload: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentStatus {
    Available,
    Assigned,
    Working,
    Disabled,
}

impl AgentStatus {
    pub fn holds_thread(self) -> bool {
        matches!(self, AgentStatus::Assigned | AgentStatus::Working)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub kind: String,
    pub location: GeoPoint,
    /// Meters per second.
    pub speed: f64,
    pub capabilities: BTreeSet<TaskTypeId>,
    pub status: AgentStatus,
    #[serde(default)]
    pub assigned_thread: Option<ThreadId>,
}

impl Agent {
    pub fn can_do(&self, task_type: &str) -> bool {
        self.capabilities.contains(task_type)
    }

    pub fn is_active(&self) -> bool {
        self.status != AgentStatus::Disabled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Hidden,
    Revealed,
    InProgress,
    Done,
}

impl TaskState {
    /// Visible to planning and not yet finished.
    pub fn is_open(self) -> bool {
        matches!(self, TaskState::Revealed | TaskState::InProgress)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealRule {
    pub successor_type: TaskTypeId,
    pub expected_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroTask {
    pub id: TaskId,
    pub task_type: TaskTypeId,
    pub region: RegionId,
    /// Micro tasks in this bundle.
    pub quantity: u32,
    pub state: TaskState,
    #[serde(default)]
    pub reveal_rules: Vec<RevealRule>,
    pub certainty: f64,
    /// Micro tasks completed so far; fractional while work is under way.
    #[serde(default)]
    pub progress: f64,
}

impl MacroTask {
    pub fn remaining(&self) -> f64 {
        (f64::from(self.quantity) - self.progress).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refuge {
    pub id: RefugeId,
    pub location: GeoPoint,
    pub capacity: u32,
    pub occupied: u32,
}

impl Refuge {
    pub fn free_capacity(&self) -> u32 {
        self.capacity.saturating_sub(self.occupied)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasualtyCluster {
    pub id: ClusterId,
    pub location: GeoPoint,
    pub count: u32,
    pub severity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thread {
    pub id: ThreadId,
    /// 1 is the highest priority.
    pub priority: u32,
    pub goal_task_types: BTreeSet<TaskTypeId>,
    /// Empty means every region.
    #[serde(default)]
    pub goal_regions: BTreeSet<RegionId>,
    pub min_agents: u32,
    pub max_agents: u32,
}

impl Thread {
    pub fn covers_region(&self, region: &str) -> bool {
        self.goal_regions.is_empty() || self.goal_regions.contains(region)
    }

    /// Whether `task` falls under this thread's goal.
    pub fn matches(&self, task: &MacroTask) -> bool {
        self.goal_task_types.contains(&task.task_type) && self.covers_region(&task.region)
    }

    pub fn accepts_agent(&self, agent: &Agent) -> bool {
        agent.capabilities.iter().any(|c| self.goal_task_types.contains(c))
    }

    /// Ordering key used wherever threads compete: priority first, then id.
    pub fn rank(&self) -> (u32, &str) {
        (self.priority, &self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub id: StrategyId,
    pub objective: String,
    pub threads: Vec<Thread>,
}

impl Strategy {
    pub fn thread(&self, id: &str) -> Option<&Thread> {
        self.threads.iter().find(|t| t.id == id)
    }

    /// Threads sorted by id.
    pub fn threads_by_id(&self) -> Vec<&Thread> {
        let mut v: Vec<&Thread> = self.threads.iter().collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    pub fn digest(&self) -> Digest {
        let mut s = self.clone();
        s.threads.sort_by(|a, b| a.id.cmp(&b.id));
        Digest::of(&s)
    }

    /// Strategy invariants; `prefix` is the path used in violation reports.
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.threads.is_empty() {
            out.push(Violation::new(format!("{prefix}/threads"), "strategy has no threads"));
        }
        let mut seen = BTreeSet::new();
        for t in &self.threads {
            let p = format!("{prefix}/threads/{}", t.id);
            if !seen.insert(t.id.as_str()) {
                out.push(Violation::new(&p, "duplicate thread id"));
            }
            if t.priority < 1 {
                out.push(Violation::new(format!("{p}/priority"), "priority must be >= 1"));
            }
            if t.goal_task_types.is_empty() {
                out.push(Violation::new(format!("{p}/goal_task_types"), "goal_task_types is empty"));
            }
            if t.min_agents > t.max_agents {
                out.push(Violation::new(
                    format!("{p}/min_agents"),
                    format!("min_agents {} exceeds max_agents {}", t.min_agents, t.max_agents),
                ));
            }
        }
        out
    }
}

/// Agent-to-thread assignment made from a strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategicDecision {
    pub id: String,
    pub strategy: StrategyId,
    pub assignment: BTreeMap<AgentId, ThreadId>,
    /// Predicted makespan; lower is better, `inf` when the decision leaves work uncovered.
    #[serde(with = "inf_f64")]
    pub score: f64,
}

impl StrategicDecision {
    pub fn new(strategy: &str, assignment: BTreeMap<AgentId, ThreadId>, score: f64) -> Self {
        Self { id: decision_id(&assignment), strategy: strategy.to_string(), assignment, score }
    }

    pub fn members(&self, thread: &str) -> Vec<&str> {
        self.assignment.iter().filter(|(_, t)| t.as_str() == thread).map(|(a, _)| a.as_str()).collect()
    }
}

/// Canonical id of an assignment: `agent>thread` pairs in agent order.
pub fn decision_id(assignment: &BTreeMap<AgentId, ThreadId>) -> String {
    if assignment.is_empty() {
        return "none".to_string();
    }
    assignment.iter().map(|(a, t)| format!("{a}>{t}")).collect::<Vec<_>>().join(";")
}

/// Inverse of [`decision_id`]; `None` for text that is not a canonical id.
pub fn parse_decision_id(id: &str) -> Option<BTreeMap<AgentId, ThreadId>> {
    if id == "none" {
        return Some(BTreeMap::new());
    }
    let mut out = BTreeMap::new();
    for pair in id.split(';') {
        let (a, t) = pair.split_once('>')?;
        if a.is_empty() || t.is_empty() || out.insert(a.to_string(), t.to_string()).is_some() {
            return None;
        }
    }
    (decision_id(&out) == id).then_some(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealEstimate {
    pub task_type: TaskTypeId,
    pub count: u32,
}

/// One schedule entry: what, who, where, when it starts and finishes,
/// how many micro tasks get done and what is expected to surface afterwards.
/// `task` and `thread` link the entry back to the world and the decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroDecision {
    pub task_type: TaskTypeId,
    pub agents: BTreeSet<AgentId>,
    pub region: RegionId,
    pub start: f64,
    pub finish: f64,
    pub estimated_done: u32,
    pub estimated_reveals: Vec<RevealEstimate>,
    pub task: TaskId,
    pub thread: ThreadId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub decision: String,
    pub strategy: StrategyId,
    /// Thread of every agent the schedule was built for.
    #[serde(default)]
    pub assignment: BTreeMap<AgentId, ThreadId>,
    pub created_at: f64,
    pub world_digest: Digest,
    pub entries: Vec<MacroDecision>,
    #[serde(with = "inf_f64")]
    pub adaption_time: f64,
    pub makespan: f64,
    /// Agents due to leave their thread once its work is exhausted.
    #[serde(default)]
    pub releases: Vec<Release>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Release {
    pub agent: AgentId,
    pub thread: ThreadId,
    pub at: f64,
}

impl Schedule {
    pub fn entry_for(&self, task: &str) -> Option<&MacroDecision> {
        self.entries.iter().find(|e| e.task == task)
    }

    /// Digest over the entries alone.
    pub fn entries_digest(&self) -> Digest {
        Digest::of(&self.entries)
    }
}

/// Complete snapshot of the world at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct WorldState {
    pub time: f64,
    #[serde(with = "keyed", default)]
    pub agents: BTreeMap<AgentId, Agent>,
    #[serde(with = "keyed", default)]
    pub regions: BTreeMap<RegionId, Region>,
    #[serde(with = "keyed", default)]
    pub task_types: BTreeMap<TaskTypeId, TaskType>,
    #[serde(with = "keyed", default)]
    pub macro_tasks: BTreeMap<TaskId, MacroTask>,
    #[serde(with = "keyed", default)]
    pub refuges: BTreeMap<RefugeId, Refuge>,
    #[serde(with = "keyed", default)]
    pub casualty_clusters: BTreeMap<ClusterId, CasualtyCluster>,
}

keyed_by_id!(Agent, Region, TaskType, MacroTask, Refuge, CasualtyCluster);

impl WorldState {
    pub fn insert_agent(&mut self, a: Agent) {
        self.agents.insert(a.id.clone(), a);
    }
    pub fn insert_region(&mut self, r: Region) {
        self.regions.insert(r.id.clone(), r);
    }
    pub fn insert_task_type(&mut self, t: TaskType) {
        self.task_types.insert(t.id.clone(), t);
    }
    pub fn insert_task(&mut self, t: MacroTask) {
        self.macro_tasks.insert(t.id.clone(), t);
    }
    pub fn insert_refuge(&mut self, r: Refuge) {
        self.refuges.insert(r.id.clone(), r);
    }
    pub fn insert_cluster(&mut self, c: CasualtyCluster) {
        self.casualty_clusters.insert(c.id.clone(), c);
    }

    /// Revealed or in-progress tasks, in id order.
    pub fn open_tasks(&self) -> impl Iterator<Item = &MacroTask> {
        self.macro_tasks.values().filter(|t| t.state.is_open())
    }

    pub fn unit_workload(&self, task_type: &str) -> f64 {
        self.task_types.get(task_type).map_or(0.0, |t| t.unit_workload)
    }

    /// Remaining agent-seconds of work on `task`.
    pub fn remaining_workload(&self, task: &MacroTask) -> f64 {
        task.remaining() * self.unit_workload(&task.task_type)
    }

    /// Current agent→thread assignment restricted to `strategy`'s threads.
    pub fn assignment_for(&self, strategy: &Strategy) -> BTreeMap<AgentId, ThreadId> {
        self.agents
            .values()
            .filter(|a| a.status.holds_thread())
            .filter_map(|a| {
                let t = a.assigned_thread.as_ref()?;
                strategy.thread(t).map(|_| (a.id.clone(), t.clone()))
            })
            .collect()
    }
}

/// A broken invariant, located by a slash-separated path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn check_point(out: &mut Vec<Violation>, path: String, p: &GeoPoint) {
    if !p.is_valid() {
        out.push(Violation::new(path, format!("invalid coordinate ({}, {})", p.lon, p.lat)));
    }
}

fn cross(o: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    (a.lon - o.lon) * (b.lat - o.lat) - (a.lat - o.lat) * (b.lon - o.lon)
}

fn on_segment(p: GeoPoint, q: GeoPoint, r: GeoPoint) -> bool {
    q.lon <= p.lon.max(r.lon) && q.lon >= p.lon.min(r.lon) && q.lat <= p.lat.max(r.lat) && q.lat >= p.lat.min(r.lat)
}

fn segments_intersect(p1: GeoPoint, p2: GeoPoint, p3: GeoPoint, p4: GeoPoint) -> bool {
    let d1 = cross(p3, p4, p1);
    let d2 = cross(p3, p4, p2);
    let d3 = cross(p1, p2, p3);
    let d4 = cross(p1, p2, p4);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p3, p1, p4))
        || (d2 == 0.0 && on_segment(p3, p2, p4))
        || (d3 == 0.0 && on_segment(p1, p3, p2))
        || (d4 == 0.0 && on_segment(p1, p4, p2))
}

/// True when no two non-adjacent edges of the closed ring touch.
pub fn is_simple_polygon(ring: &[GeoPoint]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a1, a2) = (ring[i], ring[(i + 1) % n]);
        if a1 == a2 {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (b1, b2) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}

/// Every invariant breach in `world`. Never panics on malformed input.
pub fn validate_world(world: &WorldState) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(world.time.is_finite() && world.time >= 0.0) {
        out.push(Violation::new("time", "time must be finite and >= 0"));
    }

    for (key, tt) in &world.task_types {
        let p = format!("task_types/{key}");
        if key != &tt.id {
            out.push(Violation::new(&p, "key does not match id"));
        }
        if !(tt.unit_workload.is_finite() && tt.unit_workload > 0.0) {
            out.push(Violation::new(format!("{p}/unit_workload"), "unit_workload must be > 0"));
        }
    }

    for (key, r) in &world.regions {
        let p = format!("regions/{key}");
        if key != &r.id {
            out.push(Violation::new(&p, "key does not match id"));
        }
        for (i, v) in r.boundary.iter().enumerate() {
            check_point(&mut out, format!("{p}/boundary/{i}"), v);
        }
        if r.boundary.len() < 3 {
            out.push(Violation::new(format!("{p}/boundary"), "polygon needs at least 3 vertices"));
        } else if !is_simple_polygon(&r.boundary) {
            out.push(Violation::new(format!("{p}/boundary"), "polygon is not simple"));
        }
    }

    for (key, a) in &world.agents {
        let p = format!("agents/{key}");
        if key != &a.id {
            out.push(Violation::new(&p, "key does not match id"));
        }
        check_point(&mut out, format!("{p}/location"), &a.location);
        if !(a.speed.is_finite() && a.speed > 0.0) {
            out.push(Violation::new(format!("{p}/speed"), "speed must be > 0"));
        }
        if a.capabilities.is_empty() {
            out.push(Violation::new(format!("{p}/capabilities"), "capabilities are empty"));
        }
        for c in &a.capabilities {
            if !world.task_types.contains_key(c) {
                out.push(Violation::new(format!("{p}/capabilities"), format!("unknown task type {c:?}")));
            }
        }
        match (a.status.holds_thread(), a.assigned_thread.is_some()) {
            (true, false) => {
                out.push(Violation::new(format!("{p}/assigned_thread"), "assigned or working agent has no thread"))
            }
            (false, true) => out.push(Violation::new(
                format!("{p}/assigned_thread"),
                "only assigned or working agents may hold a thread",
            )),
            _ => {}
        }
    }

    for (key, t) in &world.macro_tasks {
        let p = format!("macro_tasks/{key}");
        if key != &t.id {
            out.push(Violation::new(&p, "key does not match id"));
        }
        if !world.task_types.contains_key(&t.task_type) {
            out.push(Violation::new(
                format!("{p}/task_type"),
                format!("dangling reference to task type {:?}", t.task_type),
            ));
        }
        if !world.regions.contains_key(&t.region) {
            out.push(Violation::new(format!("{p}/region"), format!("dangling reference to region {:?}", t.region)));
        }
        if !(0.0..=1.0).contains(&t.certainty) {
            out.push(Violation::new(format!("{p}/certainty"), "certainty must lie in [0, 1]"));
        }
        if !(t.progress.is_finite() && t.progress >= 0.0 && t.progress <= f64::from(t.quantity)) {
            out.push(Violation::new(format!("{p}/progress"), "progress must lie in [0, quantity]"));
        }
        if t.state == TaskState::Done && t.remaining() > 0.0 {
            out.push(Violation::new(format!("{p}/progress"), "done task has remaining work"));
        }
        for (i, r) in t.reveal_rules.iter().enumerate() {
            if !world.task_types.contains_key(&r.successor_type) {
                out.push(Violation::new(
                    format!("{p}/reveal_rules/{i}/successor_type"),
                    format!("dangling reference to task type {:?}", r.successor_type),
                ));
            }
        }
    }

    for (key, r) in &world.refuges {
        let p = format!("refuges/{key}");
        if key != &r.id {
            out.push(Violation::new(&p, "key does not match id"));
        }
        check_point(&mut out, format!("{p}/location"), &r.location);
        if r.occupied > r.capacity {
            out.push(Violation::new(format!("{p}/occupied"), "occupied exceeds capacity"));
        }
    }

    for (key, c) in &world.casualty_clusters {
        let p = format!("casualty_clusters/{key}");
        if key != &c.id {
            out.push(Violation::new(&p, "key does not match id"));
        }
        check_point(&mut out, format!("{p}/location"), &c.location);
        if c.severity < 1 {
            out.push(Violation::new(format!("{p}/severity"), "severity must be >= 1"));
        }
    }

    out
}

/// Violations of `strategy` that depend on the world it will run against.
pub fn validate_strategy(world: &WorldState, strategy: &Strategy, prefix: &str) -> Vec<Violation> {
    let mut out = strategy.violations(prefix);
    for t in &strategy.threads {
        let p = format!("{prefix}/threads/{}", t.id);
        for tt in &t.goal_task_types {
            if !world.task_types.contains_key(tt) {
                out.push(Violation::new(
                    format!("{p}/goal_task_types"),
                    format!("dangling reference to task type {tt:?}"),
                ));
            }
        }
        for r in &t.goal_regions {
            if !world.regions.contains_key(r) {
                out.push(Violation::new(format!("{p}/goal_regions"), format!("dangling reference to region {r:?}")));
            }
        }
    }
    out
}

/// Order-insensitive digest of the world's content.
pub fn world_digest(world: &WorldState) -> Digest {
    Digest::of(world)
}

/// Per-agent disjointness of `[start, finish)` intervals across the entries.
pub fn agent_intervals_disjoint(entries: &[MacroDecision]) -> bool {
    let mut per_agent: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for e in entries {
        for a in &e.agents {
            per_agent.entry(a).or_default().push((e.start, e.finish));
        }
    }
    per_agent.values_mut().all(|iv| {
        iv.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        iv.windows(2).all(|w| w[1].0 >= w[0].1 - TIME_EPS)
    })
}

/// Exogenous and simulated happenings, tagged by `kind` in serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    TaskStarted {
        task: TaskId,
        agents: BTreeSet<AgentId>,
    },
    /// Checkpoint of work in flight, used when a run stops before quiescence.
    TaskProgress {
        progress: BTreeMap<TaskId, f64>,
        positions: BTreeMap<AgentId, GeoPoint>,
    },
    TaskDone {
        task: TaskId,
        agents: BTreeSet<AgentId>,
        quantity: u32,
    },
    TasksRevealed {
        parent: Option<TaskId>,
        tasks: Vec<MacroTask>,
    },
    AgentReleased {
        agent: AgentId,
        thread: ThreadId,
    },
    AgentDisabled {
        agent: AgentId,
    },
    ReplanTriggered {
        reason: String,
        decision: String,
        assignment: BTreeMap<AgentId, ThreadId>,
        positions: BTreeMap<AgentId, GeoPoint>,
        #[serde(default)]
        progress: BTreeMap<TaskId, f64>,
    },
    AllocationMade {
        flows: Vec<(ClusterId, RefugeId, u32)>,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TaskStarted { .. } => "task_started",
            EventKind::TaskProgress { .. } => "task_progress",
            EventKind::TaskDone { .. } => "task_done",
            EventKind::TasksRevealed { .. } => "tasks_revealed",
            EventKind::AgentReleased { .. } => "agent_released",
            EventKind::AgentDisabled { .. } => "agent_disabled",
            EventKind::ReplanTriggered { .. } => "replan_triggered",
            EventKind::AllocationMade { .. } => "allocation_made",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub at: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn new(at: f64, kind: EventKind) -> Self {
        Self { at, kind }
    }
}
