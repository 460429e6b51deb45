use std::collections::BTreeMap;

use axum::http::StatusCode;

use gicoord_api::*;
use gicoord_core::advisor::{critique, refine, AdvisorConfig, Recommendation};
use gicoord_core::allocation::{allocate_refuges, Allocation};
use gicoord_core::geo::aggregate_by_region;
use gicoord_core::scheduler::adapt_schedule;
use gicoord_core::search::{optimal_plan, OptimalPlan};
use gicoord_core::simulator::{advance, inject_event, replan, run_observed, SimConfig};
use gicoord_core::store::{load_scenario, save_snapshot, ScenarioDocument, TraceDocument};
use gicoord_core::strategy::{apply_choice, decision_violations, enumerate_choices, evaluate, planning_world};
use gicoord_core::{
    parse_decision_id, validate_strategy, world_digest, AgentStatus, Error, Event, EventKind, Schedule,
    StrategicDecision, Strategy, TaskState, Violation, WorldState, TIME_EPS,
};

use crate::error::{ApiError, ApiResult};

/// Everything the service knows, at one version.
#[derive(Debug, Clone)]
pub struct Session {
    pub version: u64,
    pub world: WorldState,
    pub strategies: Vec<Strategy>,
    pub metadata: BTreeMap<String, String>,
    pub strategy: Option<Strategy>,
    pub schedule: Option<Schedule>,
    /// Latest finished search, usable while its world digest still matches.
    pub plan: Option<OptimalPlan>,
    pub log: Vec<Event>,
}

fn replan_event(world: &WorldState, reason: &str, decision: &str) -> Event {
    let assignment = world
        .agents
        .values()
        .filter(|a| a.status.holds_thread())
        .filter_map(|a| a.assigned_thread.clone().map(|t| (a.id.clone(), t)))
        .collect();
    let positions = world.agents.values().map(|a| (a.id.clone(), a.location)).collect();
    let progress = world
        .macro_tasks
        .values()
        .filter(|t| t.state == TaskState::InProgress)
        .map(|t| (t.id.clone(), t.progress))
        .collect();
    Event::new(
        world.time,
        EventKind::ReplanTriggered {
            reason: reason.into(),
            decision: decision.into(),
            assignment,
            positions,
            progress,
        },
    )
}

impl Session {
    pub fn new(doc: ScenarioDocument) -> Self {
        Self {
            version: 0,
            strategy: doc.strategies.first().cloned(),
            world: doc.world,
            strategies: doc.strategies,
            metadata: doc.metadata,
            schedule: None,
            plan: None,
            log: Vec::new(),
        }
    }

    pub fn active_strategy(&self) -> ApiResult<&Strategy> {
        self.strategy.as_ref().ok_or_else(|| ApiError::precondition("no active strategy; POST /strategy first"))
    }

    fn active_schedule(&self) -> ApiResult<&Schedule> {
        self.schedule.as_ref().ok_or_else(|| ApiError::precondition("no active schedule; POST /decision first"))
    }

    /// The world choices are weighed against: idle holders back in the pool.
    pub fn planning(&self) -> ApiResult<WorldState> {
        Ok(planning_world(&self.world, self.active_strategy()?))
    }

    fn accepted(&self, version: u64) -> Accepted {
        Accepted { version, world_digest: world_digest(&self.world) }
    }

    pub fn world_view(&self) -> WorldView {
        WorldView {
            version: self.version,
            world_digest: world_digest(&self.world),
            world: self.world.clone(),
            regions: aggregate_by_region(&self.world),
        }
    }

    pub fn document(&self) -> ScenarioDocument {
        let mut strategies = self.strategies.clone();
        if let Some(active) = &self.strategy {
            strategies.retain(|s| s.id != active.id);
            strategies.insert(0, active.clone());
        }
        ScenarioDocument { format_version: 1, world: self.world.clone(), strategies, metadata: self.metadata.clone() }
    }

    pub fn load(&mut self, doc: ScenarioDocument, version: u64) -> ApiResult<Accepted> {
        let doc = load_scenario(&save_snapshot(&doc))?;
        let log = std::mem::take(&mut self.log);
        *self = Session::new(doc);
        self.log = log;
        Ok(self.accepted(version))
    }

    pub fn set_strategy(&mut self, strategy: Strategy, version: u64) -> ApiResult<Accepted> {
        let v = validate_strategy(&self.world, &strategy, "strategy");
        if !v.is_empty() {
            return Err(Error::Validation(v).into());
        }
        // Idle agents on threads that no longer exist go back to the pool.
        for a in self.world.agents.values_mut() {
            let gone = a.assigned_thread.as_deref().is_some_and(|t| strategy.thread(t).is_none());
            if a.status == AgentStatus::Assigned && gone {
                a.status = AgentStatus::Available;
                a.assigned_thread = None;
            }
        }
        self.strategies.retain(|s| s.id != strategy.id);
        self.strategies.push(strategy.clone());
        self.strategy = Some(strategy);
        self.schedule = None;
        self.plan = None;
        Ok(self.accepted(version))
    }

    pub fn choices(&self, cap: usize) -> ApiResult<ChoicesReply> {
        let strategy = self.active_strategy()?;
        let pw = self.planning()?;
        let choices = enumerate_choices(&pw, strategy, cap)?;
        Ok(ChoicesReply { version: self.version, world_digest: world_digest(&pw), choices })
    }

    pub fn decide(&mut self, id: &str, version: u64) -> ApiResult<ScheduleReply> {
        let strategy = self.active_strategy()?.clone();
        let pw = self.planning()?;
        let assignment =
            parse_decision_id(id).ok_or_else(|| ApiError::bad_request(format!("malformed decision id {id}")))?;
        let probe = StrategicDecision::new(&strategy.id, assignment.clone(), 0.0);
        let v = decision_violations(&pw, &strategy, &probe);
        if !v.is_empty() {
            let v = v.into_iter().map(|m| Violation::new("decision", m)).collect();
            return Err(Error::Validation(v).into());
        }
        let (decision, schedule) = evaluate(&pw, &strategy, &assignment)?;
        self.world = apply_choice(&pw, &decision)?;
        self.log.push(replan_event(&self.world, "decision", &decision.id));
        self.schedule = Some(schedule.clone());
        Ok(ScheduleReply { version, world_digest: world_digest(&self.world), schedule })
    }

    pub fn schedule_reply(&self) -> ApiResult<ScheduleReply> {
        let schedule = self.schedule.clone().ok_or_else(|| ApiError::not_found("no active schedule"))?;
        Ok(ScheduleReply { version: self.version, world_digest: world_digest(&self.world), schedule })
    }

    /// Keeps a finished search if it still describes the current world.
    pub fn offer_plan(&mut self, plan: OptimalPlan) {
        if self.planning().is_ok_and(|pw| world_digest(&pw) == plan.world_digest) {
            self.plan = Some(plan);
        }
    }

    fn advice(&self) -> ApiResult<(Vec<Recommendation>, f64, f64)> {
        let strategy = self.active_strategy()?;
        let schedule = self.active_schedule()?;
        let pw = self.planning()?;
        let plan = match &self.plan {
            Some(p) if p.world_digest == world_digest(&pw) => p.clone(),
            _ => optimal_plan(&pw, strategy, DEFAULT_SEARCH_BUDGET)?,
        };
        let current = if schedule.world_digest == world_digest(&self.world) {
            schedule.clone()
        } else {
            adapt_schedule(&self.world, strategy, schedule)?
        };
        let recs = critique(&pw, strategy, &current, &plan, AdvisorConfig::default())?;
        Ok((recs, current.makespan, plan.makespan))
    }

    pub fn recommendations(&self) -> ApiResult<RecommendationsReply> {
        let (recommendations, current_makespan, optimal_makespan) = self.advice()?;
        Ok(RecommendationsReply {
            version: self.version,
            world_digest: world_digest(&self.world),
            current_makespan,
            optimal_makespan,
            recommendations,
        })
    }

    pub fn refine(&mut self, accepted: &[String], version: u64) -> ApiResult<StrategyReply> {
        let (recs, _, _) = self.advice()?;
        let mut chosen = Vec::new();
        for id in accepted {
            let r = recs
                .iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| ApiError::not_found(format!("no recommendation {id}")))?;
            chosen.push(r.clone());
        }
        let strategy = refine(self.active_strategy()?, &chosen)?;
        self.set_strategy(strategy.clone(), version)?;
        Ok(StrategyReply { version, strategy })
    }

    pub fn allocate(&self, speed: f64) -> ApiResult<AllocationReply> {
        let allocation = allocate_refuges(&self.world, speed, self.strategy.as_ref())?;
        Ok(AllocationReply { version: self.version, world_digest: world_digest(&self.world), allocation })
    }

    pub fn log_allocation(&mut self, a: &Allocation) {
        let flows = a.flows.iter().map(|f| (f.cluster.clone(), f.refuge.clone(), f.persons)).collect();
        self.log.push(Event::new(self.world.time, EventKind::AllocationMade { flows }));
    }

    pub fn step(&mut self, dt: f64, version: u64) -> ApiResult<StepReply> {
        let strategy = self.active_strategy()?;
        let a = advance(&self.world, strategy, self.active_schedule()?, dt)?;
        self.world = a.world;
        self.log.extend(a.events.iter().cloned());
        self.schedule = Some(a.schedule.clone());
        Ok(StepReply {
            version,
            world_digest: world_digest(&self.world),
            events: a.events,
            replans: a.replans,
            outcome: a.outcome,
            schedule: a.schedule,
        })
    }

    pub fn run(&mut self, config: &SimConfig, version: u64) -> ApiResult<RunReply> {
        let strategy = self.active_strategy()?;
        let mut last = None;
        let trace = run_observed(&self.world, strategy, config, |p| last = Some(p.schedule.clone()))?;
        self.world = trace.final_world.clone();
        self.log.extend(trace.events.iter().cloned());
        self.schedule = last;
        Ok(RunReply {
            version,
            world_digest: world_digest(&self.world),
            outcome: trace.outcome,
            trace: TraceDocument::from(&trace),
        })
    }

    pub fn inject(&mut self, e: Event, version: u64) -> ApiResult<InjectReply> {
        if e.at < self.world.time - TIME_EPS {
            return Err(Error::Ordering { at: e.at, previous: self.world.time }.into());
        }
        let mut world = self.world.clone();
        let mut schedule = self.schedule.clone();
        let mut events = Vec::new();
        // Catch the world up to the event first.
        if let (Some(strategy), Some(s)) = (&self.strategy, &schedule) {
            if e.at > world.time + TIME_EPS {
                let a = advance(&world, strategy, s, e.at - world.time)?;
                world = a.world;
                events.extend(a.events);
                schedule = Some(a.schedule);
            }
        }
        world = inject_event(&world, &e)?;
        events.push(e);
        if let (Some(strategy), Some(s)) = (&self.strategy, &schedule) {
            let (next, _, fresh) = replan(&world, strategy, Some(s)).map_err(|err| match err {
                Error::Infeasible { .. } | Error::ReplanRequired { .. } => {
                    let mut out = ApiError::from(err);
                    out.status = StatusCode::UNPROCESSABLE_ENTITY;
                    out
                }
                other => other.into(),
            })?;
            world = next;
            events.push(replan_event(&world, "injected", &fresh.decision));
            schedule = Some(fresh);
        }
        self.world = world;
        self.schedule = schedule.clone();
        self.log.extend(events);
        Ok(InjectReply { version, world_digest: world_digest(&self.world), schedule })
    }

    pub fn events_since(&self, since: u64) -> EventsReply {
        let from = (since as usize).min(self.log.len());
        let events = self.log[from..]
            .iter()
            .enumerate()
            .map(|(i, e)| LoggedEvent { seq: (from + i) as u64, event: e.clone() })
            .collect();
        EventsReply { version: self.version, next: self.log.len() as u64, events }
    }
}
