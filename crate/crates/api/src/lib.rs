//! Request and response bodies of the `/api/v1` HTTP interface.

use serde::{Deserialize, Serialize};

use gicoord_core::advisor::Recommendation;
use gicoord_core::allocation::Allocation;
use gicoord_core::geo::RegionSummary;
use gicoord_core::search::OptimalPlan;
use gicoord_core::simulator::{Outcome, SimConfig};
use gicoord_core::store::{ScenarioDocument, TraceDocument};
use gicoord_core::strategy::ChoiceSet;
use gicoord_core::{Digest, Event, Schedule, Strategy, Violation, WorldState};

pub const PREFIX: &str = "/api/v1";

/// Budget used when a search request names none.
pub const DEFAULT_SEARCH_BUDGET: u64 = 100_000;

/// Longest a `/events` long-poll is held open.
pub const MAX_WAIT_MS: u64 = 30_000;

/// Machine-readable error codes.
pub mod code {
    pub const VERSION_CONFLICT: &str = "version_conflict";
    pub const VALIDATION: &str = "validation";
    pub const INFEASIBLE: &str = "infeasible";
    pub const REPLAN_REQUIRED: &str = "replan_required";
    pub const STALE: &str = "stale";
    pub const NOT_FOUND: &str = "not_found";
    pub const PRECONDITION: &str = "precondition";
    pub const CONFLICT: &str = "conflict";
    pub const BAD_REQUEST: &str = "bad_request";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub threads: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldView {
    pub version: u64,
    pub world_digest: Digest,
    pub world: WorldState,
    pub regions: Vec<RegionSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    pub version: u64,
    pub world_digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRequest {
    pub expected_version: u64,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoicesReply {
    pub version: u64,
    pub world_digest: Digest,
    pub choices: ChoiceSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub expected_version: u64,
    pub decision: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReply {
    pub version: u64,
    pub world_digest: Digest,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    #[serde(default)]
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done,
    Cancelled,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchJob {
    pub id: String,
    pub status: JobStatus,
    /// Session version the search started from.
    pub version: u64,
    /// Digest of the planning world searched.
    pub world_digest: Digest,
    pub budget: u64,
    #[serde(default)]
    pub plan: Option<OptimalPlan>,
    #[serde(default)]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationsReply {
    pub version: u64,
    pub world_digest: Digest,
    pub current_makespan: f64,
    #[serde(with = "gicoord_core::canonical::inf_f64")]
    pub optimal_makespan: f64,
    pub recommendations: Vec<Recommendation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub expected_version: u64,
    pub accepted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReply {
    pub version: u64,
    pub strategy: Strategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocateRequest {
    pub transport_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReply {
    pub version: u64,
    pub world_digest: Digest,
    pub allocation: Allocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub expected_version: u64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReply {
    pub version: u64,
    pub world_digest: Digest,
    pub events: Vec<Event>,
    pub replans: u32,
    pub outcome: Outcome,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub expected_version: u64,
    #[serde(default)]
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReply {
    pub version: u64,
    pub world_digest: Digest,
    pub outcome: Outcome,
    pub trace: TraceDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: u64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsReply {
    pub version: u64,
    /// Cursor to pass as `since` on the next poll.
    pub next: u64,
    pub events: Vec<LoggedEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectRequest {
    pub expected_version: u64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectReply {
    pub version: u64,
    pub world_digest: Digest,
    #[serde(default)]
    pub schedule: Option<Schedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRequest {
    pub expected_version: u64,
    pub document: ScenarioDocument,
}
