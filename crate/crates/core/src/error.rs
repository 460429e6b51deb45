use thiserror::Error;

use crate::model::{ThreadId, Violation};

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {}", summarize(.0))]
    Validation(Vec<Violation>),

    #[error("infeasible strategy: threads {threads:?} cannot be staffed")]
    Infeasible { threads: Vec<ThreadId> },

    #[error("replan required: threads {threads:?} no longer satisfy their bounds")]
    ReplanRequired { threads: Vec<ThreadId> },

    #[error("stale decision: {0}")]
    StaleDecision(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("instance too large for exhaustive search: {0}")]
    Size(String),

    #[error("inputs were computed from different world snapshots")]
    Staleness,

    #[error("conflicting recommendations {0} and {1}")]
    Conflict(String, String),

    #[error("parse error at {path} (line {line}, column {column}): {message}")]
    Parse { path: String, line: usize, column: usize, message: String },

    #[error("unsupported format_version {0}")]
    Version(i64),

    #[error("event at t={at} precedes previous event at t={previous}")]
    Ordering { at: f64, previous: f64 },

    #[error("simulation livelock at t={0}: world repeated without time progress")]
    Livelock(f64),
}

fn summarize(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
