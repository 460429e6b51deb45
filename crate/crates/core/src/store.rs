//! Scenario and trace documents, and the append-only event log.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::canonical::{to_canonical_bytes, Digest};
use crate::error::{Error, Result};
use crate::model::{validate_strategy, validate_world, world_digest, Event, Strategy, WorldState, TIME_EPS};
use crate::simulator::{self, Trace};

pub const FORMAT_VERSION: i64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub format_version: i64,
    pub world: WorldState,
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ScenarioDocument {
    pub fn new(world: WorldState, strategies: Vec<Strategy>) -> Self {
        Self { format_version: FORMAT_VERSION, world, strategies, metadata: BTreeMap::new() }
    }

    /// Strategy by id, or the first one when `id` is `None`.
    pub fn strategy(&self, id: Option<&str>) -> Option<&Strategy> {
        match id {
            Some(id) => self.strategies.iter().find(|s| s.id == id),
            None => self.strategies.first(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub format_version: i64,
    pub initial_digest: Digest,
    pub events: Vec<Event>,
    pub final_digest: Digest,
    pub replans: u32,
}

impl From<&Trace> for TraceDocument {
    fn from(t: &Trace) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            initial_digest: world_digest(&t.initial),
            events: t.events.clone(),
            final_digest: world_digest(&t.final_world),
            replans: t.replans,
        }
    }
}

#[derive(Deserialize)]
struct Header {
    format_version: i64,
}

fn parse<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse { path, line: inner.line(), column: inner.column(), message: inner.to_string() }
    })?;
    de.end().map_err(|e| Error::Parse {
        path: ".".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    Ok(value)
}

fn check_version(bytes: &[u8]) -> Result<()> {
    // A malformed header is reported by the full parse with a better location.
    if let Ok(h) = serde_json::from_slice::<Header>(bytes) {
        if h.format_version != FORMAT_VERSION {
            return Err(Error::Version(h.format_version));
        }
    }
    Ok(())
}

pub fn load_scenario(bytes: &[u8]) -> Result<ScenarioDocument> {
    check_version(bytes)?;
    let doc: ScenarioDocument = parse(bytes)?;
    let mut v = validate_world(&doc.world);
    for s in &doc.strategies {
        v.extend(validate_strategy(&doc.world, s, &format!("strategies/{}", s.id)));
    }
    if v.is_empty() {
        Ok(doc)
    } else {
        Err(Error::Validation(v))
    }
}

/// Canonical bytes: equal content always gives equal bytes.
pub fn save_snapshot(doc: &ScenarioDocument) -> Vec<u8> {
    let mut doc = doc.clone();
    doc.strategies.sort_by(|a, b| a.id.cmp(&b.id));
    for s in &mut doc.strategies {
        s.threads.sort_by(|a, b| a.id.cmp(&b.id));
    }
    to_canonical_bytes(&doc)
}

pub fn load_trace(bytes: &[u8]) -> Result<TraceDocument> {
    check_version(bytes)?;
    parse(bytes)
}

pub fn save_trace(doc: &TraceDocument) -> Vec<u8> {
    to_canonical_bytes(doc)
}

/// Time-ordered log with a single appender.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn append(&mut self, e: Event) -> Result<()> {
        if let Some(last) = self.events.last() {
            if e.at < last.at - TIME_EPS {
                return Err(Error::Ordering { at: e.at, previous: last.at });
            }
        }
        self.events.push(e);
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events after the first `cursor`.
    pub fn since(&self, cursor: usize) -> &[Event] {
        &self.events[cursor.min(self.events.len())..]
    }
}

/// World reached by applying `log` to `initial`, exactly as the simulator did.
pub fn replay(log: &[Event], initial: &WorldState) -> Result<WorldState> {
    simulator::replay(initial, log)
}

/// Checks a trace against the scenario it was recorded from.
pub fn verify_trace(initial: &WorldState, trace: &TraceDocument) -> Result<WorldState> {
    if world_digest(initial) != trace.initial_digest {
        return Err(Error::Staleness);
    }
    let w = replay(&trace.events, initial)?;
    if world_digest(&w) != trace.final_digest {
        return Err(Error::Contract(format!(
            "replay reached digest {} but the trace records {}",
            world_digest(&w),
            trace.final_digest
        )));
    }
    Ok(w)
}
