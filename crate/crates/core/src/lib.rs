//! Coordination engine for disaster-response agent teams.

pub mod advisor;
pub mod allocation;
pub mod canonical;
pub mod error;
pub mod geo;
pub mod model;
pub mod scheduler;
pub mod search;
pub mod simulator;
pub mod store;
pub mod strategy;

pub use canonical::Digest;
pub use error::{Error, Result};
pub use model::*;
