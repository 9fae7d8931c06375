//! Siriette: a plan-native columnar analytical engine.
//!
//! Queries arrive as structured plan documents (docs/plan_format.md), get
//! type-checked against the catalog, split into exchange-separated fragments,
//! and run through a push-based pipeline executor over a swappable kernel
//! backend. A two-region buffer manager accounts for cached base tables and
//! processing intermediates; resource exhaustion and unsupported features
//! reroute the query to a row-at-a-time reference executor.

pub mod buffer;
pub mod cluster;
pub mod columnar;
pub mod config;
pub mod datagen;
pub mod engine;
pub mod error;
pub mod exec;
pub mod exchange;
pub mod kernels;
pub mod oracle;
pub mod plan;
pub mod types;

pub use config::EngineConfig;
pub use engine::{Engine, EngineUsed, RunOutcome};
pub use error::{Error, Result};
