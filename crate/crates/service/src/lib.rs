//! HTTP hosting for the planner: one binary, five roles.
//!
//! * `ingest` serves the infrastructure store.
//! * `graph` builds and serves the weighted graph.
//! * `pathfinder` answers A* queries over a cached graph.
//! * `solver` plans missions, fanning path queries out to pathfinder replicas.
//! * `monolith` does all of the above in one process with sequential,
//!   in-process path queries.

pub mod balance;
pub mod cache;
pub mod client;
pub mod config;
pub mod conformance;
pub mod error;
pub mod metrics;
pub mod roles;
pub mod server;

pub use config::{ConfigError, GraphSource, Role, ServiceConfig, Upstreams};
pub use server::{build_app, run_service, start_service, RunningService, ServiceError};
