//! Routing engine and dispatch simulator for an edge-computing emergency
//! response network.
//!
//! The crate has two layers:
//!
//! * A shortest-path layer: a city modeled as a weighted adjacency matrix
//!   ([`graph::CityGraph`]), a sequential Dijkstra engine and a
//!   worker-partitioned concurrent engine that must agree with it exactly
//!   ([`sssp`]), and a versioned per-server result cache ([`cache`]).
//! * A simulation layer: deterministic discrete-event execution of the
//!   alerting, dispatch, and intervention protocols, with fault injection
//!   (server outages, road blocks, graph updates, message loss) and a
//!   replayable trace log ([`sim`], [`trace`], [`protocol`]).
//!
//! All costs and timestamps are integers in milli-units: user-facing
//! decimals (graph weights, scenario times) are scaled by 1000 at load so
//! that equal path sums compare exactly and runs are reproducible
//! byte-for-byte.

pub mod actions;
pub mod cache;
pub mod graph;
pub mod protocol;
pub mod responder;
pub mod rng;
pub mod sas;
pub mod server;
pub mod sim;
pub mod sssp;
pub mod trace;

#[cfg(feature = "test-oracles")]
pub mod oracles;

pub use cache::{CacheEntry, CacheStats, PathCache};
pub use graph::{CityGraph, Cost, GraphEdit, NodeId, NodeRole, Partition, ServiceType};
pub use protocol::{ActorId, IncidentAlert, IncidentId, InterventionOrder, Message, Severity};
pub use sim::{run_scenario, RunMetrics, RunOptions, Scenario, SimOutcome};
pub use sssp::{FrontierCandidate, RankedService, SsspResult};
pub use trace::{TraceEvent, TraceRecord};

/// Simulation timestamp in milli-units (one displayed time unit = 1000).
pub type SimTime = u64;
