//! Structured trace log. Each simulation run appends one record per
//! effective event; a run is fully described by its trace, and
//! [`crate::sim::RunMetrics`] can be recomputed from it exactly. Records
//! serialize to one JSON object per line with stable field order, so runs
//! with the same scenario and seed produce byte-identical logs.

use serde::{Deserialize, Serialize};

use crate::graph::{Cost, NodeId, ServiceType};
use crate::protocol::{
    ActorId, EdgeKey, Hazard, IncidentId, Message, SasId, ServerId, Severity,
};
use crate::SimTime;

/// Which engine produced a shortest-path run.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineMode {
    Sequential,
    Parallel,
}

/// Where a team's current route came from.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteOrigin {
    ServerGiven,
    LocalRecompute,
    ServerRecompute,
}

/// Outcome of an order decision at a service.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    Confirm,
    Decline,
    Standby,
    Dispatch,
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    RunStarted {
        seed: u64,
        cache_enabled: bool,
    },
    RunFinished {
        events: u64,
    },
    SensorBatch {
        sas: SasId,
        location: NodeId,
        readings: usize,
    },
    Detection {
        sas: SasId,
        incident: IncidentId,
        location: NodeId,
        hazard: Hazard,
        severity: Severity,
        magnitude: f64,
    },
    AlertSuppressed {
        sas: SasId,
        location: NodeId,
        hazard: Hazard,
    },
    MessageSent {
        from: ActorId,
        to: ActorId,
        message: Message,
    },
    MessageDelivered {
        from: ActorId,
        to: ActorId,
        message: Message,
    },
    MessageDropped {
        from: ActorId,
        to: ActorId,
        message: Message,
    },
    MessageIgnoredOffline {
        to: ActorId,
        message: Message,
    },
    PingTimeout {
        sas: SasId,
        incident: IncidentId,
        server: ServerId,
        attempt: u32,
    },
    TransmissionFailed {
        sas: SasId,
        incident: IncidentId,
        server: ServerId,
    },
    AlertDelivered {
        server: ServerId,
        incident: IncidentId,
    },
    AlertFailed {
        sas: SasId,
        incident: IncidentId,
        passes: u32,
    },
    AlertRejected {
        server: ServerId,
        incident: IncidentId,
        reason: String,
    },
    CacheHit {
        server: ServerId,
        location: NodeId,
        version: u64,
    },
    CacheMiss {
        server: ServerId,
        location: NodeId,
        version: u64,
    },
    CacheInvalidated {
        server: ServerId,
        evicted: usize,
        version: u64,
    },
    EngineRun {
        actor: ActorId,
        mode: EngineMode,
        source: NodeId,
        version: u64,
    },
    Dispatched {
        server: ServerId,
        incident: IncidentId,
        orders: usize,
    },
    UnreachableType {
        server: ServerId,
        incident: IncidentId,
        service_type: ServiceType,
    },
    AwaitingConfirmation {
        server: ServerId,
        incident: IncidentId,
        service_type: ServiceType,
        service: NodeId,
        rank: u32,
    },
    ConfirmTimeout {
        server: ServerId,
        incident: IncidentId,
        service_type: ServiceType,
        service: NodeId,
    },
    TypeExhausted {
        server: ServerId,
        incident: IncidentId,
        service_type: ServiceType,
    },
    IncidentUnserved {
        server: ServerId,
        incident: IncidentId,
    },
    ProtocolViolation {
        server: ServerId,
        incident: IncidentId,
        service: NodeId,
        detail: String,
    },
    ResourceUnmet {
        server: ServerId,
        incident: IncidentId,
        service_type: ServiceType,
    },
    DuplicateCompletion {
        server: ServerId,
        incident: IncidentId,
        service: NodeId,
    },
    IncidentClosed {
        server: ServerId,
        incident: IncidentId,
    },
    IopsDecision {
        service: NodeId,
        incident: IncidentId,
        decision: DecisionKind,
    },
    TeamStarted {
        team: NodeId,
        incident: IncidentId,
        origin: RouteOrigin,
        path: Vec<NodeId>,
    },
    TeamStep {
        team: NodeId,
        from: NodeId,
        to: NodeId,
    },
    BlockDiscovered {
        team: NodeId,
        edge: EdgeKey,
    },
    TeamStalled {
        team: NodeId,
        at: NodeId,
        edge: EdgeKey,
    },
    Reroute {
        team: NodeId,
        incident: IncidentId,
        origin: RouteOrigin,
        at: NodeId,
        cost: Cost,
    },
    TeamArrived {
        team: NodeId,
        incident: IncidentId,
        at: NodeId,
    },
    TeamAborted {
        team: NodeId,
        incident: IncidentId,
        at: NodeId,
    },
    TeamIdle {
        team: NodeId,
    },
    ServerOutage {
        server: ServerId,
        online: bool,
    },
    EdgeBlocked {
        edge: EdgeKey,
    },
    EdgeUnblocked {
        edge: EdgeKey,
    },
    GraphUpdated {
        version: u64,
    },
}

/// One line of the trace log.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: SimTime,
    pub seq: u64,
    pub event: TraceEvent,
}

impl TraceRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }
}

/// Renders a whole trace as JSON lines (each line one record).
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

/// Parses a JSON-lines trace back into records.
pub fn from_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let records = vec![
            TraceRecord {
                time: 0,
                seq: 0,
                event: TraceEvent::RunStarted { seed: 7, cache_enabled: true },
            },
            TraceRecord {
                time: 1000,
                seq: 1,
                event: TraceEvent::EdgeBlocked {
                    edge: EdgeKey(NodeId(1), NodeId(2)),
                },
            },
        ];
        let text = to_jsonl(&records);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(from_jsonl(&text).unwrap(), records);
    }

    #[test]
    fn serialization_is_stable() {
        let r = TraceRecord {
            time: 5000,
            seq: 3,
            event: TraceEvent::GraphUpdated { version: 2 },
        };
        assert_eq!(
            r.to_json_line(),
            r#"{"time":5000,"seq":3,"event":{"kind":"graph_updated","version":2}}"#
        );
    }
}
