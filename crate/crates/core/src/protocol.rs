//! Wire records exchanged between surveillance systems, edge servers,
//! intervention services, and guidance teams. In the simulator these are
//! delivered through the network model and serialized verbatim into the
//! trace log.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::{Cost, NodeId, ServiceType};
use crate::SimTime;

/// Identifier of a surveillance-and-alerting unit.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SasId(pub String);

impl fmt::Display for SasId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifier of an edge server.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServerId(pub String);

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Unique incident identifier, assigned by the detecting SAS.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IncidentId(pub String);

impl fmt::Display for IncidentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Hazard category reported by sensors (e.g. "fire").
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hazard(pub String);

impl fmt::Display for Hazard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Incident severity, banded from sensor magnitude against the detection
/// threshold t: [t, 2t) low, [2t, 4t) medium, >= 4t high.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Low,
    Medium,
    High,
}

impl Severity {
    pub fn from_magnitude(magnitude: f64, threshold: f64) -> Option<Severity> {
        if magnitude < threshold {
            None
        } else if magnitude < 2.0 * threshold {
            Some(Severity::Low)
        } else if magnitude < 4.0 * threshold {
            Some(Severity::Medium)
        } else {
            Some(Severity::High)
        }
    }
}

/// Address of any actor on the simulated network.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorId {
    Sas(SasId),
    Server(ServerId),
    Service(NodeId),
    Team(NodeId),
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActorId::Sas(id) => write!(f, "sas:{id}"),
            ActorId::Server(id) => write!(f, "server:{id}"),
            ActorId::Service(n) => write!(f, "service:{n}"),
            ActorId::Team(n) => write!(f, "team:{n}"),
        }
    }
}

/// Undirected edge key, normalized so `a <= b`.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct EdgeKey(pub NodeId, pub NodeId);

impl EdgeKey {
    pub fn new(u: NodeId, v: NodeId) -> EdgeKey {
        if u <= v {
            EdgeKey(u, v)
        } else {
            EdgeKey(v, u)
        }
    }

    pub fn touches(&self, u: NodeId, v: NodeId) -> bool {
        *self == EdgeKey::new(u, v)
    }
}

/// Alert raised by a SAS after detection and deduplication.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct IncidentAlert {
    pub incident_id: IncidentId,
    pub location: NodeId,
    pub hazard: Hazard,
    pub severity: Severity,
    pub required_types: BTreeSet<ServiceType>,
    pub origin: SasId,
    pub timestamp: SimTime,
}

/// How the receiving service should treat an order.
#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKind {
    /// Highest-priority outstanding order: the service must confirm or
    /// decline.
    AwaitConfirmation,
    /// Informational copy sent to lower-ranked services; no reply.
    Standby,
    /// Direct dispatch (resource request fulfillment); the team rolls
    /// immediately, no confirmation round.
    Dispatch,
}

/// Routed dispatch order for one service. The path runs from the service
/// node to the incident location and its cost is the edge-weight sum.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct InterventionOrder {
    pub incident_id: IncidentId,
    pub service: NodeId,
    pub service_type: ServiceType,
    pub path: Vec<NodeId>,
    pub cost: Cost,
    pub rank: u32,
    pub kind: OrderKind,
    pub server: ServerId,
    pub graph_version: u64,
    pub severity: Severity,
}

/// Every message that can cross the simulated network.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Ping {
        incident_id: IncidentId,
        attempt: u32,
    },
    Pong {
        incident_id: IncidentId,
        attempt: u32,
    },
    Alert(IncidentAlert),
    Order(InterventionOrder),
    StandDown {
        incident_id: IncidentId,
        service_type: ServiceType,
    },
    Confirmation {
        incident_id: IncidentId,
        service: NodeId,
    },
    Decline {
        incident_id: IncidentId,
        service: NodeId,
    },
    ResourceRequest {
        incident_id: IncidentId,
        requested_type: ServiceType,
        site: NodeId,
    },
    RerouteRequest {
        incident_id: IncidentId,
        team: NodeId,
        at: NodeId,
        destination: NodeId,
        blocked: BTreeSet<EdgeKey>,
    },
    RouteUpdate {
        incident_id: IncidentId,
        /// `None` when the destination is unreachable around the blocks.
        path: Option<Vec<NodeId>>,
        cost: Option<Cost>,
        graph_version: u64,
    },
    CompletionNotice {
        incident_id: IncidentId,
        service: NodeId,
    },
    CompletionBroadcast {
        incident_id: IncidentId,
    },
}

impl Message {
    /// Short name used in logs and filters.
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Ping { .. } => "ping",
            Message::Pong { .. } => "pong",
            Message::Alert(_) => "alert",
            Message::Order(_) => "order",
            Message::StandDown { .. } => "stand_down",
            Message::Confirmation { .. } => "confirmation",
            Message::Decline { .. } => "decline",
            Message::ResourceRequest { .. } => "resource_request",
            Message::RerouteRequest { .. } => "reroute_request",
            Message::RouteUpdate { .. } => "route_update",
            Message::CompletionNotice { .. } => "completion_notice",
            Message::CompletionBroadcast { .. } => "completion_broadcast",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn severity_bands() {
        let t = 10.0;
        assert_eq!(Severity::from_magnitude(9.9, t), None);
        assert_eq!(Severity::from_magnitude(10.0, t), Some(Severity::Low));
        assert_eq!(Severity::from_magnitude(19.9, t), Some(Severity::Low));
        assert_eq!(Severity::from_magnitude(20.0, t), Some(Severity::Medium));
        assert_eq!(Severity::from_magnitude(39.9, t), Some(Severity::Medium));
        assert_eq!(Severity::from_magnitude(40.0, t), Some(Severity::High));
    }

    #[test]
    fn edge_key_normalizes() {
        assert_eq!(EdgeKey::new(NodeId(4), NodeId(1)), EdgeKey(NodeId(1), NodeId(4)));
        assert!(EdgeKey::new(NodeId(1), NodeId(4)).touches(NodeId(4), NodeId(1)));
    }

    #[test]
    fn message_serialization_is_tagged() {
        let m = Message::Ping {
            incident_id: IncidentId("sas-1:1".into()),
            attempt: 2,
        };
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, r#"{"type":"ping","incident_id":"sas-1:1","attempt":2}"#);
        let back: Message = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
