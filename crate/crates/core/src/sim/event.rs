//! Discrete-event queue entries, popped in (time, sequence) order.

use crate::actions::TimeoutKind;
use crate::graph::{GraphEdit, NodeId};
use crate::protocol::{ActorId, EdgeKey, Message};
use crate::SimTime;

#[derive(Debug)]
pub enum EventPayload {
    /// Sensor readings for `scenario.sas[sas].batches[batch]`.
    SensorBatch { sas: usize, batch: usize },
    MessageDelivery {
        from: ActorId,
        to: ActorId,
        message: Message,
    },
    Timeout {
        actor: ActorId,
        kind: TimeoutKind,
    },
    ServerOutage {
        server: usize,
        online: bool,
    },
    EdgeBlock {
        edge: EdgeKey,
    },
    EdgeUnblock {
        edge: EdgeKey,
    },
    GraphUpdate {
        edits: Vec<GraphEdit>,
    },
    TeamTick {
        team: NodeId,
        token: u64,
    },
}

#[derive(Debug)]
pub struct QueuedEvent {
    pub time: SimTime,
    /// Unique, monotone; breaks ties among same-time events by scheduling
    /// order.
    pub seq: u64,
    pub payload: EventPayload,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl Eq for QueuedEvent {}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}
