//! Run metrics, accumulated as a pure fold over the trace log. The
//! reported metrics and a recomputation from the written trace are the
//! same function of the same records, which the determinism suite checks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocol::IncidentId;
use crate::trace::{EngineMode, TraceEvent, TraceRecord};
use crate::SimTime;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IncidentMetrics {
    pub detected_at: SimTime,
    /// First order broadcast for the incident.
    pub dispatched_at: Option<SimTime>,
    pub first_arrival_at: Option<SimTime>,
    pub closed_at: Option<SimTime>,
    pub reroutes: u64,
    /// Server attempts that failed before the alert was delivered (ping
    /// timeouts plus transmission failures).
    pub failovers: u64,
    pub exhausted_types: u64,
    pub unserved: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub incidents: BTreeMap<IncidentId, IncidentMetrics>,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub cache_hit_ratio: f64,
    pub engine_runs_parallel: u64,
    pub engine_runs_sequential: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    pub unserved_incidents: u64,
    pub events_processed: u64,
    pub finished_at: SimTime,
}

#[derive(Default)]
pub struct MetricsBuilder {
    metrics: RunMetrics,
}

impl MetricsBuilder {
    pub fn new() -> MetricsBuilder {
        MetricsBuilder::default()
    }

    fn incident(&mut self, id: &IncidentId) -> &mut IncidentMetrics {
        self.metrics.incidents.entry(id.clone()).or_default()
    }

    pub fn observe(&mut self, record: &TraceRecord) {
        let time = record.time;
        match &record.event {
            TraceEvent::Detection { incident, .. } => {
                self.incident(incident).detected_at = time;
            }
            TraceEvent::Dispatched { incident, .. } => {
                let m = self.incident(incident);
                m.dispatched_at.get_or_insert(time);
            }
            TraceEvent::TeamArrived { incident, .. } => {
                let m = self.incident(incident);
                m.first_arrival_at.get_or_insert(time);
            }
            TraceEvent::IncidentClosed { incident, .. } => {
                let m = self.incident(incident);
                m.closed_at.get_or_insert(time);
            }
            TraceEvent::Reroute { incident, .. } => {
                self.incident(incident).reroutes += 1;
            }
            TraceEvent::PingTimeout { incident, .. }
            | TraceEvent::TransmissionFailed { incident, .. } => {
                self.incident(incident).failovers += 1;
            }
            TraceEvent::TypeExhausted { incident, .. } => {
                self.incident(incident).exhausted_types += 1;
            }
            TraceEvent::IncidentUnserved { incident, .. } => {
                self.incident(incident).unserved = true;
            }
            TraceEvent::CacheHit { .. } => self.metrics.cache_hits += 1,
            TraceEvent::CacheMiss { .. } => self.metrics.cache_misses += 1,
            TraceEvent::EngineRun { mode, .. } => match mode {
                EngineMode::Parallel => self.metrics.engine_runs_parallel += 1,
                EngineMode::Sequential => self.metrics.engine_runs_sequential += 1,
            },
            TraceEvent::MessageSent { .. } => self.metrics.messages_sent += 1,
            TraceEvent::MessageDelivered { .. } => self.metrics.messages_delivered += 1,
            TraceEvent::MessageDropped { .. } => self.metrics.messages_dropped += 1,
            TraceEvent::RunFinished { events } => {
                self.metrics.events_processed = *events;
                self.metrics.finished_at = time;
            }
            _ => {}
        }
    }

    pub fn finalize(mut self) -> RunMetrics {
        let lookups = self.metrics.cache_hits + self.metrics.cache_misses;
        self.metrics.cache_hit_ratio = if lookups == 0 {
            0.0
        } else {
            self.metrics.cache_hits as f64 / lookups as f64
        };
        self.metrics.unserved_incidents = self
            .metrics
            .incidents
            .values()
            .filter(|m| m.unserved)
            .count() as u64;
        self.metrics
    }
}

/// Recomputes the metrics from trace records; equal to the metrics
/// reported by the run that wrote them.
pub fn metrics_from_trace(records: &[TraceRecord]) -> RunMetrics {
    let mut builder = MetricsBuilder::new();
    for r in records {
        builder.observe(r);
    }
    builder.finalize()
}
