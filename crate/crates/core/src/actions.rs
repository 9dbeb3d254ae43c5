//! Effects returned by actor state machines. Handlers never touch the
//! event queue or the network directly; they return a list of actions and
//! the simulation engine performs them, which keeps every actor a pure,
//! unit-testable state machine.

use crate::graph::ServiceType;
use crate::protocol::{ActorId, IncidentAlert, IncidentId, InterventionOrder, Message, ServerId};
use crate::trace::TraceEvent;

/// Pending-wait identifiers carried by timeout events. Handlers compare
/// them against their current state, so a timeout that was superseded
/// (answered ping, advanced cursor, rescheduled tick) is simply stale.
#[derive(Clone, Debug, PartialEq)]
pub enum TimeoutKind {
    /// SAS is waiting for a pong for this delivery attempt.
    SasPing { incident: IncidentId, attempt: u32 },
    /// Server is waiting for a confirmation from the service at `cursor`
    /// of the ranked list for this (incident, type).
    ConfirmDeadline {
        incident: IncidentId,
        service_type: ServiceType,
        cursor: usize,
    },
    /// Server finished an engine run after its configured compute latency;
    /// release the staged orders.
    DispatchReady { incident: IncidentId },
    /// Service decision latency elapsed.
    IopsDecision { token: u64 },
    /// Team has been on site for the service duration.
    CompletionDue { token: u64 },
    /// No acknowledgement of a completion notice yet; retransmit.
    AckRetry { token: u64 },
    /// No route update for a reroute request yet; retransmit.
    RerouteRetry { token: u64 },
}

/// One effect requested by an actor. The acting actor is implicit (the
/// engine knows whose handler it called); `Send` sources are filled in by
/// the engine.
#[derive(Debug)]
pub enum Action {
    /// Send a message through the network model.
    Send { to: ActorId, message: Message },
    /// Schedule a timeout addressed back to the acting actor.
    Timeout { after: u64, kind: TimeoutKind },
    /// Append a trace record.
    Log(TraceEvent),
    /// SAS alert transmission with sender-visible outcome: on a link-layer
    /// drop the engine calls the SAS back so it can fail over.
    TransmitAlert {
        server: ServerId,
        alert: IncidentAlert,
    },
    /// Hand an order to the acting service's intervention team.
    StartTeam { order: InterventionOrder },
    /// Schedule a movement tick for the acting team.
    ScheduleTick { after: u64, token: u64 },
}
