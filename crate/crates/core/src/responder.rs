//! Intervention-service side: order processing (confirm / decline /
//! standby) and team guidance along the dispatched route.
//!
//! Teams advance edge by edge and learn that a road is blocked only when
//! it is the next hop. A blocked hop triggers, in order of capability:
//! onboard recomputation on the team's graph snapshot minus every block it
//! has observed, a reroute request to the coordinating server when it is
//! reachable, or a stall-and-retry.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use crate::actions::{Action, TimeoutKind};
use crate::graph::{CityGraph, NodeId, ServiceType};
use crate::protocol::{
    ActorId, EdgeKey, IncidentId, InterventionOrder, Message, OrderKind, ServerId, Severity,
};
use crate::sssp::{dijkstra_sequential, extract_path, path_cost};
use crate::trace::{DecisionKind, EngineMode, RouteOrigin, TraceEvent};
use crate::rng::DetRng;
use crate::SimTime;

/// Acceptance probability per severity band.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AcceptProbability {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl AcceptProbability {
    pub fn uniform(p: f64) -> AcceptProbability {
        AcceptProbability {
            low: p,
            medium: p,
            high: p,
        }
    }

    pub fn for_severity(&self, severity: Severity) -> f64 {
        match severity {
            Severity::Low => self.low,
            Severity::Medium => self.medium,
            Severity::High => self.high,
        }
    }
}

impl Default for AcceptProbability {
    fn default() -> Self {
        AcceptProbability::uniform(1.0)
    }
}

/// Behaviour knobs for one service and its team.
#[derive(Clone, Debug)]
pub struct ServicePolicy {
    pub service: NodeId,
    pub accept: AcceptProbability,
    /// Team can rerun the shortest-path engine onboard.
    pub local_compute: bool,
    pub decision_latency: u64,
    /// Support types requested from the server once the team is on site.
    pub request_on_arrival: Vec<ServiceType>,
}

/// Pure decision rule: standby copies are never answered, direct
/// dispatches always roll, and an awaited order is declined by a busy
/// team or by the acceptance roll.
pub fn iops_decide(
    policy: &ServicePolicy,
    order: &InterventionOrder,
    team_busy: bool,
    roll: f64,
) -> DecisionKind {
    match order.kind {
        OrderKind::Standby => DecisionKind::Standby,
        OrderKind::Dispatch => DecisionKind::Dispatch,
        OrderKind::AwaitConfirmation => {
            if team_busy {
                DecisionKind::Decline
            } else if roll < policy.accept.for_severity(order.severity) {
                DecisionKind::Confirm
            } else {
                DecisionKind::Decline
            }
        }
    }
}

/// Order-processing actor installed at a service.
pub struct IopsActor {
    pub policy: ServicePolicy,
    rng: DetRng,
    token: u64,
    pending: Option<(InterventionOrder, u64)>,
}

impl IopsActor {
    pub fn new(policy: ServicePolicy, rng: DetRng) -> IopsActor {
        IopsActor {
            policy,
            rng,
            token: 0,
            pending: None,
        }
    }

    pub fn on_order(&mut self, order: InterventionOrder, _now: SimTime) -> Vec<Action> {
        match order.kind {
            OrderKind::Standby => {
                vec![Action::Log(TraceEvent::IopsDecision {
                    service: self.policy.service,
                    incident: order.incident_id,
                    decision: DecisionKind::Standby,
                })]
            }
            OrderKind::Dispatch => {
                vec![
                    Action::Log(TraceEvent::IopsDecision {
                        service: self.policy.service,
                        incident: order.incident_id.clone(),
                        decision: DecisionKind::Dispatch,
                    }),
                    Action::StartTeam { order },
                ]
            }
            OrderKind::AwaitConfirmation => {
                self.token += 1;
                let token = self.token;
                self.pending = Some((order, token));
                vec![Action::Timeout {
                    after: self.policy.decision_latency,
                    kind: TimeoutKind::IopsDecision { token },
                }]
            }
        }
    }

    pub fn on_decision_due(&mut self, token: u64, team_busy: bool, _now: SimTime) -> Vec<Action> {
        match &self.pending {
            Some((_, t)) if *t == token => {}
            _ => return Vec::new(),
        }
        let (order, _) = self.pending.take().unwrap();
        let roll = self.rng.unit_f64();
        let decision = iops_decide(&self.policy, &order, team_busy, roll);
        let mut actions = vec![Action::Log(TraceEvent::IopsDecision {
            service: self.policy.service,
            incident: order.incident_id.clone(),
            decision,
        })];
        match decision {
            DecisionKind::Confirm => {
                actions.push(Action::Send {
                    to: ActorId::Server(order.server.clone()),
                    message: Message::Confirmation {
                        incident_id: order.incident_id.clone(),
                        service: self.policy.service,
                    },
                });
                actions.push(Action::StartTeam { order });
            }
            DecisionKind::Decline => {
                actions.push(Action::Send {
                    to: ActorId::Server(order.server.clone()),
                    message: Message::Decline {
                        incident_id: order.incident_id.clone(),
                        service: self.policy.service,
                    },
                });
            }
            DecisionKind::Standby | DecisionKind::Dispatch => unreachable!("awaited order"),
        }
        actions
    }

    pub fn on_stand_down(&mut self, incident: &IncidentId) -> Vec<Action> {
        if let Some((order, _)) = &self.pending {
            if &order.incident_id == incident {
                self.pending = None;
            }
        }
        Vec::new()
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum TeamStatus {
    Idle,
    EnRoute,
    Rerouting,
    OnSite,
    Returning,
}

/// Timing constants shared by all teams (from scenario limits).
#[derive(Copy, Clone, Debug)]
pub struct TeamTimings {
    pub service_duration: u64,
    pub ack_timeout: u64,
    /// Delay before a stalled team re-checks the road ahead.
    pub stall_retry: u64,
}

/// Guidance actor for one service's intervention team.
pub struct TeamActor {
    pub service: NodeId,
    local_compute: bool,
    request_on_arrival: Vec<ServiceType>,
    timings: TeamTimings,

    pub status: TeamStatus,
    pub incident: Option<IncidentId>,
    server: Option<ServerId>,
    destination: Option<NodeId>,
    /// Remaining route; the head is the current node while en route.
    remaining: VecDeque<NodeId>,
    in_transit_to: Option<NodeId>,
    pub route_origin: RouteOrigin,
    snapshot: Option<Arc<CityGraph>>,
    known_blocked: BTreeSet<EdgeKey>,

    tick_token: u64,
    completion_token: u64,
    ack_token: u64,
    reroute_token: u64,
}

impl TeamActor {
    pub fn new(policy: &ServicePolicy, timings: TeamTimings) -> TeamActor {
        TeamActor {
            service: policy.service,
            local_compute: policy.local_compute,
            request_on_arrival: policy.request_on_arrival.clone(),
            timings,
            status: TeamStatus::Idle,
            incident: None,
            server: None,
            destination: None,
            remaining: VecDeque::new(),
            in_transit_to: None,
            route_origin: RouteOrigin::ServerGiven,
            snapshot: None,
            known_blocked: BTreeSet::new(),
            tick_token: 0,
            completion_token: 0,
            ack_token: 0,
            reroute_token: 0,
        }
    }

    pub fn current_node(&self) -> Option<NodeId> {
        self.remaining.front().copied()
    }

    pub fn busy(&self) -> bool {
        self.status != TeamStatus::Idle
    }

    fn reset_idle(&mut self) {
        self.status = TeamStatus::Idle;
        self.incident = None;
        self.server = None;
        self.destination = None;
        self.remaining.clear();
        self.in_transit_to = None;
        self.snapshot = None;
        self.known_blocked.clear();
    }

    fn schedule_tick(&mut self, after: u64) -> Action {
        self.tick_token += 1;
        Action::ScheduleTick {
            after,
            token: self.tick_token,
        }
    }

    /// Accepts a dispatch order and starts following its route.
    pub fn itgs_start(
        &mut self,
        order: &InterventionOrder,
        snapshot: Arc<CityGraph>,
        _now: SimTime,
    ) -> Result<Vec<Action>, String> {
        if order.service != self.service {
            return Err(format!(
                "order for service {} delivered to team {}",
                order.service, self.service
            ));
        }
        if self.busy() {
            return Err("team already deployed".into());
        }
        if order.path.first() != Some(&self.service) {
            return Err("route does not start at the service node".into());
        }
        if path_cost(&snapshot, &order.path).is_none() {
            return Err("route contains a non-edge".into());
        }
        self.status = TeamStatus::EnRoute;
        self.incident = Some(order.incident_id.clone());
        self.server = Some(order.server.clone());
        self.destination = order.path.last().copied();
        self.remaining = order.path.iter().copied().collect();
        self.in_transit_to = None;
        self.route_origin = RouteOrigin::ServerGiven;
        self.snapshot = Some(snapshot);
        self.known_blocked.clear();
        Ok(vec![
            Action::Log(TraceEvent::TeamStarted {
                team: self.service,
                incident: order.incident_id.clone(),
                origin: RouteOrigin::ServerGiven,
                path: order.path.clone(),
            }),
            self.schedule_tick(0),
        ])
    }

    /// Movement tick: finish any in-flight edge traversal, then either
    /// arrive, depart on the next hop, or handle a discovered block.
    pub fn itgs_step(
        &mut self,
        token: u64,
        world: &CityGraph,
        world_blocked: &BTreeSet<EdgeKey>,
        server_online: bool,
        _now: SimTime,
    ) -> Vec<Action> {
        if token != self.tick_token || self.status != TeamStatus::EnRoute {
            return Vec::new();
        }
        let mut actions = Vec::new();
        if let Some(next) = self.in_transit_to.take() {
            let from = self.remaining.pop_front().expect("head exists in transit");
            debug_assert_eq!(self.remaining.front(), Some(&next));
            actions.push(Action::Log(TraceEvent::TeamStep {
                team: self.service,
                from,
                to: next,
            }));
        }
        let current = *self.remaining.front().expect("route never empty while en route");
        if Some(current) == self.destination {
            return self.arrive(current, actions);
        }

        loop {
            let next = *self.remaining.get(1).expect("non-destination has a next hop");
            let edge = EdgeKey::new(current, next);
            // A weight edit can also remove the road under a planned hop;
            // treat that exactly like an observed obstruction.
            let passable =
                !world_blocked.contains(&edge) && world.weight(current, next).is_some();
            if passable {
                let travel = world.weight(current, next).expect("checked").0;
                self.in_transit_to = Some(next);
                actions.push(self.schedule_tick(travel));
                return actions;
            }
            if self.known_blocked.insert(edge) {
                actions.push(Action::Log(TraceEvent::BlockDiscovered {
                    team: self.service,
                    edge,
                }));
            }
            if self.local_compute {
                let snapshot = self.snapshot.as_ref().expect("deployed team has a snapshot");
                let pruned =
                    snapshot.with_edges_removed(self.known_blocked.iter().map(|e| (e.0, e.1)));
                let result =
                    dijkstra_sequential(&pruned, current).expect("current node is in the graph");
                actions.push(Action::Log(TraceEvent::EngineRun {
                    actor: ActorId::Team(self.service),
                    mode: EngineMode::Sequential,
                    source: current,
                    version: pruned.version(),
                }));
                let destination = self.destination.expect("deployed team has a destination");
                match extract_path(&result, destination).expect("destination validated") {
                    Some(path) => {
                        let incident = self.incident.clone().expect("deployed team has an incident");
                        actions.push(Action::Log(TraceEvent::Reroute {
                            team: self.service,
                            incident,
                            origin: RouteOrigin::LocalRecompute,
                            at: current,
                            cost: result.distance(destination),
                        }));
                        self.route_origin = RouteOrigin::LocalRecompute;
                        self.remaining = path.into_iter().collect();
                        continue; // the first hop of the new route may be blocked too
                    }
                    None => return self.abort(current, actions),
                }
            } else if server_online {
                let incident = self.incident.clone().expect("deployed team has an incident");
                let destination = self.destination.expect("deployed team has a destination");
                self.status = TeamStatus::Rerouting;
                self.reroute_token += 1;
                actions.push(Action::Send {
                    to: ActorId::Server(self.server.clone().expect("deployed team has a server")),
                    message: Message::RerouteRequest {
                        incident_id: incident,
                        team: self.service,
                        at: current,
                        destination,
                        blocked: self.known_blocked.clone(),
                    },
                });
                actions.push(Action::Timeout {
                    after: self.timings.ack_timeout,
                    kind: TimeoutKind::RerouteRetry {
                        token: self.reroute_token,
                    },
                });
                return actions;
            } else {
                actions.push(Action::Log(TraceEvent::TeamStalled {
                    team: self.service,
                    at: current,
                    edge,
                }));
                let retry = self.timings.stall_retry;
                actions.push(self.schedule_tick(retry));
                return actions;
            }
        }
    }

    fn arrive(&mut self, at: NodeId, mut actions: Vec<Action>) -> Vec<Action> {
        self.status = TeamStatus::OnSite;
        let incident = self.incident.clone().expect("deployed team has an incident");
        actions.push(Action::Log(TraceEvent::TeamArrived {
            team: self.service,
            incident: incident.clone(),
            at,
        }));
        self.completion_token += 1;
        actions.push(Action::Timeout {
            after: self.timings.service_duration,
            kind: TimeoutKind::CompletionDue {
                token: self.completion_token,
            },
        });
        let server = self.server.clone().expect("deployed team has a server");
        for requested in &self.request_on_arrival {
            actions.push(Action::Send {
                to: ActorId::Server(server.clone()),
                message: Message::ResourceRequest {
                    incident_id: incident.clone(),
                    requested_type: requested.clone(),
                    site: at,
                },
            });
        }
        actions
    }

    fn abort(&mut self, at: NodeId, mut actions: Vec<Action>) -> Vec<Action> {
        let incident = self.incident.clone().expect("deployed team has an incident");
        actions.push(Action::Log(TraceEvent::TeamAborted {
            team: self.service,
            incident,
            at,
        }));
        self.reset_idle();
        actions
    }

    /// Server's answer to a reroute request.
    pub fn on_route_update(
        &mut self,
        incident: &IncidentId,
        path: Option<Vec<NodeId>>,
        cost: Option<crate::graph::Cost>,
        _now: SimTime,
    ) -> Vec<Action> {
        if self.status != TeamStatus::Rerouting || self.incident.as_ref() != Some(incident) {
            return Vec::new();
        }
        self.reroute_token += 1; // cancel the retry
        let current = self.current_node().expect("rerouting team has a position");
        match path {
            Some(p) if p.first() == Some(&current) => {
                let mut actions = vec![Action::Log(TraceEvent::Reroute {
                    team: self.service,
                    incident: incident.clone(),
                    origin: RouteOrigin::ServerRecompute,
                    at: current,
                    cost: cost.unwrap_or(crate::graph::Cost::INFINITE),
                })];
                self.route_origin = RouteOrigin::ServerRecompute;
                self.remaining = p.into_iter().collect();
                self.status = TeamStatus::EnRoute;
                actions.push(self.schedule_tick(0));
                actions
            }
            Some(_) => {
                // Route does not start where we are; fall back to a retry.
                self.status = TeamStatus::EnRoute;
                vec![self.schedule_tick(self.timings.stall_retry)]
            }
            None => self.abort(current, Vec::new()),
        }
    }

    /// Reroute answer never came; go back en route, which re-triggers the
    /// block handling (and a fresh request if the server is reachable).
    pub fn on_reroute_retry(&mut self, token: u64) -> Vec<Action> {
        if self.status != TeamStatus::Rerouting || token != self.reroute_token {
            return Vec::new();
        }
        self.status = TeamStatus::EnRoute;
        vec![self.schedule_tick(0)]
    }

    /// Service duration elapsed on site: report completion upstream. The
    /// notice is retransmitted until the completion broadcast arrives.
    pub fn report_completion(&mut self, token: u64) -> Vec<Action> {
        if self.status != TeamStatus::OnSite || token != self.completion_token {
            return Vec::new();
        }
        self.status = TeamStatus::Returning;
        self.ack_token += 1;
        self.completion_actions()
    }

    pub fn on_ack_retry(&mut self, token: u64) -> Vec<Action> {
        if self.status != TeamStatus::Returning || token != self.ack_token {
            return Vec::new();
        }
        self.completion_actions()
    }

    fn completion_actions(&self) -> Vec<Action> {
        vec![
            Action::Send {
                to: ActorId::Server(self.server.clone().expect("deployed team has a server")),
                message: Message::CompletionNotice {
                    incident_id: self.incident.clone().expect("deployed team has an incident"),
                    service: self.service,
                },
            },
            Action::Timeout {
                after: self.timings.ack_timeout,
                kind: TimeoutKind::AckRetry {
                    token: self.ack_token,
                },
            },
        ]
    }

    pub fn on_completion_broadcast(&mut self, incident: &IncidentId) -> Vec<Action> {
        if self.incident.as_ref() != Some(incident) || self.status != TeamStatus::Returning {
            return Vec::new();
        }
        self.reset_idle();
        vec![Action::Log(TraceEvent::TeamIdle { team: self.service })]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Severity;

    fn order(kind: OrderKind, path: Vec<u32>, cost: u64) -> InterventionOrder {
        InterventionOrder {
            incident_id: IncidentId("i1".into()),
            service: NodeId(path[0]),
            service_type: ServiceType::new("fire").unwrap(),
            path: path.into_iter().map(NodeId).collect(),
            cost: crate::graph::Cost(cost),
            rank: 1,
            kind,
            server: ServerId("edge-a".into()),
            graph_version: 0,
            severity: Severity::High,
        }
    }

    fn policy(service: u32, accept: f64, local: bool) -> ServicePolicy {
        ServicePolicy {
            service: NodeId(service),
            accept: AcceptProbability::uniform(accept),
            local_compute: local,
            decision_latency: 1000,
            request_on_arrival: Vec::new(),
        }
    }

    #[test]
    fn iops_decide_rules() {
        let p = policy(3, 1.0, false);
        let awaited = order(OrderKind::AwaitConfirmation, vec![3, 0], 3000);
        assert_eq!(iops_decide(&p, &awaited, false, 0.99), DecisionKind::Confirm);
        assert_eq!(iops_decide(&p, &awaited, true, 0.0), DecisionKind::Decline);
        let never = policy(3, 0.0, false);
        assert_eq!(iops_decide(&never, &awaited, false, 0.0), DecisionKind::Decline);
        let standby = order(OrderKind::Standby, vec![3, 0], 3000);
        assert_eq!(iops_decide(&p, &standby, false, 0.0), DecisionKind::Standby);
    }

    #[test]
    fn iops_actor_confirms_and_starts_team() {
        let mut iops = IopsActor::new(policy(3, 1.0, false), DetRng::new(1));
        let actions = iops.on_order(order(OrderKind::AwaitConfirmation, vec![3, 0], 3000), 0);
        assert!(matches!(
            actions[0],
            Action::Timeout { after: 1000, kind: TimeoutKind::IopsDecision { token: 1 } }
        ));
        let actions = iops.on_decision_due(1, false, 1000);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Send { message: Message::Confirmation { .. }, .. })));
        assert!(actions.iter().any(|a| matches!(a, Action::StartTeam { .. })));
        // Stale token is a no-op.
        assert!(iops.on_decision_due(1, false, 1200).is_empty());
    }

    #[test]
    fn iops_actor_standby_never_replies() {
        let mut iops = IopsActor::new(policy(3, 1.0, false), DetRng::new(1));
        let actions = iops.on_order(order(OrderKind::Standby, vec![3, 0], 3000), 0);
        assert!(!actions.iter().any(|a| matches!(a, Action::Send { .. })));
        assert!(!actions.iter().any(|a| matches!(a, Action::Timeout { .. })));
    }

    #[test]
    fn stand_down_cancels_pending_decision() {
        let mut iops = IopsActor::new(policy(3, 1.0, false), DetRng::new(1));
        iops.on_order(order(OrderKind::AwaitConfirmation, vec![3, 0], 3000), 0);
        iops.on_stand_down(&IncidentId("i1".into()));
        assert!(iops.on_decision_due(1, false, 1000).is_empty());
    }

    fn team_graph() -> Arc<CityGraph> {
        // 3 -- 1 -- 0 with a detour 1 - 2 - 0.
        Arc::new(
            CityGraph::from_text(
                "graph 4\n\
                 node 0 surveillance\n\
                 node 3 service:fire\n\
                 edge 3 1 2\n\
                 edge 1 0 3\n\
                 edge 1 2 1\n\
                 edge 2 0 4\n",
            )
            .unwrap(),
        )
    }

    fn timings() -> TeamTimings {
        TeamTimings {
            service_duration: 5000,
            ack_timeout: 20_000,
            stall_retry: 1000,
        }
    }

    fn no_blocks() -> BTreeSet<EdgeKey> {
        BTreeSet::new()
    }

    #[test]
    fn team_travels_in_exact_path_time() {
        let g = team_graph();
        let mut team = TeamActor::new(&policy(3, 1.0, false), timings());
        let o = order(OrderKind::AwaitConfirmation, vec![3, 1, 0], 5000);
        let actions = team.itgs_start(&o, g.clone(), 0).unwrap();
        assert!(matches!(actions[1], Action::ScheduleTick { after: 0, token: 1 }));

        // Tick 1 at t=0: depart 3 -> 1, travel 2000.
        let actions = team.itgs_step(1, &g, &no_blocks(), true, 0);
        assert!(matches!(actions[0], Action::ScheduleTick { after: 2000, token: 2 }));
        // Tick 2 at t=2000: arrive at 1, depart 1 -> 0, travel 3000.
        let actions = team.itgs_step(2, &g, &no_blocks(), true, 2000);
        assert!(actions.iter().any(|a| matches!(
            a,
            Action::Log(TraceEvent::TeamStep { from, to, .. })
                if *from == NodeId(3) && *to == NodeId(1)
        )));
        assert!(matches!(actions.last().unwrap(), Action::ScheduleTick { after: 3000, token: 3 }));
        // Tick 3 at t=5000: arrive on site; completion due after 5000.
        let actions = team.itgs_step(3, &g, &no_blocks(), true, 5000);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::TeamArrived { at, .. }) if *at == NodeId(0))));
        assert!(matches!(
            actions.last().unwrap(),
            Action::Timeout { after: 5000, kind: TimeoutKind::CompletionDue { token: 1 } }
        ));
        assert_eq!(team.status, TeamStatus::OnSite);
    }

    #[test]
    fn colocated_service_is_immediately_on_site() {
        let g = team_graph();
        let mut team = TeamActor::new(&policy(3, 1.0, false), timings());
        let o = order(OrderKind::AwaitConfirmation, vec![3], 0);
        team.itgs_start(&o, g.clone(), 0).unwrap();
        let actions = team.itgs_step(1, &g, &no_blocks(), true, 0);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::TeamArrived { .. }))));
    }

    #[test]
    fn wrong_team_and_bad_paths_rejected() {
        let g = team_graph();
        let mut team = TeamActor::new(&policy(3, 1.0, false), timings());
        let wrong = order(OrderKind::AwaitConfirmation, vec![1, 0], 3000);
        assert!(team.itgs_start(&wrong, g.clone(), 0).is_err());
        let gap = order(OrderKind::AwaitConfirmation, vec![3, 0], 3000);
        assert!(team.itgs_start(&gap, g, 0).is_err());
    }

    #[test]
    fn blocked_hop_with_local_compute_reroutes_around_it() {
        let g = team_graph();
        let mut team = TeamActor::new(&policy(3, 1.0, true), timings());
        let o = order(OrderKind::AwaitConfirmation, vec![3, 1, 0], 5000);
        team.itgs_start(&o, g.clone(), 0).unwrap();
        team.itgs_step(1, &g, &no_blocks(), true, 0); // depart 3 -> 1

        let mut blocked = BTreeSet::new();
        blocked.insert(EdgeKey::new(NodeId(1), NodeId(0)));
        // Arrive at 1; next hop 1-0 is blocked; detour 1-2-0 costs 5000.
        let actions = team.itgs_step(2, &g, &blocked, true, 2000);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::BlockDiscovered { .. }))));
        let reroute = actions.iter().find_map(|a| match a {
            Action::Log(TraceEvent::Reroute { origin, cost, .. }) => Some((*origin, *cost)),
            _ => None,
        });
        assert_eq!(
            reroute,
            Some((RouteOrigin::LocalRecompute, crate::graph::Cost(5000)))
        );
        // Departs 1 -> 2 (weight 1000).
        assert!(matches!(actions.last().unwrap(), Action::ScheduleTick { after: 1000, .. }));
    }

    #[test]
    fn isolated_destination_aborts() {
        let g = team_graph();
        let mut team = TeamActor::new(&policy(3, 1.0, true), timings());
        let o = order(OrderKind::AwaitConfirmation, vec![3, 1, 0], 5000);
        team.itgs_start(&o, g.clone(), 0).unwrap();
        team.itgs_step(1, &g, &no_blocks(), true, 0);
        let mut blocked = BTreeSet::new();
        blocked.insert(EdgeKey::new(NodeId(1), NodeId(0)));
        blocked.insert(EdgeKey::new(NodeId(2), NodeId(0)));
        let actions = team.itgs_step(2, &g, &blocked, true, 2000);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::TeamAborted { at, .. }) if *at == NodeId(1))));
        assert_eq!(team.status, TeamStatus::Idle);
    }

    #[test]
    fn no_local_compute_asks_server_or_stalls() {
        let g = team_graph();
        let mut team = TeamActor::new(&policy(3, 1.0, false), timings());
        let o = order(OrderKind::AwaitConfirmation, vec![3, 1, 0], 5000);
        team.itgs_start(&o, g.clone(), 0).unwrap();
        team.itgs_step(1, &g, &no_blocks(), true, 0);
        let mut blocked = BTreeSet::new();
        blocked.insert(EdgeKey::new(NodeId(1), NodeId(0)));

        // Server offline: stall and retry.
        let actions = team.itgs_step(2, &g, &blocked, false, 2000);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::TeamStalled { .. }))));
        assert!(matches!(actions.last().unwrap(), Action::ScheduleTick { after: 1000, .. }));

        // Road cleared at the retry: proceeds normally.
        let actions = team.itgs_step(3, &g, &no_blocks(), false, 3000);
        assert!(matches!(actions.last().unwrap(), Action::ScheduleTick { after: 3000, .. }));
    }

    #[test]
    fn server_reroute_round_trip() {
        let g = team_graph();
        let mut team = TeamActor::new(&policy(3, 1.0, false), timings());
        let o = order(OrderKind::AwaitConfirmation, vec![3, 1, 0], 5000);
        team.itgs_start(&o, g.clone(), 0).unwrap();
        team.itgs_step(1, &g, &no_blocks(), true, 0);
        let mut blocked = BTreeSet::new();
        blocked.insert(EdgeKey::new(NodeId(1), NodeId(0)));
        let actions = team.itgs_step(2, &g, &blocked, true, 2000);
        let request = actions.iter().find(|a| {
            matches!(a, Action::Send { message: Message::RerouteRequest { .. }, .. })
        });
        assert!(request.is_some());
        assert_eq!(team.status, TeamStatus::Rerouting);

        let actions = team.on_route_update(
            &IncidentId("i1".into()),
            Some(vec![NodeId(1), NodeId(2), NodeId(0)]),
            Some(crate::graph::Cost(5000)),
            3000,
        );
        assert!(actions.iter().any(|a| matches!(
            a,
            Action::Log(TraceEvent::Reroute { origin: RouteOrigin::ServerRecompute, .. })
        )));
        assert_eq!(team.status, TeamStatus::EnRoute);
    }

    #[test]
    fn completion_notice_retransmits_until_broadcast() {
        let g = team_graph();
        let mut team = TeamActor::new(&policy(3, 1.0, false), timings());
        let o = order(OrderKind::AwaitConfirmation, vec![3], 0);
        team.itgs_start(&o, g.clone(), 0).unwrap();
        team.itgs_step(1, &g, &no_blocks(), true, 0); // on site at t=0
        let actions = team.report_completion(1);
        assert!(matches!(
            actions[0],
            Action::Send { message: Message::CompletionNotice { .. }, .. }
        ));
        assert_eq!(team.status, TeamStatus::Returning);
        // Notice lost: ack retry resends.
        let retry = team.on_ack_retry(1);
        assert!(matches!(
            retry[0],
            Action::Send { message: Message::CompletionNotice { .. }, .. }
        ));
        // Broadcast arrives: team is idle, further retries are stale.
        let done = team.on_completion_broadcast(&IncidentId("i1".into()));
        assert!(matches!(done[0], Action::Log(TraceEvent::TeamIdle { .. })));
        assert!(team.on_ack_retry(1).is_empty());
        assert!(!team.busy());
    }
}
