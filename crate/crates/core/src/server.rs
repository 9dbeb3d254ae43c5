//! Edge-server state machine.
//!
//! An alert runs the pipeline: cache check, concurrent shortest-path run
//! on a miss, service ranking, then an order broadcast to every ranked
//! service with rank 1 per type awaiting confirmation. Declines and
//! confirmation timeouts redirect to the next-ranked service. The server
//! also answers pings, fulfills resource requests from active sites with
//! the nearest idle service, recomputes routes around reported blocks for
//! teams, and closes an incident once every engaged service reports done.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::actions::{Action, TimeoutKind};
use crate::cache::{CacheEntry, PathCache};
use crate::graph::{CityGraph, NodeId, ServiceType};
use crate::protocol::{
    ActorId, EdgeKey, IncidentAlert, IncidentId, InterventionOrder, Message, OrderKind, SasId,
    ServerId,
};
use crate::sssp::{dijkstra_parallel, extract_path, rank_services, RankedService, SsspResult};
use crate::trace::{EngineMode, TraceEvent};
use crate::SimTime;

/// Lifecycle of a service as seen by this server's dispatch roster.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum ServiceState {
    Idle,
    Alerted,
    Confirmed,
    Declined,
    Engaged,
    Done,
}

/// Dispatch progress for one (incident, service type).
#[derive(Clone, Debug)]
struct TypeDispatch {
    ranked: Vec<RankedService>,
    cursor: usize,
    confirmed: Option<NodeId>,
}

impl TypeDispatch {
    fn awaited(&self) -> Option<&RankedService> {
        if self.confirmed.is_some() {
            None
        } else {
            self.ranked.get(self.cursor)
        }
    }

    fn exhausted(&self) -> bool {
        self.confirmed.is_none() && self.cursor >= self.ranked.len()
    }
}

#[derive(Clone, Debug)]
struct PendingIncident {
    alert: IncidentAlert,
    /// Version the ranked routes were computed on; redirected orders carry
    /// it even if the graph moved on since.
    graph_version: u64,
    per_type: BTreeMap<ServiceType, TypeDispatch>,
    engaged: BTreeSet<NodeId>,
    done: BTreeSet<NodeId>,
    alerted: BTreeSet<NodeId>,
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub id: ServerId,
    pub p_workers: usize,
    pub cache_capacity: usize,
    /// Extra event-time added before orders go out when the engine had to
    /// run (a cache hit answers immediately).
    pub compute_latency: u64,
    pub confirm_timeout: u64,
    pub cache_enabled: bool,
}

pub struct EdgeServer {
    pub id: ServerId,
    pub online: bool,
    graph: Arc<CityGraph>,
    cache: PathCache,
    config: ServerConfig,
    /// Most recent engine output (the distance/predecessor memory).
    /// Kept for inspection; answering always goes through the cache.
    pub last_result: Option<Arc<SsspResult>>,
    roster: BTreeMap<NodeId, ServiceState>,
    pending: BTreeMap<IncidentId, PendingIncident>,
    staged: BTreeMap<IncidentId, Vec<Action>>,
    engine_runs: u64,
}

impl EdgeServer {
    pub fn new(config: ServerConfig, graph: Arc<CityGraph>) -> EdgeServer {
        let roster = graph
            .service_nodes()
            .map(|(node, _)| (node, ServiceState::Idle))
            .collect();
        EdgeServer {
            id: config.id.clone(),
            online: true,
            cache: PathCache::new(config.cache_capacity),
            graph,
            config,
            last_result: None,
            roster,
            pending: BTreeMap::new(),
            staged: BTreeMap::new(),
            engine_runs: 0,
        }
    }

    pub fn engine_runs(&self) -> u64 {
        self.engine_runs
    }

    pub fn cache_stats(&self) -> crate::cache::CacheStats {
        self.cache.stats()
    }

    pub fn service_state(&self, service: NodeId) -> Option<ServiceState> {
        self.roster.get(&service).copied()
    }

    pub fn has_pending(&self, incident: &IncidentId) -> bool {
        self.pending.contains_key(incident)
    }

    fn me(&self) -> ServerId {
        self.id.clone()
    }

    /// Swap in an updated city graph and invalidate stale cache entries.
    pub fn graph_updated(&mut self, graph: Arc<CityGraph>) -> Vec<Action> {
        let version = graph.version();
        self.graph = graph;
        let evicted = self
            .cache
            .invalidate_all(version)
            .expect("graph versions are monotone");
        vec![Action::Log(TraceEvent::CacheInvalidated {
            server: self.me(),
            evicted,
            version,
        })]
    }

    pub fn handle_ping(&self, from: &SasId, incident: IncidentId, attempt: u32) -> Vec<Action> {
        if !self.online {
            return Vec::new();
        }
        vec![Action::Send {
            to: ActorId::Sas(from.clone()),
            message: Message::Pong {
                incident_id: incident,
                attempt,
            },
        }]
    }

    /// Cache-first shortest paths from `source`. Returns the result,
    /// whether the engine actually ran, and the trace actions.
    fn compute_or_cache(
        &mut self,
        source: NodeId,
        now: SimTime,
    ) -> (Arc<SsspResult>, bool, Vec<Action>) {
        let version = self.graph.version();
        let mut actions = Vec::new();
        if self.config.cache_enabled {
            if let Some(entry) = self.cache.lookup(source, version, now) {
                actions.push(Action::Log(TraceEvent::CacheHit {
                    server: self.me(),
                    location: source,
                    version,
                }));
                return (entry.result, false, actions);
            }
            actions.push(Action::Log(TraceEvent::CacheMiss {
                server: self.me(),
                location: source,
                version,
            }));
        }
        let p = self.config.p_workers.clamp(1, self.graph.n());
        let result = Arc::new(
            dijkstra_parallel(&self.graph, source, p).expect("validated source and workers"),
        );
        self.engine_runs += 1;
        actions.push(Action::Log(TraceEvent::EngineRun {
            actor: ActorId::Server(self.me()),
            mode: EngineMode::Parallel,
            source,
            version,
        }));
        if self.config.cache_enabled {
            self.cache.insert(CacheEntry::new(result.clone(), now));
        }
        self.last_result = Some(result.clone());
        (result, true, actions)
    }

    /// Full alert pipeline. Emits orders for every ranked service of each
    /// required type (rank 1 awaiting confirmation, the rest standby).
    /// When the engine had to run and a compute latency is configured, the
    /// outgoing orders are staged behind a `DispatchReady` timeout.
    pub fn handle_alert(&mut self, alert: IncidentAlert, now: SimTime) -> Vec<Action> {
        if !self.graph.contains(alert.location) {
            return vec![Action::Log(TraceEvent::AlertRejected {
                server: self.me(),
                incident: alert.incident_id.clone(),
                reason: format!("unknown location {}", alert.location),
            })];
        }
        if self.pending.contains_key(&alert.incident_id) {
            return vec![Action::Log(TraceEvent::AlertRejected {
                server: self.me(),
                incident: alert.incident_id.clone(),
                reason: "duplicate incident".into(),
            })];
        }
        let mut actions = vec![Action::Log(TraceEvent::AlertDelivered {
            server: self.me(),
            incident: alert.incident_id.clone(),
        })];

        let (result, ran_engine, pipeline) = self.compute_or_cache(alert.location, now);
        actions.extend(pipeline);

        let ranked_all = rank_services(&result, &self.graph, alert.required_types.iter())
            .expect("result and graph share a version");

        let mut emit = Vec::new();
        let mut pending = PendingIncident {
            alert: alert.clone(),
            graph_version: result.graph_version,
            per_type: BTreeMap::new(),
            engaged: BTreeSet::new(),
            done: BTreeSet::new(),
            alerted: BTreeSet::new(),
        };
        let mut order_count = 0usize;
        for required in &alert.required_types {
            let ranked: Vec<RankedService> = ranked_all
                .iter()
                .filter(|r| &r.service_type == required)
                .cloned()
                .collect();
            if ranked.is_empty() {
                emit.push(Action::Log(TraceEvent::UnreachableType {
                    server: self.me(),
                    incident: alert.incident_id.clone(),
                    service_type: required.clone(),
                }));
                continue;
            }
            for rs in &ranked {
                let kind = if rs.rank == 1 {
                    OrderKind::AwaitConfirmation
                } else {
                    OrderKind::Standby
                };
                emit.push(Action::Send {
                    to: ActorId::Service(rs.node),
                    message: Message::Order(self.order_from(rs, &alert, kind, result.graph_version)),
                });
                order_count += 1;
                pending.alerted.insert(rs.node);
                if self.roster.get(&rs.node) == Some(&ServiceState::Idle) {
                    self.roster.insert(rs.node, ServiceState::Alerted);
                }
            }
            emit.push(Action::Log(TraceEvent::AwaitingConfirmation {
                server: self.me(),
                incident: alert.incident_id.clone(),
                service_type: required.clone(),
                service: ranked[0].node,
                rank: 1,
            }));
            emit.push(Action::Timeout {
                after: self.config.confirm_timeout,
                kind: TimeoutKind::ConfirmDeadline {
                    incident: alert.incident_id.clone(),
                    service_type: required.clone(),
                    cursor: 0,
                },
            });
            pending.per_type.insert(
                required.clone(),
                TypeDispatch {
                    ranked,
                    cursor: 0,
                    confirmed: None,
                },
            );
        }
        emit.push(Action::Log(TraceEvent::Dispatched {
            server: self.me(),
            incident: alert.incident_id.clone(),
            orders: order_count,
        }));
        self.pending.insert(alert.incident_id.clone(), pending);

        if ran_engine && self.config.compute_latency > 0 {
            self.staged.insert(alert.incident_id.clone(), emit);
            actions.push(Action::Timeout {
                after: self.config.compute_latency,
                kind: TimeoutKind::DispatchReady {
                    incident: alert.incident_id,
                },
            });
        } else {
            actions.extend(emit);
        }
        actions
    }

    fn order_from(
        &self,
        rs: &RankedService,
        alert: &IncidentAlert,
        kind: OrderKind,
        graph_version: u64,
    ) -> InterventionOrder {
        // Ranked paths run incident -> service; teams travel the reverse.
        let mut path = rs.path.clone();
        path.reverse();
        InterventionOrder {
            incident_id: alert.incident_id.clone(),
            service: rs.node,
            service_type: rs.service_type.clone(),
            path,
            cost: rs.cost,
            rank: rs.rank,
            kind,
            server: self.id.clone(),
            graph_version,
            severity: alert.severity,
        }
    }

    pub fn on_dispatch_ready(&mut self, incident: &IncidentId) -> Vec<Action> {
        self.staged.remove(incident).unwrap_or_default()
    }

    pub fn handle_confirmation(
        &mut self,
        incident: &IncidentId,
        service: NodeId,
        _now: SimTime,
    ) -> Vec<Action> {
        let server_id = self.id.clone();
        let violation = move |detail: &str| {
            vec![Action::Log(TraceEvent::ProtocolViolation {
                server: server_id.clone(),
                incident: incident.clone(),
                service,
                detail: detail.into(),
            })]
        };
        let Some(pending) = self.pending.get_mut(incident) else {
            return violation("confirmation for unknown incident");
        };
        let Some((service_type, dispatch)) = pending
            .per_type
            .iter_mut()
            .find(|(_, d)| d.ranked.iter().any(|r| r.node == service))
            .map(|(t, d)| (t.clone(), d))
        else {
            return violation("confirmation from service that was never alerted");
        };
        if dispatch.confirmed == Some(service) {
            // Duplicate confirmation: already engaged, nothing to do.
            return Vec::new();
        }
        if dispatch.confirmed.is_some() {
            return violation("confirmation after another service engaged");
        }
        if dispatch.awaited().map(|r| r.node) != Some(service) {
            return violation("confirmation from service not awaiting");
        }

        dispatch.confirmed = Some(service);
        let cursor = dispatch.cursor;
        let stand_down: Vec<NodeId> = dispatch.ranked[cursor + 1..]
            .iter()
            .map(|r| r.node)
            .collect();
        let declined: Vec<NodeId> = dispatch.ranked[..cursor].iter().map(|r| r.node).collect();

        pending.engaged.insert(service);
        self.roster.insert(service, ServiceState::Engaged);
        let mut actions = Vec::new();
        for node in stand_down {
            actions.push(Action::Send {
                to: ActorId::Service(node),
                message: Message::StandDown {
                    incident_id: incident.clone(),
                    service_type: service_type.clone(),
                },
            });
            if self.roster.get(&node) == Some(&ServiceState::Alerted) {
                self.roster.insert(node, ServiceState::Idle);
            }
        }
        for node in declined {
            if self.roster.get(&node) == Some(&ServiceState::Declined) {
                self.roster.insert(node, ServiceState::Idle);
            }
        }
        actions
    }

    /// Explicit decline from the currently awaited service.
    pub fn handle_decline(
        &mut self,
        incident: &IncidentId,
        service: NodeId,
        now: SimTime,
    ) -> Vec<Action> {
        let Some(pending) = self.pending.get_mut(incident) else {
            return Vec::new();
        };
        let Some(service_type) = pending
            .per_type
            .iter()
            .find(|(_, d)| d.awaited().map(|r| r.node) == Some(service))
            .map(|(t, _)| t.clone())
        else {
            // Stale decline (deadline already advanced the cursor).
            return Vec::new();
        };
        if self.roster.get(&service) == Some(&ServiceState::Alerted) {
            self.roster.insert(service, ServiceState::Declined);
        }
        self.advance_cursor(incident, &service_type, now)
    }

    /// Confirmation deadline fired; treat as a decline if still awaiting
    /// that exact cursor.
    pub fn on_confirm_deadline(
        &mut self,
        incident: &IncidentId,
        service_type: &ServiceType,
        cursor: usize,
        now: SimTime,
    ) -> Vec<Action> {
        let Some(pending) = self.pending.get(incident) else {
            return Vec::new();
        };
        let Some(dispatch) = pending.per_type.get(service_type) else {
            return Vec::new();
        };
        if dispatch.confirmed.is_some() || dispatch.cursor != cursor {
            return Vec::new();
        }
        let service = dispatch.ranked[cursor].node;
        let mut actions = vec![Action::Log(TraceEvent::ConfirmTimeout {
            server: self.me(),
            incident: incident.clone(),
            service_type: service_type.clone(),
            service,
        })];
        if self.roster.get(&service) == Some(&ServiceState::Alerted) {
            self.roster.insert(service, ServiceState::Declined);
        }
        actions.extend(self.advance_cursor(incident, service_type, now));
        actions
    }

    fn advance_cursor(
        &mut self,
        incident: &IncidentId,
        service_type: &ServiceType,
        _now: SimTime,
    ) -> Vec<Action> {
        let me = self.me();
        let Some(pending) = self.pending.get_mut(incident) else {
            return Vec::new();
        };
        let alert = pending.alert.clone();
        let route_version = pending.graph_version;
        let Some(dispatch) = pending.per_type.get_mut(service_type) else {
            return Vec::new();
        };
        dispatch.cursor += 1;
        let mut actions = Vec::new();
        if let Some(next) = dispatch.awaited().cloned() {
            let cursor = dispatch.cursor;
            actions.push(Action::Send {
                to: ActorId::Service(next.node),
                message: Message::Order(self.order_from(
                    &next,
                    &alert,
                    OrderKind::AwaitConfirmation,
                    route_version,
                )),
            });
            actions.push(Action::Log(TraceEvent::AwaitingConfirmation {
                server: me,
                incident: incident.clone(),
                service_type: service_type.clone(),
                service: next.node,
                rank: next.rank,
            }));
            actions.push(Action::Timeout {
                after: self.config.confirm_timeout,
                kind: TimeoutKind::ConfirmDeadline {
                    incident: incident.clone(),
                    service_type: service_type.clone(),
                    cursor,
                },
            });
            return actions;
        }

        // Ranked list exhausted for this type.
        actions.push(Action::Log(TraceEvent::TypeExhausted {
            server: me.clone(),
            incident: incident.clone(),
            service_type: service_type.clone(),
        }));
        for rs in &dispatch.ranked {
            if matches!(
                self.roster.get(&rs.node),
                Some(ServiceState::Alerted) | Some(ServiceState::Declined)
            ) {
                self.roster.insert(rs.node, ServiceState::Idle);
            }
        }
        let settled = pending
            .per_type
            .values()
            .all(|d| d.confirmed.is_some() || d.exhausted());
        if settled && pending.engaged.is_empty() {
            actions.push(Action::Log(TraceEvent::IncidentUnserved {
                server: me,
                incident: incident.clone(),
            }));
            self.pending.remove(incident);
        }
        actions
    }

    /// Dispatch the nearest idle service of the requested type to `site`,
    /// reusing the cache-first pipeline for the distance run.
    pub fn handle_resource_request(
        &mut self,
        incident: &IncidentId,
        requested_type: &ServiceType,
        site: NodeId,
        now: SimTime,
    ) -> Vec<Action> {
        if !self.pending.contains_key(incident) {
            return vec![Action::Log(TraceEvent::ProtocolViolation {
                server: self.me(),
                incident: incident.clone(),
                service: site,
                detail: "resource request for unknown incident".into(),
            })];
        }
        let (result, _ran, mut actions) = self.compute_or_cache(site, now);
        let candidate = self
            .graph
            .service_nodes()
            .filter(|(node, ty)| {
                *ty == requested_type
                    && self.roster.get(node) == Some(&ServiceState::Idle)
                    && result.reachable(*node)
            })
            .map(|(node, _)| (result.distance(node), node))
            .min();
        let Some((cost, node)) = candidate else {
            actions.push(Action::Log(TraceEvent::ResourceUnmet {
                server: self.me(),
                incident: incident.clone(),
                service_type: requested_type.clone(),
            }));
            return actions;
        };
        let mut path = extract_path(&result, node)
            .expect("validated node")
            .expect("reachable candidate");
        path.reverse();
        let pending = self.pending.get_mut(incident).expect("checked above");
        let severity = pending.alert.severity;
        pending.engaged.insert(node);
        pending.alerted.insert(node);
        self.roster.insert(node, ServiceState::Engaged);
        actions.push(Action::Send {
            to: ActorId::Service(node),
            message: Message::Order(InterventionOrder {
                incident_id: incident.clone(),
                service: node,
                service_type: requested_type.clone(),
                path,
                cost,
                rank: 1,
                kind: OrderKind::Dispatch,
                server: self.id.clone(),
                graph_version: self.graph.version(),
                severity,
            }),
        });
        actions
    }

    /// Completion from an engaged service. When all engaged services are
    /// done the incident closes and a completion broadcast goes to every
    /// alerted site. A notice for an already-closed incident is answered
    /// with a fresh broadcast so retransmitting teams converge.
    pub fn handle_completion(
        &mut self,
        incident: &IncidentId,
        service: NodeId,
        _now: SimTime,
    ) -> Vec<Action> {
        let Some(pending) = self.pending.get_mut(incident) else {
            return vec![
                Action::Log(TraceEvent::DuplicateCompletion {
                    server: self.id.clone(),
                    incident: incident.clone(),
                    service,
                }),
                Action::Send {
                    to: ActorId::Service(service),
                    message: Message::CompletionBroadcast {
                        incident_id: incident.clone(),
                    },
                },
            ];
        };
        if !pending.engaged.contains(&service) {
            return vec![Action::Log(TraceEvent::ProtocolViolation {
                server: self.id.clone(),
                incident: incident.clone(),
                service,
                detail: "completion from non-engaged service".into(),
            })];
        }
        let mut actions = Vec::new();
        if !pending.done.insert(service) {
            // Retransmitted notice: the earlier broadcast was lost.
            actions.push(Action::Log(TraceEvent::DuplicateCompletion {
                server: self.id.clone(),
                incident: incident.clone(),
                service,
            }));
            actions.push(Action::Send {
                to: ActorId::Service(service),
                message: Message::CompletionBroadcast {
                    incident_id: incident.clone(),
                },
            });
            return actions;
        }
        self.roster.insert(service, ServiceState::Done);
        self.roster.insert(service, ServiceState::Idle);
        if pending.done == pending.engaged {
            let alerted = pending.alerted.clone();
            for node in alerted {
                actions.push(Action::Send {
                    to: ActorId::Service(node),
                    message: Message::CompletionBroadcast {
                        incident_id: incident.clone(),
                    },
                });
            }
            actions.push(Action::Log(TraceEvent::IncidentClosed {
                server: self.id.clone(),
                incident: incident.clone(),
            }));
            self.pending.remove(incident);
        }
        actions
    }

    /// Route recomputation for a team around its observed blocks, on the
    /// server's current graph. Results are never cached: the pruned graph
    /// is a scratch view, not a new version.
    pub fn handle_reroute_request(
        &mut self,
        incident: &IncidentId,
        team: NodeId,
        at: NodeId,
        destination: NodeId,
        blocked: &BTreeSet<EdgeKey>,
        _now: SimTime,
    ) -> Vec<Action> {
        let pruned = self
            .graph
            .with_edges_removed(blocked.iter().map(|e| (e.0, e.1)));
        let p = self.config.p_workers.clamp(1, pruned.n());
        let result = dijkstra_parallel(&pruned, at, p).expect("validated inputs");
        self.engine_runs += 1;
        let mut actions = vec![Action::Log(TraceEvent::EngineRun {
            actor: ActorId::Server(self.me()),
            mode: EngineMode::Parallel,
            source: at,
            version: pruned.version(),
        })];
        let path = extract_path(&result, destination).expect("validated destination");
        let cost = path.as_ref().map(|_| result.distance(destination));
        actions.push(Action::Send {
            to: ActorId::Team(team),
            message: Message::RouteUpdate {
                incident_id: incident.clone(),
                path,
                cost,
                graph_version: self.graph.version(),
            },
        });
        actions
    }

    /// After an outage ends, re-arm confirmation deadlines for every still
    /// unresolved dispatch so redirects stalled by the outage resume.
    pub fn on_restored(&mut self) -> Vec<Action> {
        let mut actions = Vec::new();
        for (incident, pending) in &self.pending {
            for (service_type, dispatch) in &pending.per_type {
                if dispatch.awaited().is_some() {
                    actions.push(Action::Timeout {
                        after: self.config.confirm_timeout,
                        kind: TimeoutKind::ConfirmDeadline {
                            incident: incident.clone(),
                            service_type: service_type.clone(),
                            cursor: dispatch.cursor,
                        },
                    });
                }
            }
        }
        actions
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Cost;
    use crate::protocol::{Hazard, Severity};

    fn test_graph() -> Arc<CityGraph> {
        // Incident site 0; fire services at 3 (cost 3) and 2 (cost 7);
        // medical at 4 (cost 2); node 5 isolated.
        Arc::new(
            CityGraph::from_text(
                "graph 6\n\
                 node 0 surveillance\n\
                 node 2 service:fire\n\
                 node 3 service:fire\n\
                 node 4 service:medical\n\
                 node 5 service:rescue\n\
                 edge 0 1 1\n\
                 edge 1 2 6\n\
                 edge 0 3 3\n\
                 edge 0 4 2\n",
            )
            .unwrap(),
        )
    }

    fn config() -> ServerConfig {
        ServerConfig {
            id: ServerId("edge-a".into()),
            p_workers: 2,
            cache_capacity: 16,
            compute_latency: 0,
            confirm_timeout: 30_000,
            cache_enabled: true,
        }
    }

    fn alert(id: &str, types: &[&str]) -> IncidentAlert {
        IncidentAlert {
            incident_id: IncidentId(id.into()),
            location: NodeId(0),
            hazard: Hazard("fire".into()),
            severity: Severity::High,
            required_types: types
                .iter()
                .map(|t| ServiceType::new(t).unwrap())
                .collect(),
            origin: SasId("sas-1".into()),
            timestamp: 0,
        }
    }

    fn sent_orders(actions: &[Action]) -> Vec<&InterventionOrder> {
        actions
            .iter()
            .filter_map(|a| match a {
                Action::Send {
                    message: Message::Order(o),
                    ..
                } => Some(o),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn alert_pipeline_broadcasts_ranked_orders() {
        let mut server = EdgeServer::new(config(), test_graph());
        let actions = server.handle_alert(alert("i1", &["fire", "medical"]), 0);
        let orders = sent_orders(&actions);
        assert_eq!(orders.len(), 3);
        // Fire rank 1 is node 3 (cost 3), rank 2 node 2 (cost 7).
        let fire1 = orders.iter().find(|o| o.service == NodeId(3)).unwrap();
        assert_eq!(fire1.rank, 1);
        assert_eq!(fire1.kind, OrderKind::AwaitConfirmation);
        assert_eq!(fire1.cost, Cost(3000));
        assert_eq!(fire1.path, vec![NodeId(3), NodeId(0)]);
        let fire2 = orders.iter().find(|o| o.service == NodeId(2)).unwrap();
        assert_eq!(fire2.rank, 2);
        assert_eq!(fire2.kind, OrderKind::Standby);
        let med = orders.iter().find(|o| o.service == NodeId(4)).unwrap();
        assert_eq!(med.kind, OrderKind::AwaitConfirmation);
        assert_eq!(server.engine_runs(), 1);
        assert_eq!(server.service_state(NodeId(3)), Some(ServiceState::Alerted));
    }

    #[test]
    fn repeated_alert_same_location_hits_cache() {
        let mut server = EdgeServer::new(config(), test_graph());
        let a1 = server.handle_alert(alert("i1", &["fire"]), 0);
        let a2 = server.handle_alert(alert("i2", &["fire"]), 10);
        assert_eq!(server.engine_runs(), 1);
        assert_eq!(server.cache_stats().hits, 1);
        let o1 = sent_orders(&a1);
        let o2 = sent_orders(&a2);
        assert_eq!(o1.len(), o2.len());
        for (x, y) in o1.iter().zip(o2.iter()) {
            assert_eq!(x.path, y.path);
            assert_eq!(x.cost, y.cost);
        }
    }

    #[test]
    fn unreachable_type_warns_and_dispatch_continues() {
        let mut server = EdgeServer::new(config(), test_graph());
        let actions = server.handle_alert(alert("i1", &["fire", "rescue"]), 0);
        assert!(actions.iter().any(|a| matches!(
            a,
            Action::Log(TraceEvent::UnreachableType { service_type, .. })
                if service_type.as_str() == "rescue"
        )));
        assert_eq!(sent_orders(&actions).len(), 2);
    }

    #[test]
    fn unknown_location_rejected() {
        let mut server = EdgeServer::new(config(), test_graph());
        let mut bad = alert("i1", &["fire"]);
        bad.location = NodeId(42);
        let actions = server.handle_alert(bad, 0);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::AlertRejected { .. }))));
        assert_eq!(server.engine_runs(), 0);
    }

    #[test]
    fn confirmation_stands_down_lower_ranks() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire"]), 0);
        let actions = server.handle_confirmation(&IncidentId("i1".into()), NodeId(3), 1);
        assert!(actions.iter().any(|a| matches!(
            a,
            Action::Send {
                to: ActorId::Service(n),
                message: Message::StandDown { .. }
            } if *n == NodeId(2)
        )));
        assert_eq!(server.service_state(NodeId(3)), Some(ServiceState::Engaged));
        assert_eq!(server.service_state(NodeId(2)), Some(ServiceState::Idle));

        // Duplicate confirmation is idempotent.
        let dup = server.handle_confirmation(&IncidentId("i1".into()), NodeId(3), 2);
        assert!(dup.is_empty());
    }

    #[test]
    fn confirmation_from_unalerted_service_is_violation() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire"]), 0);
        let actions = server.handle_confirmation(&IncidentId("i1".into()), NodeId(4), 1);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::ProtocolViolation { .. }))));
    }

    #[test]
    fn decline_redirects_to_next_rank() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire"]), 0);
        let incident = IncidentId("i1".into());
        let actions = server.handle_decline(&incident, NodeId(3), 1);
        let orders = sent_orders(&actions);
        assert_eq!(orders.len(), 1);
        assert_eq!(orders[0].service, NodeId(2));
        assert_eq!(orders[0].kind, OrderKind::AwaitConfirmation);
        assert_eq!(orders[0].rank, 2);
        // Rank 2 confirms; nobody left to stand down, rank 1 freed.
        server.handle_confirmation(&incident, NodeId(2), 2);
        assert_eq!(server.service_state(NodeId(2)), Some(ServiceState::Engaged));
        assert_eq!(server.service_state(NodeId(3)), Some(ServiceState::Idle));
        // Only one engine run despite the redirect.
        assert_eq!(server.engine_runs(), 1);
    }

    #[test]
    fn exhaustion_emits_unserved() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire"]), 0);
        let incident = IncidentId("i1".into());
        server.handle_decline(&incident, NodeId(3), 1);
        let actions = server.handle_decline(&incident, NodeId(2), 2);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::TypeExhausted { .. }))));
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::IncidentUnserved { .. }))));
        assert!(!server.has_pending(&incident));
        assert_eq!(server.service_state(NodeId(3)), Some(ServiceState::Idle));
    }

    #[test]
    fn deadline_is_decline_and_stale_deadline_is_ignored() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire"]), 0);
        let incident = IncidentId("i1".into());
        let fire = ServiceType::new("fire").unwrap();
        let actions = server.on_confirm_deadline(&incident, &fire, 0, 31_000);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::ConfirmTimeout { .. }))));
        assert_eq!(sent_orders(&actions)[0].service, NodeId(2));
        // The stale deadline for cursor 0 fires again: no effect.
        assert!(server.on_confirm_deadline(&incident, &fire, 0, 32_000).is_empty());
    }

    #[test]
    fn resource_request_dispatches_nearest_idle() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire"]), 0);
        let incident = IncidentId("i1".into());
        let medical = ServiceType::new("medical").unwrap();
        let actions = server.handle_resource_request(&incident, &medical, NodeId(0), 5);
        let orders = sent_orders(&actions);
        assert_eq!(orders.len(), 1);
        assert_eq!(orders[0].service, NodeId(4));
        assert_eq!(orders[0].kind, OrderKind::Dispatch);
        assert_eq!(orders[0].cost, Cost(2000));
        assert_eq!(server.service_state(NodeId(4)), Some(ServiceState::Engaged));
        // Same location, same version: served by the cache.
        assert_eq!(server.engine_runs(), 1);
        // No second medical unit: unmet.
        let again = server.handle_resource_request(&incident, &medical, NodeId(0), 6);
        assert!(again
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::ResourceUnmet { .. }))));
    }

    #[test]
    fn completion_closes_after_all_engaged_done() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire", "medical"]), 0);
        let incident = IncidentId("i1".into());
        server.handle_confirmation(&incident, NodeId(3), 1);
        server.handle_confirmation(&incident, NodeId(4), 1);
        let first = server.handle_completion(&incident, NodeId(3), 10);
        assert!(!first
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::IncidentClosed { .. }))));
        assert!(server.has_pending(&incident));
        let second = server.handle_completion(&incident, NodeId(4), 12);
        assert!(second
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::IncidentClosed { .. }))));
        let broadcasts = second
            .iter()
            .filter(|a| {
                matches!(
                    a,
                    Action::Send {
                        message: Message::CompletionBroadcast { .. },
                        ..
                    }
                )
            })
            .count();
        assert_eq!(broadcasts, 3); // every alerted site
        assert!(!server.has_pending(&incident));

        // Completion for the closed incident: warned and re-acked.
        let late = server.handle_completion(&incident, NodeId(3), 20);
        assert!(late
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::DuplicateCompletion { .. }))));
    }

    #[test]
    fn completion_from_non_engaged_is_violation() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire"]), 0);
        let actions = server.handle_completion(&IncidentId("i1".into()), NodeId(3), 1);
        assert!(actions
            .iter()
            .any(|a| matches!(a, Action::Log(TraceEvent::ProtocolViolation { .. }))));
    }

    #[test]
    fn ping_answered_only_when_online() {
        let mut server = EdgeServer::new(config(), test_graph());
        let sas = SasId("sas-1".into());
        let up = server.handle_ping(&sas, IncidentId("i1".into()), 0);
        assert!(matches!(
            up[0],
            Action::Send {
                message: Message::Pong { .. },
                ..
            }
        ));
        server.online = false;
        assert!(server.handle_ping(&sas, IncidentId("i1".into()), 1).is_empty());
    }

    #[test]
    fn graph_update_invalidates_cache() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire"]), 0);
        let updated = Arc::new(server.graph.with_edits(&[]).unwrap());
        let actions = server.graph_updated(updated);
        assert!(matches!(
            actions[0],
            Action::Log(TraceEvent::CacheInvalidated { evicted: 1, version: 1, .. })
        ));
        // Same location now misses and reruns the engine.
        server.handle_alert(alert("i2", &["fire"]), 5);
        assert_eq!(server.engine_runs(), 2);
    }

    #[test]
    fn reroute_request_avoids_blocked_edges() {
        let mut server = EdgeServer::new(config(), test_graph());
        server.handle_alert(alert("i1", &["fire"]), 0);
        // Block 0-3; the detour for a team at 0 heading to 3 no longer
        // exists (3 has a single edge), so the update reports unreachable.
        let mut blocked = BTreeSet::new();
        blocked.insert(EdgeKey::new(NodeId(0), NodeId(3)));
        let actions = server.handle_reroute_request(
            &IncidentId("i1".into()),
            NodeId(3),
            NodeId(0),
            NodeId(3),
            &blocked,
            4,
        );
        let update = actions
            .iter()
            .find_map(|a| match a {
                Action::Send {
                    message: Message::RouteUpdate { path, .. },
                    ..
                } => Some(path),
                _ => None,
            })
            .unwrap();
        assert!(update.is_none());
    }
}
