//! Scenario files: JSON description of the graph, servers, surveillance
//! units with their sensor timelines, service policies, network
//! parameters, fault schedule, and protocol limits.
//!
//! All durations and timestamps in scenario files are decimals in the same
//! abstract time unit as graph weights; they are scaled by 1000 into
//! integer milli-ticks at load (finest resolution 0.001).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::graph::{CityGraph, Cost, GraphEdit, GraphError, NodeId, NodeRole, ServiceType};
use crate::protocol::{ActorId, EdgeKey, Hazard, SasId, ServerId};
use crate::responder::{AcceptProbability, ServicePolicy};
use crate::sas::{SasConfig, SensorReading};
use crate::sim::network::NetworkSpec;
use crate::SimTime;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("scenario: {0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

/// Scales a decimal number of time units to integer milli-ticks.
fn units_to_milli(value: f64, what: &str) -> Result<u64, ScenarioError> {
    if !value.is_finite() || value < 0.0 {
        return Err(invalid(format!("{what}: {value} is not a non-negative number")));
    }
    let scaled = value * 1000.0;
    let rounded = scaled.round();
    if (scaled - rounded).abs() > 1e-6 {
        return Err(invalid(format!("{what}: {value} is finer than 0.001")));
    }
    if rounded >= u64::MAX as f64 / 2.0 {
        return Err(invalid(format!("{what}: {value} out of range")));
    }
    Ok(rounded as u64)
}

#[derive(Debug, Clone)]
pub struct ServerSpec {
    pub id: ServerId,
    pub p_workers: usize,
    pub cache_capacity: usize,
    pub compute_latency: u64,
    /// Half-open offline windows [from, until).
    pub outages: Vec<(SimTime, SimTime)>,
}

#[derive(Debug, Clone)]
pub struct SensorBatchSpec {
    pub time: SimTime,
    pub readings: Vec<SensorReading>,
}

#[derive(Debug, Clone)]
pub struct SasSpec {
    pub config: SasConfig,
    pub batches: Vec<SensorBatchSpec>,
}

#[derive(Debug, Clone)]
pub enum FaultKind {
    Block(EdgeKey),
    Unblock(EdgeKey),
    GraphUpdate(Vec<GraphEdit>),
}

#[derive(Debug, Clone)]
pub struct FaultSpec {
    pub time: SimTime,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub confirm_timeout: u64,
    pub ack_timeout: u64,
    pub service_duration: u64,
    pub stall_retry: u64,
    pub max_time: u64,
}

/// A fully resolved, validated scenario.
#[derive(Debug)]
pub struct Scenario {
    pub graph: CityGraph,
    pub servers: Vec<ServerSpec>,
    pub sas: Vec<SasSpec>,
    pub policies: BTreeMap<NodeId, ServicePolicy>,
    pub network: NetworkSpec,
    pub faults: Vec<FaultSpec>,
    pub limits: Limits,
    pub hazard_services: BTreeMap<Hazard, Vec<ServiceType>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    graph: RawGraph,
    #[serde(default)]
    servers: Vec<RawServer>,
    #[serde(default)]
    sas: Vec<RawSas>,
    #[serde(default)]
    services: Vec<RawPolicy>,
    #[serde(default)]
    network: RawNetwork,
    #[serde(default)]
    faults: Vec<RawFault>,
    #[serde(default)]
    limits: RawLimits,
    #[serde(default)]
    hazard_services: BTreeMap<String, Vec<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    file: Option<String>,
    text: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawServer {
    id: String,
    p_workers: Option<usize>,
    cache_capacity: Option<usize>,
    compute_latency: Option<f64>,
    #[serde(default)]
    outages: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSas {
    id: String,
    location: u32,
    detection_threshold: f64,
    server_list: Vec<String>,
    ping_timeout: Option<f64>,
    max_retries: Option<u32>,
    dedup_window: Option<f64>,
    #[serde(default)]
    sensors: Vec<RawBatch>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBatch {
    time: f64,
    readings: Vec<RawReading>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReading {
    sensor: String,
    hazard: String,
    magnitude: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawAccept {
    Uniform(f64),
    PerSeverity {
        low: Option<f64>,
        medium: Option<f64>,
        high: Option<f64>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    node: u32,
    accept_probability: Option<RawAccept>,
    local_compute: Option<bool>,
    decision_latency: Option<f64>,
    #[serde(default)]
    request_on_arrival: Vec<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    default_latency: Option<f64>,
    drop_probability: Option<f64>,
    #[serde(default)]
    links: Vec<RawLink>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    from: String,
    to: String,
    latency: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    time: f64,
    kind: String,
    edge: Option<(u32, u32)>,
    edits: Option<Vec<RawEdit>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEdit {
    op: String,
    u: u32,
    v: u32,
    weight: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLimits {
    confirm_timeout: Option<f64>,
    ack_timeout: Option<f64>,
    service_duration: Option<f64>,
    stall_retry: Option<f64>,
    max_time: Option<f64>,
}

fn parse_actor(text: &str) -> Result<ActorId, ScenarioError> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| invalid(format!("actor {text:?} must look like kind:id")))?;
    match kind {
        "sas" => Ok(ActorId::Sas(SasId(rest.to_string()))),
        "server" => Ok(ActorId::Server(ServerId(rest.to_string()))),
        "service" => rest
            .parse()
            .map(|n| ActorId::Service(NodeId(n)))
            .map_err(|_| invalid(format!("bad service node in {text:?}"))),
        "team" => rest
            .parse()
            .map(|n| ActorId::Team(NodeId(n)))
            .map_err(|_| invalid(format!("bad team node in {text:?}"))),
        _ => Err(invalid(format!("unknown actor kind in {text:?}"))),
    }
}

impl Scenario {
    /// Loads a scenario from a file; a `graph.file` reference resolves
    /// relative to the scenario's directory.
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text, path.parent())
    }

    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(text)?;
        Scenario::resolve(raw, base_dir)
    }

    fn resolve(raw: RawScenario, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let graph = match (&raw.graph.file, &raw.graph.text) {
            (Some(_), Some(_)) => {
                return Err(invalid("graph: give either `file` or `text`, not both"))
            }
            (Some(file), None) => {
                let path = match base_dir {
                    Some(dir) => dir.join(file),
                    None => Path::new(file).to_path_buf(),
                };
                CityGraph::from_text(&std::fs::read_to_string(path)?)?
            }
            (None, Some(text)) => CityGraph::from_text(text)?,
            (None, None) => return Err(invalid("graph: missing `file` or `text`")),
        };

        let limits = Limits {
            confirm_timeout: units_to_milli(raw.limits.confirm_timeout.unwrap_or(30.0), "limits.confirm_timeout")?,
            ack_timeout: units_to_milli(raw.limits.ack_timeout.unwrap_or(20.0), "limits.ack_timeout")?,
            service_duration: units_to_milli(raw.limits.service_duration.unwrap_or(5.0), "limits.service_duration")?,
            stall_retry: units_to_milli(raw.limits.stall_retry.unwrap_or(1.0), "limits.stall_retry")?,
            max_time: units_to_milli(raw.limits.max_time.unwrap_or(100_000.0), "limits.max_time")?,
        };

        let mut servers = Vec::new();
        let mut server_ids = BTreeSet::new();
        for s in &raw.servers {
            if !server_ids.insert(s.id.clone()) {
                return Err(invalid(format!("duplicate server id {:?}", s.id)));
            }
            let mut outages = Vec::new();
            for (from, until) in &s.outages {
                let from = units_to_milli(*from, "server outage start")?;
                let until = units_to_milli(*until, "server outage end")?;
                if from >= until {
                    return Err(invalid(format!(
                        "server {:?}: outage window must have start < end",
                        s.id
                    )));
                }
                outages.push((from, until));
            }
            servers.push(ServerSpec {
                id: ServerId(s.id.clone()),
                p_workers: s.p_workers.unwrap_or(4).max(1),
                cache_capacity: s.cache_capacity.unwrap_or(1024),
                compute_latency: units_to_milli(s.compute_latency.unwrap_or(0.0), "server compute_latency")?,
                outages,
            });
        }

        let service_types_present: BTreeSet<ServiceType> = graph
            .service_nodes()
            .map(|(_, t)| t.clone())
            .collect();
        let require_known_type = |name: &str| -> Result<ServiceType, ScenarioError> {
            let ty = ServiceType::new(name).map_err(invalid)?;
            if !service_types_present.contains(&ty) {
                return Err(invalid(format!(
                    "service type {name:?} has no service node in the graph"
                )));
            }
            Ok(ty)
        };

        let mut hazard_services = BTreeMap::new();
        for (hazard, types) in &raw.hazard_services {
            let mut resolved = Vec::new();
            for t in types {
                resolved.push(require_known_type(t)?);
            }
            if resolved.is_empty() {
                return Err(invalid(format!("hazard {hazard:?} maps to no service types")));
            }
            hazard_services.insert(Hazard(hazard.clone()), resolved);
        }

        let mut sas = Vec::new();
        let mut sas_ids = BTreeSet::new();
        for s in &raw.sas {
            if !sas_ids.insert(s.id.clone()) {
                return Err(invalid(format!("duplicate sas id {:?}", s.id)));
            }
            let location = NodeId(s.location);
            if !graph.contains(location) {
                return Err(invalid(format!("sas {:?}: unknown node {}", s.id, s.location)));
            }
            if !matches!(graph.role(location), NodeRole::SurveillancePoint) {
                return Err(invalid(format!(
                    "sas {:?}: node {} is not a surveillance point",
                    s.id, s.location
                )));
            }
            if s.server_list.is_empty() {
                return Err(invalid(format!("sas {:?}: empty server list", s.id)));
            }
            for server in &s.server_list {
                if !server_ids.contains(server) {
                    return Err(invalid(format!(
                        "sas {:?}: unknown server {server:?}",
                        s.id
                    )));
                }
            }
            if !(s.detection_threshold > 0.0) {
                return Err(invalid(format!("sas {:?}: threshold must be positive", s.id)));
            }
            let config = SasConfig {
                id: SasId(s.id.clone()),
                location,
                detection_threshold: s.detection_threshold,
                server_list: s.server_list.iter().cloned().map(ServerId).collect(),
                ping_timeout: units_to_milli(s.ping_timeout.unwrap_or(5.0), "sas ping_timeout")?,
                max_retries: s.max_retries.unwrap_or(3).max(1),
                dedup_window: units_to_milli(s.dedup_window.unwrap_or(10.0), "sas dedup_window")?,
            };
            let mut batches = Vec::new();
            for b in &s.sensors {
                let time = units_to_milli(b.time, "sensor batch time")?;
                let readings = b
                    .readings
                    .iter()
                    .map(|r| {
                        if !r.magnitude.is_finite() || r.magnitude < 0.0 {
                            return Err(invalid(format!(
                                "sas {:?}: bad magnitude {}",
                                s.id, r.magnitude
                            )));
                        }
                        Ok(SensorReading {
                            sas_id: config.id.clone(),
                            sensor_id: r.sensor.clone(),
                            location,
                            hazard: Hazard(r.hazard.clone()),
                            magnitude: r.magnitude,
                            timestamp: time,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                batches.push(SensorBatchSpec { time, readings });
            }
            // Every hazard this unit can raise must map to dispatchable
            // service types.
            for b in &batches {
                for r in &b.readings {
                    if !hazard_services.contains_key(&r.hazard) {
                        require_known_type(&r.hazard.0).map_err(|_| {
                            invalid(format!(
                                "hazard {:?} is not in hazard_services and no service type of \
                                 that name exists",
                                r.hazard
                            ))
                        })?;
                    }
                }
            }
            sas.push(SasSpec { config, batches });
        }

        let mut policies = BTreeMap::new();
        for p in &raw.services {
            let node = NodeId(p.node);
            if !graph.contains(node) {
                return Err(invalid(format!("services: unknown node {}", p.node)));
            }
            if !matches!(graph.role(node), NodeRole::InterventionService { .. }) {
                return Err(invalid(format!(
                    "services: node {} is not an intervention service",
                    p.node
                )));
            }
            if policies.contains_key(&node) {
                return Err(invalid(format!("services: duplicate policy for node {}", p.node)));
            }
            let accept = match &p.accept_probability {
                None => AcceptProbability::default(),
                Some(RawAccept::Uniform(v)) => {
                    check_probability(*v, "accept_probability")?;
                    AcceptProbability::uniform(*v)
                }
                Some(RawAccept::PerSeverity { low, medium, high }) => {
                    let a = AcceptProbability {
                        low: low.unwrap_or(1.0),
                        medium: medium.unwrap_or(1.0),
                        high: high.unwrap_or(1.0),
                    };
                    for v in [a.low, a.medium, a.high] {
                        check_probability(v, "accept_probability")?;
                    }
                    a
                }
            };
            let request_on_arrival = p
                .request_on_arrival
                .iter()
                .map(|t| require_known_type(t))
                .collect::<Result<Vec<_>, _>>()?;
            policies.insert(
                node,
                ServicePolicy {
                    service: node,
                    accept,
                    local_compute: p.local_compute.unwrap_or(false),
                    decision_latency: units_to_milli(
                        p.decision_latency.unwrap_or(1.0),
                        "service decision_latency",
                    )?,
                    request_on_arrival,
                },
            );
        }

        let drop_probability = raw.network.drop_probability.unwrap_or(0.0);
        check_probability(drop_probability, "network.drop_probability")?;
        let default_latency =
            units_to_milli(raw.network.default_latency.unwrap_or(1.0), "network.default_latency")?;
        if default_latency == 0 {
            return Err(invalid("network.default_latency must be at least 0.001"));
        }
        let mut links = Vec::new();
        for link in &raw.network.links {
            let latency = units_to_milli(link.latency, "link latency")?;
            if latency == 0 {
                return Err(invalid("link latency must be at least 0.001"));
            }
            links.push((parse_actor(&link.from)?, parse_actor(&link.to)?, latency));
        }
        let network = NetworkSpec {
            default_latency,
            drop_probability,
            links,
        };

        let mut faults = Vec::new();
        for f in &raw.faults {
            let time = units_to_milli(f.time, "fault time")?;
            let edge_of = |pair: &Option<(u32, u32)>| -> Result<EdgeKey, ScenarioError> {
                let (u, v) = pair.ok_or_else(|| invalid("fault: missing `edge`"))?;
                let (u, v) = (NodeId(u), NodeId(v));
                if !graph.contains(u) || !graph.contains(v) || u == v {
                    return Err(invalid(format!("fault: bad edge ({u}, {v})")));
                }
                Ok(EdgeKey::new(u, v))
            };
            let kind = match f.kind.as_str() {
                "block" => FaultKind::Block(edge_of(&f.edge)?),
                "unblock" => FaultKind::Unblock(edge_of(&f.edge)?),
                "graph_update" => {
                    let raw_edits = f
                        .edits
                        .as_ref()
                        .ok_or_else(|| invalid("graph_update fault: missing `edits`"))?;
                    let mut edits = Vec::new();
                    for e in raw_edits {
                        let (u, v) = (NodeId(e.u), NodeId(e.v));
                        if !graph.contains(u) || !graph.contains(v) || u == v {
                            return Err(invalid(format!("graph_update: bad edge ({u}, {v})")));
                        }
                        match e.op.as_str() {
                            "set" => {
                                let w = e
                                    .weight
                                    .ok_or_else(|| invalid("set edit: missing `weight`"))?;
                                let weight =
                                    Cost(units_to_milli(w, "edit weight")?);
                                edits.push(GraphEdit::Set { u, v, weight });
                            }
                            "remove" => edits.push(GraphEdit::Remove { u, v }),
                            other => {
                                return Err(invalid(format!("graph_update: unknown op {other:?}")))
                            }
                        }
                    }
                    FaultKind::GraphUpdate(edits)
                }
                other => return Err(invalid(format!("fault: unknown kind {other:?}"))),
            };
            faults.push(FaultSpec { time, kind });
        }

        Ok(Scenario {
            graph,
            servers,
            sas,
            policies,
            network,
            faults,
            limits,
            hazard_services,
        })
    }
}

fn check_probability(v: f64, what: &str) -> Result<(), ScenarioError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(invalid(format!("{what}: {v} outside [0, 1]")));
    }
    Ok(())
}
