//! City graph: weighted adjacency matrix over surveillance points,
//! intervention services, and landmarks, plus vertex partitioning for the
//! concurrent engine and generation/loading utilities.
//!
//! The graph is undirected and immutable after construction; edits produce
//! a new graph with a bumped version. Weights are travel times stored as
//! integer milli-units (a file weight of `5.0` is stored as `5000`) so that
//! path-sum comparisons are exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::DetRng;

/// Dense vertex index, stable within a graph version.
#[derive(
    Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Travel cost in milli-units. `INFINITE` marks "unreachable" in distance
/// arrays; edge storage uses the same sentinel for "no edge".
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Cost(pub u64);

impl Cost {
    pub const ZERO: Cost = Cost(0);
    pub const INFINITE: Cost = Cost(u64::MAX);

    #[inline]
    pub fn is_finite(self) -> bool {
        self.0 != u64::MAX
    }

    /// Addition where infinity absorbs; cannot overflow into a fake
    /// finite value because the sentinel is the numeric maximum.
    #[inline]
    pub fn saturating_add(self, other: Cost) -> Cost {
        Cost(self.0.saturating_add(other.0))
    }

    /// Parses a non-negative decimal with at most three fractional digits
    /// ("5", "5.5", "0.001") into milli-units.
    pub fn parse_decimal(s: &str) -> Result<Cost, String> {
        let s = s.trim();
        if s.starts_with('-') {
            return Err(format!("negative weight {s:?}"));
        }
        let (int_part, frac_part) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(format!("empty weight {s:?}"));
        }
        if frac_part.len() > 3 {
            return Err(format!("weight {s:?} is finer than 0.001"));
        }
        let int: u64 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| format!("bad weight {s:?}"))?
        };
        let mut frac: u64 = 0;
        if !frac_part.is_empty() {
            frac = frac_part
                .parse()
                .map_err(|_| format!("bad weight {s:?}"))?;
            for _ in frac_part.len()..3 {
                frac *= 10;
            }
        }
        int.checked_mul(1000)
            .and_then(|m| m.checked_add(frac))
            .filter(|m| *m != u64::MAX)
            .map(Cost)
            .ok_or_else(|| format!("weight {s:?} out of range"))
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.is_finite() {
            return write!(f, "inf");
        }
        let int = self.0 / 1000;
        let frac = self.0 % 1000;
        if frac == 0 {
            write!(f, "{int}")
        } else {
            let mut digits = format!("{frac:03}");
            while digits.ends_with('0') {
                digits.pop();
            }
            write!(f, "{int}.{digits}")
        }
    }
}

/// Category tag for an intervention service (e.g. "fire", "medical").
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceType(String);

impl ServiceType {
    pub fn new(s: &str) -> Result<ServiceType, String> {
        if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == ':') {
            return Err(format!("invalid service type {s:?}"));
        }
        Ok(ServiceType(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ServiceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// What a vertex is in the city model. The service tag exists exactly for
/// intervention services.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeRole {
    SurveillancePoint,
    InterventionService { service_type: ServiceType },
    Landmark,
}

/// A single edit applied by [`CityGraph::with_edits`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GraphEdit {
    Set { u: NodeId, v: NodeId, weight: Cost },
    Remove { u: NodeId, v: NodeId },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Validation(String),
    #[error("node {node} out of range for graph with {n} vertices")]
    InvalidNode { node: u32, n: usize },
    #[error("duplicate edge ({u}, {v}) with conflicting weight")]
    ConflictingEdge { u: u32, v: u32 },
    #[error("worker count {p} invalid for {n} vertices")]
    BadPartition { p: usize, n: usize },
    #[error("infeasible generation parameters: {0}")]
    Infeasible(String),
}

const NO_EDGE: u64 = u64::MAX;

/// Weighted undirected city graph held as a full adjacency matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CityGraph {
    n: usize,
    /// Row-major n*n matrix; `NO_EDGE` where no edge, 0 on the diagonal.
    weights: Vec<u64>,
    roles: Vec<NodeRole>,
    version: u64,
}

impl CityGraph {
    fn empty(n: usize) -> CityGraph {
        let mut weights = vec![NO_EDGE; n * n];
        for i in 0..n {
            weights[i * n + i] = 0;
        }
        CityGraph {
            n,
            weights,
            roles: vec![NodeRole::Landmark; n],
            version: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.n
    }

    /// Edge weight, `None` when the vertices are not adjacent.
    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<Cost> {
        let w = self.weights[u.index() * self.n + v.index()];
        (w != NO_EDGE).then_some(Cost(w))
    }

    /// Raw matrix cell: milli-units with `u64::MAX` for "no edge". The
    /// engines use this form directly since the sentinel doubles as the
    /// algorithmic infinity.
    #[inline]
    pub fn weight_milli(&self, u: usize, v: usize) -> u64 {
        self.weights[u * self.n + v]
    }

    /// One full matrix row (incoming columns of every vertex from `u`).
    #[inline]
    pub fn row(&self, u: usize) -> &[u64] {
        &self.weights[u * self.n..(u + 1) * self.n]
    }

    pub fn role(&self, v: NodeId) -> &NodeRole {
        &self.roles[v.index()]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.n as u32).map(NodeId)
    }

    pub fn service_nodes(&self) -> impl Iterator<Item = (NodeId, &ServiceType)> {
        self.roles.iter().enumerate().filter_map(|(i, r)| match r {
            NodeRole::InterventionService { service_type } => {
                Some((NodeId(i as u32), service_type))
            }
            _ => None,
        })
    }

    pub fn surveillance_points(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.roles.iter().enumerate().filter_map(|(i, r)| {
            matches!(r, NodeRole::SurveillancePoint).then_some(NodeId(i as u32))
        })
    }

    /// Undirected edge list with `u < v`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, Cost)> + '_ {
        (0..self.n).flat_map(move |u| {
            (u + 1..self.n).filter_map(move |v| {
                let w = self.weights[u * self.n + v];
                (w != NO_EDGE).then_some((NodeId(u as u32), NodeId(v as u32), Cost(w)))
            })
        })
    }

    fn check_node(&self, v: NodeId) -> Result<(), GraphError> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(GraphError::InvalidNode {
                node: v.0,
                n: self.n,
            })
        }
    }

    fn set_edge(&mut self, u: NodeId, v: NodeId, w: Cost) -> Result<(), GraphError> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(GraphError::Validation(format!("self-loop on node {u}")));
        }
        if !w.is_finite() {
            return Err(GraphError::Validation(format!(
                "non-finite weight on edge ({u}, {v})"
            )));
        }
        self.weights[u.index() * self.n + v.index()] = w.0;
        self.weights[v.index() * self.n + u.index()] = w.0;
        Ok(())
    }

    fn remove_edge(&mut self, u: NodeId, v: NodeId) -> Result<(), GraphError> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(GraphError::Validation(format!("self-loop on node {u}")));
        }
        self.weights[u.index() * self.n + v.index()] = NO_EDGE;
        self.weights[v.index() * self.n + u.index()] = NO_EDGE;
        Ok(())
    }

    /// Parses the line-oriented graph file format:
    ///
    /// ```text
    /// # comment
    /// graph <n>
    /// node <id> <surveillance|service:<type>|landmark>
    /// edge <u> <v> <weight>
    /// ```
    ///
    /// Each `edge` line declares one undirected edge; symmetry is enforced
    /// by mirroring. Nodes without a `node` line are landmarks.
    pub fn from_text(text: &str) -> Result<CityGraph, GraphError> {
        let mut graph: Option<CityGraph> = None;
        let mut seen_edges: BTreeSet<(u32, u32)> = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse =
                |msg: String| GraphError::Parse { line: line_no, msg };
            let mut fields = line.split_whitespace();
            let directive = fields.next().unwrap();
            match directive {
                "graph" => {
                    if graph.is_some() {
                        return Err(parse("duplicate graph header".into()));
                    }
                    let n: usize = fields
                        .next()
                        .ok_or_else(|| parse("missing vertex count".into()))?
                        .parse()
                        .map_err(|_| parse("bad vertex count".into()))?;
                    if n == 0 {
                        return Err(parse("graph must have at least one vertex".into()));
                    }
                    graph = Some(CityGraph::empty(n));
                }
                "node" => {
                    let g = graph
                        .as_mut()
                        .ok_or_else(|| parse("node line before graph header".into()))?;
                    let id: u32 = fields
                        .next()
                        .ok_or_else(|| parse("missing node id".into()))?
                        .parse()
                        .map_err(|_| parse("bad node id".into()))?;
                    let role_text = fields
                        .next()
                        .ok_or_else(|| parse("missing node role".into()))?;
                    let node = NodeId(id);
                    g.check_node(node)?;
                    let role = match role_text {
                        "surveillance" => NodeRole::SurveillancePoint,
                        "landmark" => NodeRole::Landmark,
                        s => match s.strip_prefix("service:") {
                            Some(t) => NodeRole::InterventionService {
                                service_type: ServiceType::new(t).map_err(parse)?,
                            },
                            None => return Err(parse(format!("unknown role {s:?}"))),
                        },
                    };
                    g.roles[node.index()] = role;
                }
                "edge" => {
                    let g = graph
                        .as_mut()
                        .ok_or_else(|| parse("edge line before graph header".into()))?;
                    let u: u32 = fields
                        .next()
                        .ok_or_else(|| parse("missing edge endpoint".into()))?
                        .parse()
                        .map_err(|_| parse("bad edge endpoint".into()))?;
                    let v: u32 = fields
                        .next()
                        .ok_or_else(|| parse("missing edge endpoint".into()))?
                        .parse()
                        .map_err(|_| parse("bad edge endpoint".into()))?;
                    let w_text = fields
                        .next()
                        .ok_or_else(|| parse("missing edge weight".into()))?;
                    let w = Cost::parse_decimal(w_text)
                        .map_err(|m| GraphError::Validation(format!("line {line_no}: {m}")))?;
                    let key = (u.min(v), u.max(v));
                    if !seen_edges.insert(key) {
                        let existing = g.weight(NodeId(u), NodeId(v));
                        if existing != Some(w) {
                            return Err(GraphError::ConflictingEdge { u: key.0, v: key.1 });
                        }
                        continue;
                    }
                    g.set_edge(NodeId(u), NodeId(v), w)?;
                }
                other => return Err(parse(format!("unknown directive {other:?}"))),
            }
            if let Some(extra) = fields.next() {
                return Err(GraphError::Parse {
                    line: line_no,
                    msg: format!("trailing token {extra:?}"),
                });
            }
        }
        graph.ok_or(GraphError::Parse {
            line: 0,
            msg: "missing graph header".into(),
        })
    }

    /// Serializes back to the file format; `from_text(g.to_text())`
    /// reproduces the graph.
    pub fn to_text(&self) -> String {
        let mut out = format!("graph {}\n", self.n);
        for v in self.nodes() {
            let role = match self.role(v) {
                NodeRole::SurveillancePoint => "surveillance".to_string(),
                NodeRole::InterventionService { service_type } => format!("service:{service_type}"),
                NodeRole::Landmark => "landmark".to_string(),
            };
            out.push_str(&format!("node {v} {role}\n"));
        }
        for (u, v, w) in self.edges() {
            out.push_str(&format!("edge {u} {v} {w}\n"));
        }
        out
    }

    /// Applies a batch of edits, returning a new graph with `version + 1`.
    /// Symmetry is preserved; an empty batch still bumps the version.
    pub fn with_edits(&self, edits: &[GraphEdit]) -> Result<CityGraph, GraphError> {
        let mut next = self.clone();
        for edit in edits {
            match *edit {
                GraphEdit::Set { u, v, weight } => next.set_edge(u, v, weight)?,
                GraphEdit::Remove { u, v } => next.remove_edge(u, v)?,
            }
        }
        next.version = self.version + 1;
        Ok(next)
    }

    /// Scratch copy with the given edges removed and the version kept, for
    /// route recomputation around observed obstructions. Unknown edges are
    /// ignored.
    pub fn with_edges_removed<I>(&self, edges: I) -> CityGraph
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut next = self.clone();
        for (u, v) in edges {
            if u != v && next.contains(u) && next.contains(v) {
                next.weights[u.index() * self.n + v.index()] = NO_EDGE;
                next.weights[v.index() * self.n + u.index()] = NO_EDGE;
            }
        }
        next
    }

    /// Generates a connected city deterministically from a seed: a random
    /// spanning tree plus extra edges up to the requested density, weights
    /// uniform in [0.5, 10.0]. Service roles are placed per
    /// `service_counts`; a quarter of the remaining nodes (at least one)
    /// become surveillance points and the rest landmarks.
    pub fn generate(
        n: usize,
        density: f64,
        service_counts: &BTreeMap<ServiceType, usize>,
        seed: u64,
    ) -> Result<CityGraph, GraphError> {
        if n == 0 {
            return Err(GraphError::Infeasible("n must be positive".into()));
        }
        if !(density > 0.0 && density <= 1.0) {
            return Err(GraphError::Infeasible(format!(
                "density {density} outside (0, 1]"
            )));
        }
        let total_services: usize = service_counts.values().sum();
        if total_services + 1 > n {
            return Err(GraphError::Infeasible(format!(
                "{total_services} service nodes plus a surveillance point exceed {n} vertices"
            )));
        }
        let mut rng = DetRng::substream(seed, "citygen");
        let mut graph = CityGraph::empty(n);

        let mut order: Vec<u32> = (0..n as u32).collect();
        rng.shuffle(&mut order);
        let mut cursor = 0usize;
        for (service_type, count) in service_counts {
            for _ in 0..*count {
                graph.roles[order[cursor] as usize] = NodeRole::InterventionService {
                    service_type: service_type.clone(),
                };
                cursor += 1;
            }
        }
        let surveillance = ((n - total_services) / 4).max(1);
        for _ in 0..surveillance {
            graph.roles[order[cursor] as usize] = NodeRole::SurveillancePoint;
            cursor += 1;
        }

        let mut perm: Vec<u32> = (0..n as u32).collect();
        rng.shuffle(&mut perm);
        let mut random_weight = |rng: &mut DetRng| Cost(rng.range_u64(500, 10_001));
        for i in 1..n {
            let parent = perm[rng.range_usize(0, i)];
            let w = random_weight(&mut rng);
            graph.set_edge(NodeId(perm[i]), NodeId(parent), w).unwrap();
        }

        let max_edges = n * (n - 1) / 2;
        let target = ((density * max_edges as f64).round() as usize).max(n.saturating_sub(1));
        let mut absent: Vec<(u32, u32)> = Vec::new();
        for u in 0..n as u32 {
            for v in u + 1..n as u32 {
                if graph.weight(NodeId(u), NodeId(v)).is_none() {
                    absent.push((u, v));
                }
            }
        }
        rng.shuffle(&mut absent);
        let extra = target.saturating_sub(n.saturating_sub(1)).min(absent.len());
        for &(u, v) in absent.iter().take(extra) {
            let w = random_weight(&mut rng);
            graph.set_edge(NodeId(u), NodeId(v), w).unwrap();
        }
        Ok(graph)
    }
}

/// Contiguous near-equal vertex blocks, one per worker. The first
/// `n mod p` blocks take the extra vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    p: usize,
    blocks: Vec<std::ops::Range<u32>>,
}

impl Partition {
    pub fn new(n: usize, p: usize) -> Result<Partition, GraphError> {
        if p == 0 || p > n {
            return Err(GraphError::BadPartition { p, n });
        }
        let base = n / p;
        let extra = n % p;
        let mut blocks = Vec::with_capacity(p);
        let mut start = 0u32;
        for i in 0..p {
            let size = base + usize::from(i < extra);
            let end = start + size as u32;
            blocks.push(start..end);
            start = end;
        }
        Ok(Partition { p, blocks })
    }

    pub fn workers(&self) -> usize {
        self.p
    }

    pub fn blocks(&self) -> &[std::ops::Range<u32>] {
        &self.blocks
    }

    pub fn block(&self, worker: usize) -> std::ops::Range<u32> {
        self.blocks[worker].clone()
    }

    /// Index of the unique worker whose block contains `v`.
    pub fn owner(&self, v: NodeId) -> usize {
        self.blocks
            .partition_point(|b| b.end <= v.0)
            .min(self.p - 1)
    }
}
