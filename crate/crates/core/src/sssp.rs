//! Single-source shortest path engines.
//!
//! Two implementations that must agree exactly:
//!
//! * [`dijkstra_sequential`] — the classic iterative algorithm over the
//!   adjacency matrix, also used by intervention teams for onboard route
//!   recomputation.
//! * [`dijkstra_parallel`] — `p` workers, each owning a contiguous vertex
//!   block of the partitioned matrix. Every round each worker reports its
//!   local frontier minimum to worker 0, which reduces them to the global
//!   minimum and broadcasts the settled vertex back; workers then relax
//!   their owned vertices.
//!
//! Both engines settle the source first, break distance ties by lowest
//! vertex id in the local and global selection alike, and stop when the
//! frontier is exhausted. This makes distance arrays, predecessor arrays,
//! and settling-order traces identical between the two, which the test
//! suites assert bit-for-bit.

use std::ops::Range;
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{CityGraph, Cost, NodeId, Partition, ServiceType};

const INF: u64 = u64::MAX;

/// Output of one engine run: distances and shortest-path-tree parents
/// from a single source, stamped with the graph version it was computed on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SsspResult {
    pub source: NodeId,
    pub dist: Vec<Cost>,
    pub pred: Vec<Option<NodeId>>,
    pub graph_version: u64,
}

impl SsspResult {
    pub fn distance(&self, v: NodeId) -> Cost {
        self.dist[v.index()]
    }

    pub fn reachable(&self, v: NodeId) -> bool {
        self.dist[v.index()].is_finite()
    }
}

/// A worker's local frontier minimum; no vertex exactly when every owned
/// unsettled vertex is still at infinite distance.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct FrontierCandidate {
    pub vertex: Option<NodeId>,
    pub distance: Cost,
}

impl FrontierCandidate {
    fn none() -> Self {
        FrontierCandidate {
            vertex: None,
            distance: Cost::INFINITE,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("source {source} out of range for graph with {n} vertices")]
    InvalidSource { source: NodeId, n: usize },
    #[error("target {target} out of range for graph with {n} vertices")]
    InvalidTarget { target: NodeId, n: usize },
    #[error("worker count {p} invalid for {n} vertices")]
    BadWorkerCount { p: usize, n: usize },
    #[error("result computed on graph version {result} but graph is at version {graph}")]
    VersionMismatch { result: u64, graph: u64 },
}

/// One worker's slice of the run: its owned vertex range, the matching
/// distance/predecessor slices, and access to the incoming weight columns
/// of its owned vertices (a zero-copy view into the shared matrix).
pub struct WorkerView<'g> {
    graph: &'g CityGraph,
    worker: usize,
    range: Range<u32>,
    dist: Vec<u64>,
    pred: Vec<Option<NodeId>>,
    settled: Vec<bool>,
}

impl<'g> WorkerView<'g> {
    fn new(graph: &'g CityGraph, worker: usize, range: Range<u32>, source: NodeId) -> Self {
        let start = range.start as usize;
        let end = range.end as usize;
        let row = graph.row(source.index());
        let dist: Vec<u64> = row[start..end].to_vec();
        let mut pred = vec![None; end - start];
        let mut settled = vec![false; end - start];
        for (offset, d) in dist.iter().enumerate() {
            let v = start + offset;
            if *d != INF && v != source.index() {
                pred[offset] = Some(source);
            }
        }
        if range.contains(&source.0) {
            settled[source.index() - start] = true;
        }
        WorkerView {
            graph,
            worker,
            range,
            dist,
            pred,
            settled,
        }
    }

    pub fn worker_index(&self) -> usize {
        self.worker
    }

    pub fn owned(&self) -> Range<u32> {
        self.range.clone()
    }

    /// Incoming column entry w(from, to) for an owned vertex `to`.
    pub fn incoming_weight(&self, from: NodeId, to: NodeId) -> Option<Cost> {
        debug_assert!(self.range.contains(&to.0));
        self.graph.weight(from, to)
    }

    /// Minimum (distance, vertex) over owned unsettled vertices; ascending
    /// scan with strict comparison realizes the lowest-id tie-break.
    fn local_min(&self) -> (u64, u32) {
        let start = self.range.start;
        let mut best = (INF, u32::MAX);
        for (offset, d) in self.dist.iter().enumerate() {
            if !self.settled[offset] && *d < best.0 {
                best = (*d, start + offset as u32);
            }
        }
        best
    }

    pub fn frontier_candidate(&self) -> FrontierCandidate {
        match self.local_min() {
            (INF, _) => FrontierCandidate::none(),
            (d, v) => FrontierCandidate {
                vertex: Some(NodeId(v)),
                distance: Cost(d),
            },
        }
    }

    /// Marks the globally settled vertex if owned, then relaxes all owned
    /// unsettled vertices against it.
    fn apply_settle(&mut self, u: u32, d_u: u64) {
        let start = self.range.start as usize;
        if self.range.contains(&u) {
            self.settled[u as usize - start] = true;
        }
        let u = u as usize;
        for offset in 0..self.dist.len() {
            if self.settled[offset] {
                continue;
            }
            let w = self.graph.weight_milli(u, start + offset);
            if w == INF {
                continue;
            }
            let candidate = d_u.saturating_add(w);
            if candidate < self.dist[offset] {
                self.dist[offset] = candidate;
                self.pred[offset] = Some(NodeId(u as u32));
            }
        }
    }

    fn into_parts(self) -> (Range<u32>, Vec<u64>, Vec<Option<NodeId>>) {
        (self.range, self.dist, self.pred)
    }
}

/// Classic single-threaded Dijkstra over the adjacency matrix.
pub fn dijkstra_sequential(graph: &CityGraph, source: NodeId) -> Result<SsspResult, EngineError> {
    dijkstra_sequential_traced(graph, source).map(|(r, _)| r)
}

/// As [`dijkstra_sequential`], also returning the settling-order trace
/// (source first, reachable vertices only).
pub fn dijkstra_sequential_traced(
    graph: &CityGraph,
    source: NodeId,
) -> Result<(SsspResult, Vec<NodeId>), EngineError> {
    let n = graph.n();
    if source.index() >= n {
        return Err(EngineError::InvalidSource { source, n });
    }
    let s = source.index();
    let mut dist: Vec<u64> = graph.row(s).to_vec();
    let mut pred: Vec<Option<NodeId>> = vec![None; n];
    for (v, d) in dist.iter().enumerate() {
        if *d != INF && v != s {
            pred[v] = Some(source);
        }
    }
    let mut settled = vec![false; n];
    settled[s] = true;
    let mut trace = vec![source];

    loop {
        let mut best = (INF, u32::MAX);
        for (v, d) in dist.iter().enumerate() {
            if !settled[v] && *d < best.0 {
                best = (*d, v as u32);
            }
        }
        let (d_u, u) = best;
        if d_u == INF {
            break;
        }
        settled[u as usize] = true;
        trace.push(NodeId(u));
        let row = graph.row(u as usize);
        for v in 0..n {
            if settled[v] || row[v] == INF {
                continue;
            }
            let candidate = d_u.saturating_add(row[v]);
            if candidate < dist[v] {
                dist[v] = candidate;
                pred[v] = Some(NodeId(u));
            }
        }
    }

    Ok((
        SsspResult {
            source,
            dist: dist.into_iter().map(Cost).collect(),
            pred,
            graph_version: graph.version(),
        },
        trace,
    ))
}

enum Step {
    Settle { node: u32, dist: u64 },
    Done,
}

/// Concurrent Dijkstra over `p` workers with contiguous vertex blocks.
/// Produces exactly the same distances, predecessors, and settling order
/// as [`dijkstra_sequential`] on the same inputs.
pub fn dijkstra_parallel(
    graph: &CityGraph,
    source: NodeId,
    p: usize,
) -> Result<SsspResult, EngineError> {
    dijkstra_parallel_traced(graph, source, p).map(|(r, _)| r)
}

/// As [`dijkstra_parallel`], also returning the settling-order trace.
pub fn dijkstra_parallel_traced(
    graph: &CityGraph,
    source: NodeId,
    p: usize,
) -> Result<(SsspResult, Vec<NodeId>), EngineError> {
    let n = graph.n();
    if source.index() >= n {
        return Err(EngineError::InvalidSource { source, n });
    }
    let partition = Partition::new(n, p).map_err(|_| EngineError::BadWorkerCount { p, n })?;

    let mut candidate_rxs = Vec::with_capacity(p.saturating_sub(1));
    let mut step_txs = Vec::with_capacity(p.saturating_sub(1));
    let mut worker_ends = Vec::with_capacity(p.saturating_sub(1));
    for worker in 1..p {
        let (cand_tx, cand_rx) = mpsc::channel::<(u64, u32)>();
        let (step_tx, step_rx) = mpsc::channel::<Step>();
        candidate_rxs.push(cand_rx);
        step_txs.push(step_tx);
        worker_ends.push((worker, cand_tx, step_rx));
    }

    let mut trace: Vec<NodeId> = Vec::new();
    let (dist, pred) = thread::scope(|scope| {
        let mut handles = Vec::with_capacity(worker_ends.len());
        for (worker, cand_tx, step_rx) in worker_ends {
            let range = partition.block(worker);
            handles.push(scope.spawn(move || {
                let mut view = WorkerView::new(graph, worker, range, source);
                loop {
                    cand_tx.send(view.local_min()).expect("reducer stopped");
                    match step_rx.recv().expect("reducer stopped") {
                        Step::Settle { node, dist } => view.apply_settle(node, dist),
                        Step::Done => break,
                    }
                }
                view.into_parts()
            }));
        }

        // Worker 0 doubles as the reducer: it collects the per-worker
        // minima in worker-index order (blocks are ascending, so the
        // lexicographic (dist, vertex) reduce keeps the lowest-id tie
        // winner), then broadcasts the settled vertex.
        let mut view0 = WorkerView::new(graph, 0, partition.block(0), source);
        trace.push(source);
        loop {
            let mut best = view0.local_min();
            for rx in &candidate_rxs {
                let c = rx.recv().expect("worker stopped");
                if c < best {
                    best = c;
                }
            }
            let (d_u, u) = best;
            if d_u == INF {
                for tx in &step_txs {
                    tx.send(Step::Done).expect("worker stopped");
                }
                break;
            }
            trace.push(NodeId(u));
            for tx in &step_txs {
                tx.send(Step::Settle { node: u, dist: d_u }).expect("worker stopped");
            }
            view0.apply_settle(u, d_u);
        }

        let mut dist = vec![INF; n];
        let mut pred: Vec<Option<NodeId>> = vec![None; n];
        let mut place = |(range, d, pr): (Range<u32>, Vec<u64>, Vec<Option<NodeId>>)| {
            let start = range.start as usize;
            dist[start..start + d.len()].copy_from_slice(&d);
            pred[start..start + pr.len()].clone_from_slice(&pr);
        };
        place(view0.into_parts());
        for handle in handles {
            place(handle.join().expect("worker panicked"));
        }
        (dist, pred)
    });

    Ok((
        SsspResult {
            source,
            dist: dist.into_iter().map(Cost).collect(),
            pred,
            graph_version: graph.version(),
        },
        trace,
    ))
}

/// Walks the predecessor chain from `target` back to the source and
/// returns the path in source-to-target order; `None` when unreachable.
pub fn extract_path(
    result: &SsspResult,
    target: NodeId,
) -> Result<Option<Vec<NodeId>>, EngineError> {
    let n = result.dist.len();
    if target.index() >= n {
        return Err(EngineError::InvalidTarget { target, n });
    }
    if !result.dist[target.index()].is_finite() {
        return Ok(None);
    }
    let mut path = vec![target];
    let mut cursor = target;
    while cursor != result.source {
        cursor = result.pred[cursor.index()]
            .expect("finite non-source vertex must have a predecessor");
        path.push(cursor);
        assert!(path.len() <= n, "predecessor chain contains a cycle");
    }
    path.reverse();
    Ok(Some(path))
}

/// Sum of edge weights along a path; `None` if a consecutive pair is not
/// an edge. A single-node path costs zero.
pub fn path_cost(graph: &CityGraph, path: &[NodeId]) -> Option<Cost> {
    let mut total = Cost::ZERO;
    for pair in path.windows(2) {
        total = total.saturating_add(graph.weight(pair[0], pair[1])?);
    }
    Some(total)
}

/// A service ranked for dispatch: 1-based priority within its type,
/// ascending by cost with ties broken by node id. `path` runs from the
/// result's source (the incident) to the service node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedService {
    pub node: NodeId,
    pub service_type: ServiceType,
    pub cost: Cost,
    pub rank: u32,
    pub path: Vec<NodeId>,
}

/// Ranks every reachable service of each required type by distance from
/// the result's source. Unreachable services are excluded; types come out
/// in sorted order for determinism.
pub fn rank_services<'a, I>(
    result: &SsspResult,
    graph: &CityGraph,
    required_types: I,
) -> Result<Vec<RankedService>, EngineError>
where
    I: IntoIterator<Item = &'a ServiceType>,
{
    if result.graph_version != graph.version() {
        return Err(EngineError::VersionMismatch {
            result: result.graph_version,
            graph: graph.version(),
        });
    }
    let mut out = Vec::new();
    let mut types: Vec<&ServiceType> = required_types.into_iter().collect();
    types.sort();
    types.dedup();
    for wanted in types {
        let mut candidates: Vec<(Cost, NodeId)> = graph
            .service_nodes()
            .filter(|(node, ty)| *ty == wanted && result.reachable(*node))
            .map(|(node, _)| (result.distance(node), node))
            .collect();
        candidates.sort();
        for (rank0, (cost, node)) in candidates.into_iter().enumerate() {
            let path = extract_path(result, node)?.expect("reachable service has a path");
            out.push(RankedService {
                node,
                service_type: wanted.clone(),
                cost,
                rank: rank0 as u32 + 1,
                path,
            });
        }
    }
    Ok(out)
}
