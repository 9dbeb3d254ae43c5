//! Independent reference implementations used only by test suites (behind
//! the `test-oracles` feature). None of these share code with the engines
//! they check.

use std::collections::VecDeque;

use crate::graph::{CityGraph, NodeId};
use crate::SimTime;

const INF: u64 = u64::MAX;

/// All-pairs shortest distances by Floyd-Warshall, milli-units with
/// `u64::MAX` for unreachable. Row-major n*n.
pub fn floyd_warshall(graph: &CityGraph) -> Vec<u64> {
    let n = graph.n();
    let mut dist = vec![INF; n * n];
    for u in 0..n {
        for v in 0..n {
            dist[u * n + v] = graph.weight_milli(u, v);
        }
        dist[u * n + u] = 0;
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i * n + k];
            if dik == INF {
                continue;
            }
            for j in 0..n {
                let through = dik.saturating_add(dist[k * n + j]);
                if through < dist[i * n + j] {
                    dist[i * n + j] = through;
                }
            }
        }
    }
    dist
}

/// Minimum path cost from `source` to every vertex by exhaustive
/// enumeration of simple paths (depth-first with a sound bound: a prefix
/// whose cost already matches or exceeds every still-improvable best
/// cannot help). Only feasible for small n.
pub fn enumerate_simple_paths_min(graph: &CityGraph, source: NodeId) -> Vec<u64> {
    let n = graph.n();
    let mut best = vec![INF; n];
    best[source.index()] = 0;
    let mut on_path = vec![false; n];
    on_path[source.index()] = true;
    fn dfs(
        graph: &CityGraph,
        at: usize,
        cost: u64,
        on_path: &mut Vec<bool>,
        best: &mut Vec<u64>,
    ) {
        let n = graph.n();
        // Prune when no unvisited vertex can still be improved.
        if !(0..n).any(|v| !on_path[v] && cost < best[v]) {
            return;
        }
        for v in 0..n {
            if on_path[v] {
                continue;
            }
            let w = graph.weight_milli(at, v);
            if w == INF {
                continue;
            }
            let total = cost.saturating_add(w);
            if total < best[v] {
                best[v] = total;
            }
            on_path[v] = true;
            dfs(graph, v, total, on_path, best);
            on_path[v] = false;
        }
    }
    dfs(graph, source.index(), 0, &mut on_path, &mut best);
    best
}

/// Breadth-first reachability check: is the graph connected?
pub fn bfs_connected(graph: &CityGraph) -> bool {
    let n = graph.n();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if !seen[v] && graph.weight_milli(u, v) != INF {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

/// Reference model for the path cache: a plain vector ordered by recency,
/// with the same observable contract (version-exact hits, stale eviction,
/// LRU capacity eviction, monotone invalidation).
pub struct ReferenceLru {
    capacity: usize,
    /// (key, version), most recently used last.
    entries: Vec<(u32, u64)>,
    max_version_seen: u64,
}

impl ReferenceLru {
    pub fn new(capacity: usize) -> ReferenceLru {
        ReferenceLru {
            capacity,
            entries: Vec::new(),
            max_version_seen: 0,
        }
    }

    pub fn lookup(&mut self, key: NodeId, current_version: u64, _now: SimTime) -> bool {
        match self.entries.iter().position(|(k, _)| *k == key.0) {
            Some(idx) if self.entries[idx].1 == current_version => {
                let e = self.entries.remove(idx);
                self.entries.push(e);
                true
            }
            Some(idx) => {
                self.entries.remove(idx);
                false
            }
            None => false,
        }
    }

    pub fn insert(&mut self, key: NodeId, version: u64) {
        self.max_version_seen = self.max_version_seen.max(version);
        if let Some(idx) = self.entries.iter().position(|(k, _)| *k == key.0) {
            self.entries.remove(idx);
        }
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() >= self.capacity {
            self.entries.remove(0);
        }
        self.entries.push((key.0, version));
    }

    pub fn invalidate_all(&mut self, new_version: u64) -> Option<usize> {
        if new_version < self.max_version_seen {
            return None;
        }
        self.max_version_seen = new_version;
        let before = self.entries.len();
        self.entries.retain(|(_, v)| *v >= new_version);
        Some(before - self.entries.len())
    }
}
