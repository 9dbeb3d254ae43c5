//! Versioned per-server cache of shortest-path results keyed by incident
//! location. A lookup hits only when the stored graph version matches the
//! current one; stale entries are evicted on sight. Capacity is enforced
//! by LRU eviction.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::sssp::SsspResult;
use crate::SimTime;

/// One cached run. Constructed from the result itself so the key/version
/// always agree with it.
#[derive(Clone, Debug)]
pub struct CacheEntry {
    pub key: NodeId,
    pub result: Arc<SsspResult>,
    pub graph_version: u64,
    pub last_used: SimTime,
}

impl CacheEntry {
    pub fn new(result: Arc<SsspResult>, now: SimTime) -> CacheEntry {
        CacheEntry {
            key: result.source,
            graph_version: result.graph_version,
            result,
            last_used: now,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
    pub invalidations: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CacheError {
    #[error("invalidation version {requested} behind already-seen version {seen}")]
    VersionRegression { requested: u64, seen: u64 },
}

/// LRU map from incident location to the latest result for it.
#[derive(Debug)]
pub struct PathCache {
    capacity: usize,
    entries: HashMap<u32, (CacheEntry, u64)>,
    recency: BTreeMap<u64, u32>,
    next_touch: u64,
    max_version_seen: u64,
    stats: CacheStats,
}

impl PathCache {
    pub fn new(capacity: usize) -> PathCache {
        PathCache {
            capacity,
            entries: HashMap::new(),
            recency: BTreeMap::new(),
            next_touch: 0,
            max_version_seen: 0,
            stats: CacheStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    fn touch(&mut self, key: u32) -> u64 {
        let stamp = self.next_touch;
        self.next_touch += 1;
        self.recency.insert(stamp, key);
        stamp
    }

    fn remove(&mut self, key: u32) -> Option<CacheEntry> {
        let (entry, stamp) = self.entries.remove(&key)?;
        self.recency.remove(&stamp);
        Some(entry)
    }

    /// Hit iff an entry for `key` exists at exactly `current_version`.
    /// An entry at any other version counts as a miss and is dropped.
    pub fn lookup(
        &mut self,
        key: NodeId,
        current_version: u64,
        now: SimTime,
    ) -> Option<CacheEntry> {
        match self.entries.get(&key.0) {
            Some((entry, _)) if entry.graph_version == current_version => {
                self.stats.hits += 1;
                let (mut entry, stamp) = self.entries.remove(&key.0).unwrap();
                self.recency.remove(&stamp);
                entry.last_used = now;
                let stamp = self.touch(key.0);
                self.entries.insert(key.0, (entry.clone(), stamp));
                Some(entry)
            }
            Some(_) => {
                self.stats.misses += 1;
                self.remove(key.0);
                self.stats.evictions += 1;
                None
            }
            None => {
                self.stats.misses += 1;
                None
            }
        }
    }

    /// Inserts or replaces the entry for its key, evicting the least
    /// recently used entry when over capacity.
    pub fn insert(&mut self, entry: CacheEntry) {
        self.max_version_seen = self.max_version_seen.max(entry.graph_version);
        self.remove(entry.key.0);
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() >= self.capacity {
            if let Some((_, victim)) = self.recency.iter().next().map(|(s, k)| (*s, *k)) {
                self.remove(victim);
                self.stats.evictions += 1;
            }
        }
        let key = entry.key.0;
        let stamp = self.touch(key);
        self.entries.insert(key, (entry, stamp));
    }

    /// Drops every entry older than `new_version`; returns how many.
    pub fn invalidate_all(&mut self, new_version: u64) -> Result<usize, CacheError> {
        if new_version < self.max_version_seen {
            return Err(CacheError::VersionRegression {
                requested: new_version,
                seen: self.max_version_seen,
            });
        }
        self.max_version_seen = new_version;
        let stale: Vec<u32> = self
            .entries
            .iter()
            .filter(|(_, (e, _))| e.graph_version < new_version)
            .map(|(k, _)| *k)
            .collect();
        let count = stale.len();
        for key in stale {
            self.remove(key);
        }
        self.stats.invalidations += count as u64;
        Ok(count)
    }
}
