//! Simulated network: per-link latency with a configurable default, and
//! seeded per-link loss streams so that adding a link or actor to a
//! scenario does not perturb the drop decisions of the others.

use std::collections::BTreeMap;

use crate::protocol::ActorId;
use crate::rng::DetRng;
use crate::SimTime;

#[derive(Clone, Debug)]
pub struct NetworkSpec {
    pub default_latency: u64,
    pub drop_probability: f64,
    pub links: Vec<(ActorId, ActorId, u64)>,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            default_latency: 1000,
            drop_probability: 0.0,
            links: Vec::new(),
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum Delivery {
    At(SimTime),
    Dropped,
}

pub struct NetworkModel {
    default_latency: u64,
    drop_probability: f64,
    latencies: BTreeMap<(ActorId, ActorId), u64>,
    seed: u64,
    streams: BTreeMap<(ActorId, ActorId), DetRng>,
}

impl NetworkModel {
    pub fn new(spec: &NetworkSpec, seed: u64) -> NetworkModel {
        let latencies = spec
            .links
            .iter()
            .map(|(from, to, latency)| ((from.clone(), to.clone()), *latency))
            .collect();
        NetworkModel {
            default_latency: spec.default_latency,
            drop_probability: spec.drop_probability,
            latencies,
            seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn latency(&self, from: &ActorId, to: &ActorId) -> u64 {
        self.latencies
            .get(&(from.clone(), to.clone()))
            .copied()
            .unwrap_or(self.default_latency)
    }

    /// Decides one transmission: delivery time or a drop. Consumes exactly
    /// one draw from the link's stream either way.
    pub fn decide(&mut self, from: &ActorId, to: &ActorId, now: SimTime) -> Delivery {
        let key = (from.clone(), to.clone());
        let seed = self.seed;
        let rng = self
            .streams
            .entry(key)
            .or_insert_with(|| DetRng::substream(seed, &format!("link:{from}->{to}")));
        if rng.chance(self.drop_probability) {
            Delivery::Dropped
        } else {
            Delivery::At(now + self.latency(from, to))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{SasId, ServerId};

    fn actors() -> (ActorId, ActorId) {
        (
            ActorId::Sas(SasId("sas-1".into())),
            ActorId::Server(ServerId("edge-a".into())),
        )
    }

    #[test]
    fn zero_drop_always_delivers_at_latency() {
        let (a, b) = actors();
        let spec = NetworkSpec {
            default_latency: 1000,
            drop_probability: 0.0,
            links: vec![(a.clone(), b.clone(), 2500)],
        };
        let mut net = NetworkModel::new(&spec, 7);
        assert_eq!(net.decide(&a, &b, 10), Delivery::At(2510));
        // Reverse direction uses the default.
        assert_eq!(net.decide(&b, &a, 10), Delivery::At(1010));
    }

    #[test]
    fn full_drop_always_drops() {
        let (a, b) = actors();
        let spec = NetworkSpec {
            drop_probability: 1.0,
            ..NetworkSpec::default()
        };
        let mut net = NetworkModel::new(&spec, 7);
        for _ in 0..100 {
            assert_eq!(net.decide(&a, &b, 0), Delivery::Dropped);
        }
    }

    #[test]
    fn empirical_drop_rate_tracks_probability() {
        let (a, b) = actors();
        let spec = NetworkSpec {
            drop_probability: 0.3,
            ..NetworkSpec::default()
        };
        let mut net = NetworkModel::new(&spec, 42);
        let n = 10_000;
        let dropped = (0..n)
            .filter(|_| net.decide(&a, &b, 0) == Delivery::Dropped)
            .count();
        let rate = dropped as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn streams_are_deterministic_per_seed() {
        let (a, b) = actors();
        let spec = NetworkSpec {
            drop_probability: 0.5,
            ..NetworkSpec::default()
        };
        let run = |seed: u64| -> Vec<bool> {
            let mut net = NetworkModel::new(&spec, seed);
            (0..64).map(|_| net.decide(&a, &b, 0) == Delivery::Dropped).collect()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }
}
