//! Reference cache policies evaluated on the same access traces as the
//! optimal planner: no cache, a fixed set of the highest out-degree nodes,
//! and per-access LRU.

use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use lru::LruCache;
use serde::{Deserialize, Serialize};

use crate::changeset::{compute_init_set, simulate_with, AccessIndex, Trace};
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    None,
    StaticDegree,
    Lru,
    Belady,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Belady,
        Policy::StaticDegree,
        Policy::Lru,
        Policy::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::None => "none",
            Policy::StaticDegree => "static_degree",
            Policy::Lru => "lru",
            Policy::Belady => "belady",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub policy: Policy,
    pub capacity: usize,
    pub per_iteration_misses: Vec<u64>,
    pub total_accesses: u64,
    pub miss_ratio: f64,
}

impl PolicyResult {
    fn new(
        policy: Policy,
        capacity: usize,
        per_iteration_misses: Vec<u64>,
        total_accesses: u64,
    ) -> Self {
        let misses: u64 = per_iteration_misses.iter().sum();
        let miss_ratio = if total_accesses == 0 {
            0.0
        } else {
            misses as f64 / total_accesses as f64
        };
        Self {
            policy,
            capacity,
            per_iteration_misses,
            total_accesses,
            miss_ratio,
        }
    }

    pub fn total_misses(&self) -> u64 {
        self.per_iteration_misses.iter().sum()
    }
}

/// The `k` nodes of highest out-degree, ties to the lower id, in rank order.
pub fn static_degree_set(out_degrees: &[u64], k: usize) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = (0..out_degrees.len() as NodeId).collect();
    let k = k.min(order.len());
    let key = |&v: &NodeId| (std::cmp::Reverse(out_degrees[v as usize]), v);
    if k < order.len() && k > 0 {
        order.select_nth_unstable_by_key(k - 1, key);
    }
    order.truncate(k);
    order.sort_unstable_by_key(key);
    order
}

/// Replays `trace` under `policy` with `capacity` entries and counts misses.
///
/// `lru` starts cold. `static_degree` starts with its fixed set and `belady`
/// with the first-occurrence prefetch set, as the pipeline loads them before
/// the first batch; prefetch reads are not counted as misses.
/// `out_degrees` is required for `static_degree`.
pub fn simulate_policy<T: Trace + ?Sized>(
    trace: &T,
    num_nodes: u64,
    capacity: usize,
    policy: Policy,
    out_degrees: Option<&[u64]>,
) -> Result<PolicyResult> {
    let mut misses = Vec::with_capacity(trace.num_iterations());
    let mut total = 0u64;
    match policy {
        Policy::None => {
            for i in 0..trace.num_iterations() {
                let n = trace.iteration(i)?.len() as u64;
                total += n;
                misses.push(n);
            }
        }
        Policy::StaticDegree => {
            let degrees = out_degrees
                .ok_or_else(|| Error::InvalidArgument("static_degree needs out-degrees".into()))?;
            if degrees.len() as u64 != num_nodes {
                return Err(Error::InvalidArgument(format!(
                    "{} out-degrees for {num_nodes} nodes",
                    degrees.len()
                )));
            }
            let mut resident = vec![false; num_nodes as usize];
            for v in static_degree_set(degrees, capacity) {
                resident[v as usize] = true;
            }
            for i in 0..trace.num_iterations() {
                let ids = trace.iteration(i)?;
                total += ids.len() as u64;
                let mut m = 0;
                for &id in ids.iter() {
                    let hit = resident.get(id as usize).ok_or(Error::NodeOutOfRange {
                        node: id,
                        num_nodes,
                    })?;
                    m += u64::from(!hit);
                }
                misses.push(m);
            }
        }
        Policy::Lru => {
            let mut cache = NonZeroUsize::new(capacity).map(LruCache::<NodeId, ()>::new);
            for i in 0..trace.num_iterations() {
                let ids = trace.iteration(i)?;
                total += ids.len() as u64;
                let mut m = 0;
                for &id in ids.iter() {
                    if id >= num_nodes {
                        return Err(Error::NodeOutOfRange {
                            node: id,
                            num_nodes,
                        });
                    }
                    match cache.as_mut() {
                        Some(c) => {
                            if c.get(&id).is_none() {
                                m += 1;
                                c.put(id, ());
                            }
                        }
                        None => m += 1,
                    }
                }
                misses.push(m);
            }
        }
        Policy::Belady => {
            let index = AccessIndex::build(trace, num_nodes)?;
            let init = compute_init_set(trace, capacity, num_nodes)?;
            simulate_with(&index, trace, capacity, &init, |i, _, m, _| {
                total += trace.iteration(i)?.len() as u64;
                misses.push(m);
                Ok(())
            })?;
        }
    }
    Ok(PolicyResult::new(policy, capacity, misses, total))
}
