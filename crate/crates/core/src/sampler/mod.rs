//! Multi-layer uniform neighborhood sampling.
//!
//! Each batch expands its seeds layer by layer: every node of the current
//! frontier draws `min(fanout, in_degree)` distinct in-neighbors uniformly
//! without replacement (partial Fisher-Yates over its sorted list). The next
//! frontier is the set of distinct nodes drawn in this layer. Sampling is a
//! pure function of the batch seed, so results do not depend on which worker
//! ran the batch or whether neighbor lists came from cache or disk.

mod plan;
mod stage;

pub use plan::{plan_seed_batches, select_training_nodes, SeedPlan};
pub use stage::{superbatch_sample, SampleStageReport};

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::runtime::Adjacency;
use crate::store::{IoStats, NeighborSource};
use crate::{Error, NodeId, Result};

/// Per-layer sample counts, outermost layer first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fanouts(Vec<usize>);

impl Fanouts {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "fanouts must be non-empty and positive, got {counts:?}"
            )));
        }
        Ok(Self(counts))
    }

    pub fn layers(&self) -> &[usize] {
        &self.0
    }
}

/// Result of sampling one mini-batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleOutput {
    /// Distinct sampled nodes: seeds first, then discovery order.
    pub ids: Vec<NodeId>,
    /// Per layer, `(child_local, parent_local)` for every sampled edge.
    pub adj: Adjacency,
}

/// Deterministic 64-bit mixing of two seeds (splitmix64 finalizer).
pub fn mix_seed(a: u64, b: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(splitmix(a) ^ b)
}

pub fn sample_batch<S: NeighborSource + ?Sized>(
    source: &S,
    seeds: &[NodeId],
    fanouts: &Fanouts,
    batch_seed: u64,
    stats: &IoStats,
) -> Result<SampleOutput> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("empty seed batch".into()));
    }
    let num_nodes = source.num_nodes();
    let mut local: HashMap<NodeId, u32> = HashMap::with_capacity(seeds.len() * 4);
    let mut ids = Vec::with_capacity(seeds.len() * 4);
    for &s in seeds {
        if s >= num_nodes {
            return Err(Error::NodeOutOfRange { node: s, num_nodes });
        }
        if local.insert(s, ids.len() as u32).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate seed {s}")));
        }
        ids.push(s);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(batch_seed);
    let mut frontier: Vec<NodeId> = seeds.to_vec();
    let mut adj = Vec::with_capacity(fanouts.layers().len());
    let mut scratch = Vec::new();
    let mut in_next: HashMap<NodeId, ()> = HashMap::new();

    for &fanout in fanouts.layers() {
        let mut edges = Vec::new();
        let mut next = Vec::new();
        in_next.clear();
        for &parent in &frontier {
            source.in_neighbors_into(parent, &mut scratch, stats)?;
            let take = fanout.min(scratch.len());
            for j in 0..take {
                let r = rng.gen_range(j..scratch.len());
                scratch.swap(j, r);
            }
            let parent_local = local[&parent];
            for &child in &scratch[..take] {
                let child_local = match local.entry(child) {
                    Entry::Occupied(e) => *e.get(),
                    Entry::Vacant(e) => {
                        let idx = ids.len() as u32;
                        ids.push(child);
                        *e.insert(idx)
                    }
                };
                edges.push((child_local, parent_local));
                if in_next.insert(child, ()).is_none() {
                    next.push(child);
                }
            }
        }
        adj.push(edges);
        frontier = next;
    }

    Ok(SampleOutput { ids, adj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighbor_cache::{CachedNeighbors, NeighborCache};
    use crate::store::build_csc;

    fn fan(v: &[usize]) -> Fanouts {
        Fanouts::new(v.to_vec()).unwrap()
    }

    #[test]
    fn fanouts_validated() {
        assert!(Fanouts::new(vec![]).is_err());
        assert!(Fanouts::new(vec![10, 0]).is_err());
        assert_eq!(fan(&[25, 10]).layers(), &[25, 10]);
    }

    #[test]
    fn fanout_above_degree_takes_all() {
        let g = build_csc(&[(2, 1), (3, 1)], 4).unwrap();
        let out = sample_batch(&g, &[1], &fan(&[3]), 7, &IoStats::new()).unwrap();
        let mut ids = out.ids.clone();
        ids.sort();
        assert_eq!(ids, vec![1, 2, 3]);
        assert_eq!(out.ids[0], 1);
        assert_eq!(out.adj[0].len(), 2);
    }

    #[test]
    fn no_edges_yields_seeds_only() {
        let g = build_csc(&[], 5).unwrap();
        let out = sample_batch(&g, &[3, 0], &fan(&[10, 10]), 1, &IoStats::new()).unwrap();
        assert_eq!(out.ids, vec![3, 0]);
        assert!(out.adj.iter().all(|l| l.is_empty()));
        assert_eq!(out.adj.len(), 2);
    }

    #[test]
    fn errors_on_bad_seeds() {
        let g = build_csc(&[], 5).unwrap();
        let s = IoStats::new();
        assert!(sample_batch(&g, &[], &fan(&[1]), 0, &s).is_err());
        assert!(matches!(
            sample_batch(&g, &[5], &fan(&[1]), 0, &s),
            Err(Error::NodeOutOfRange { node: 5, .. })
        ));
        assert!(sample_batch(&g, &[1, 1], &fan(&[1]), 0, &s).is_err());
    }

    #[test]
    fn respects_cap_and_true_neighbors() {
        let edges: Vec<_> = (0..200u64)
            .flat_map(|v| (1..=(v % 17)).map(move |d| ((v * 7 + d * 13) % 200, v)))
            .collect();
        let g = build_csc(&edges, 200).unwrap();
        let out = sample_batch(&g, &[0, 50, 199], &fan(&[4, 3]), 99, &IoStats::new()).unwrap();
        for (layer, cap) in out.adj.iter().zip([4usize, 3]) {
            let mut per_parent: HashMap<u32, Vec<u64>> = HashMap::new();
            for &(c, p) in layer {
                per_parent.entry(p).or_default().push(out.ids[c as usize]);
            }
            for (p, children) in per_parent {
                let parent = out.ids[p as usize];
                let truth = g.in_neighbors(parent);
                assert_eq!(children.len(), cap.min(truth.len()));
                assert!(children.iter().all(|c| truth.contains(c)));
            }
        }
    }

    #[test]
    fn cache_transparency() {
        let edges: Vec<_> = (0..300u64)
            .map(|i| ((i * 31) % 300, (i * 7 + 1) % 300))
            .collect();
        let g = build_csc(&edges, 300).unwrap();
        let cache = NeighborCache::build(&g, 300 * 8 + 2000).unwrap();
        assert!(cache.cached_nodes() > 0);
        let cached = CachedNeighbors {
            cache: &cache,
            source: &g,
        };
        let a = sample_batch(&g, &[1, 2, 3], &fan(&[5, 5]), 42, &IoStats::new()).unwrap();
        let b = sample_batch(&cached, &[1, 2, 3], &fan(&[5, 5]), 42, &IoStats::new()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mix_seed_separates_inputs() {
        assert_ne!(mix_seed(1, 2), mix_seed(2, 1));
        assert_ne!(mix_seed(0, 0), mix_seed(0, 1));
        assert_eq!(mix_seed(5, 9), mix_seed(5, 9));
    }
}
