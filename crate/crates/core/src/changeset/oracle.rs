use std::collections::{BTreeSet, HashMap};

use super::Changeset;
use crate::{Error, NodeId, Result};

/// Output of [`naive_belady`]: `states[i]` is `C[i+1]`, sorted ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleRun {
    pub states: Vec<Vec<NodeId>>,
    pub changesets: Vec<Changeset>,
    pub misses: Vec<u64>,
}

/// Reference implementation of the iteration-granular Belady recurrence.
///
/// Next accesses are found by scanning forward through the remaining
/// iterations, so the cost is quadratic in the number of iterations. Shares
/// only the tie-break with the indexed simulator: smaller next access, then
/// incumbents, then lower id.
pub fn naive_belady(
    trace: &[Vec<NodeId>],
    num_entries: usize,
    init: &[NodeId],
) -> Result<OracleRun> {
    let mut state: BTreeSet<NodeId> = BTreeSet::new();
    for &v in init {
        if !state.insert(v) {
            return Err(Error::InvalidArgument(format!("duplicate init node {v}")));
        }
    }
    if state.len() > num_entries {
        return Err(Error::InvalidArgument("init set exceeds capacity".into()));
    }

    let mut run = OracleRun::default();
    for (i, ids) in trace.iter().enumerate() {
        let batch: BTreeSet<NodeId> = ids.iter().copied().collect();
        if batch.len() != ids.len() {
            return Err(Error::TraceMismatch(format!(
                "duplicate id in iteration {i}"
            )));
        }
        run.misses
            .push(ids.iter().filter(|v| !state.contains(v)).count() as u64);

        let candidates: BTreeSet<NodeId> = state.union(&batch).copied().collect();
        let mut next: HashMap<NodeId, u64> = HashMap::with_capacity(candidates.len());
        let mut unresolved = candidates.len();
        for (j, future) in trace.iter().enumerate().skip(i + 1) {
            if unresolved == 0 {
                break;
            }
            for v in future {
                if candidates.contains(v) && !next.contains_key(v) {
                    next.insert(*v, j as u64);
                    unresolved -= 1;
                }
            }
        }

        let mut ranked: Vec<(u64, u8, NodeId)> = candidates
            .iter()
            .map(|&v| {
                let when = next.get(&v).copied().unwrap_or(u64::MAX);
                (when, if state.contains(&v) { 0 } else { 1 }, v)
            })
            .collect();
        ranked.sort();
        let new_state: BTreeSet<NodeId> = ranked.iter().take(num_entries).map(|r| r.2).collect();

        let mut cs = Changeset::default();
        for (pos, v) in ids.iter().enumerate() {
            if new_state.contains(v) && !state.contains(v) {
                cs.in_ids.push(*v);
                cs.in_positions.push(pos as u64);
            }
        }
        cs.out_ids = state.difference(&new_state).copied().collect();

        run.states.push(new_state.iter().copied().collect());
        run.changesets.push(cs);
        state = new_state;
    }
    Ok(run)
}

/// Largest instance [`dp_optimal_misses`] accepts.
pub const DP_MAX_NODES: usize = 10;
pub const DP_MAX_ITERATIONS: usize = 16;

/// Minimum total misses over every admissible cache-state sequence starting
/// from an empty cache, where `C[i+1] ⊆ C[i] ∪ ids[i]` and
/// `|C[i+1]| <= num_entries`. Exhaustive over subsets of the distinct nodes.
pub fn dp_optimal_misses(trace: &[Vec<NodeId>], num_entries: usize) -> Result<u64> {
    let mut distinct: Vec<NodeId> = trace.iter().flatten().copied().collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() > DP_MAX_NODES || trace.len() > DP_MAX_ITERATIONS {
        return Err(Error::TooLarge(format!(
            "{} distinct nodes over {} iterations (limit {DP_MAX_NODES} nodes, {DP_MAX_ITERATIONS} iterations)",
            distinct.len(),
            trace.len()
        )));
    }
    let bit = |v: &NodeId| 1u32 << distinct.binary_search(v).unwrap();

    let full = 1usize << distinct.len();
    let mut best = vec![u64::MAX; full];
    best[0] = 0;
    for ids in trace {
        let batch = ids.iter().fold(0u32, |m, v| m | bit(v));
        if batch.count_ones() as usize != ids.len() {
            return Err(Error::TraceMismatch(
                "duplicate id within an iteration".into(),
            ));
        }
        let mut next = vec![u64::MAX; full];
        for (state, &cost) in best.iter().enumerate() {
            if cost == u64::MAX {
                continue;
            }
            let state = state as u32;
            let cost = cost + u64::from((batch & !state).count_ones());
            let union = state | batch;
            // every subset of the union, including the empty one
            let mut sub = union;
            loop {
                if sub.count_ones() as usize <= num_entries && cost < next[sub as usize] {
                    next[sub as usize] = cost;
                }
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & union;
            }
        }
        best = next;
    }
    Ok(best.into_iter().min().unwrap_or(0))
}
