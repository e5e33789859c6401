//! Inspector-side cache planning.
//!
//! Given the sampled ids of every iteration in a superbatch, this module
//! decides the feature-cache contents at every iteration boundary. The cache
//! state evolves as
//!
//! ```text
//! C[i+1] = the num_entries members of (C[i] ∪ ids[i]) needed soonest
//! ```
//!
//! which is offline-optimal (Belady/MIN) replacement at iteration granularity.
//! Finding "needed soonest" naively rescans the future trace each iteration
//! (quadratic in S); [`AccessIndex`] instead keeps every node's sorted access
//! iterations in one CSR-style array with a per-node cursor, so the whole
//! superbatch is simulated in three linear passes over the trace.
//!
//! [`naive_belady`] and [`dp_optimal_misses`] are independent oracles used to
//! check the fast path: the first recomputes the same recurrence by forward
//! scanning, the second finds the true minimum miss count by exhaustive
//! search over all admissible cache-state sequences.

mod access_index;
mod oracle;
mod simulate;

pub use access_index::{
    build_iters, build_ptr, count_pass, AccessIndex, NextAccessCursor, DUMMY, NEVER, REGION_START,
};
pub use oracle::{dp_optimal_misses, naive_belady, OracleRun};
pub use simulate::{compute_init_set, simulate_changesets, simulate_with, Simulation};

use std::borrow::Cow;

use crate::runtime::{read_ids, RuntimeDir};
use crate::{Error, NodeId, Result};

/// Cache delta applied after gathering one iteration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Changeset {
    /// Nodes entering the cache, in order of their position in the iteration's ids.
    pub in_ids: Vec<NodeId>,
    /// Nodes leaving the cache, ascending.
    pub out_ids: Vec<NodeId>,
    /// `ids[in_positions[k]] == in_ids[k]`.
    pub in_positions: Vec<u64>,
}

impl Changeset {
    pub fn is_empty(&self) -> bool {
        self.in_ids.is_empty() && self.out_ids.is_empty()
    }

    /// Checks the changeset against the ids it was computed for.
    pub fn check_positions(&self, ids: &[NodeId]) -> Result<()> {
        if self.in_ids.len() != self.in_positions.len() {
            return Err(Error::Changeset(
                "in_ids and in_positions lengths differ".into(),
            ));
        }
        for (&id, &pos) in self.in_ids.iter().zip(&self.in_positions) {
            if ids.get(pos as usize) != Some(&id) {
                return Err(Error::Changeset(format!(
                    "in_id {id} not found at position {pos} of the batch ids"
                )));
            }
        }
        Ok(())
    }
}

/// Ordered access trace of one superbatch: `ids` of each iteration.
pub trait Trace {
    fn num_iterations(&self) -> usize;
    fn iteration(&self, i: usize) -> Result<Cow<'_, [NodeId]>>;
}

impl Trace for [Vec<NodeId>] {
    fn num_iterations(&self) -> usize {
        self.len()
    }

    fn iteration(&self, i: usize) -> Result<Cow<'_, [NodeId]>> {
        Ok(Cow::Borrowed(&self[i]))
    }
}

impl Trace for Vec<Vec<NodeId>> {
    fn num_iterations(&self) -> usize {
        self.len()
    }

    fn iteration(&self, i: usize) -> Result<Cow<'_, [NodeId]>> {
        Ok(Cow::Borrowed(&self[i]))
    }
}

/// Trace streamed from a superbatch's `ids_{sb}_{i}.bin` files, one file per load.
#[derive(Debug, Clone)]
pub struct IdsFiles<'a> {
    pub rt: &'a RuntimeDir,
    pub sb: u64,
    pub count: usize,
}

impl Trace for IdsFiles<'_> {
    fn num_iterations(&self) -> usize {
        self.count
    }

    fn iteration(&self, i: usize) -> Result<Cow<'_, [NodeId]>> {
        Ok(Cow::Owned(read_ids(&self.rt.ids_path(self.sb, i))?))
    }
}

/// Rejects ids that are out of range or repeated within one iteration.
/// `stamp` must be `num_nodes` long; it is reused across calls and records
/// `i + 1` for every id seen in iteration `i`.
pub(crate) fn check_iteration(ids: &[NodeId], i: usize, stamp: &mut [u64]) -> Result<()> {
    let num_nodes = stamp.len() as u64;
    let mark = i as u64 + 1;
    for &id in ids {
        if id >= num_nodes {
            return Err(Error::NodeOutOfRange {
                node: id,
                num_nodes,
            });
        }
        let s = &mut stamp[id as usize];
        if *s == mark {
            return Err(Error::TraceMismatch(format!(
                "node {id} appears twice in iteration {i}"
            )));
        }
        *s = mark;
    }
    Ok(())
}
