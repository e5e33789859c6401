use super::{check_iteration, Trace};
use crate::{Error, NodeId, Result};

/// Flag on the first entry of every node's region in `iters`.
pub const REGION_START: u64 = 1 << 63;
const ITER_MASK: u64 = REGION_START - 1;
/// Terminal entry of `iters`. Its masked value exceeds every valid iteration.
pub const DUMMY: u64 = u64::MAX;

/// Per-node sorted access iterations of one superbatch, stored CSR-style.
///
/// `iters[ptr[v]..]` lists the iterations that access `v`, ascending; the
/// first entry of each non-empty region carries [`REGION_START`], and a single
/// [`DUMMY`] entry closes the array. A cursor that steps off the end of its
/// node's region lands on a flagged entry (the next region's start or the
/// dummy), which is how "never accessed again" is detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessIndex {
    iters: Vec<u64>,
    ptr: Vec<u64>,
}

/// First pass: number of iterations that access each node.
pub fn count_pass<T: Trace + ?Sized>(trace: &T, num_nodes: u64) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; num_nodes as usize];
    let mut stamp = vec![0u64; num_nodes as usize];
    for i in 0..trace.num_iterations() {
        let ids = trace.iteration(i)?;
        check_iteration(&ids, i, &mut stamp)?;
        for &id in ids.iter() {
            counts[id as usize] += 1;
        }
    }
    Ok(counts)
}

/// Exclusive prefix sum of `counts`: the start of each node's region.
pub fn build_ptr(counts: &[u64]) -> Vec<u64> {
    let mut ptr = Vec::with_capacity(counts.len());
    let mut acc = 0u64;
    for &c in counts {
        ptr.push(acc);
        acc += c;
    }
    ptr
}

/// Second pass: fills every node's region with its access iterations, then
/// flags region starts and appends the dummy.
pub fn build_iters<T: Trace + ?Sized>(
    trace: &T,
    ptr: &[u64],
    counts: &[u64],
) -> Result<AccessIndex> {
    if ptr.len() != counts.len() {
        return Err(Error::InvalidArgument(
            "ptr and counts lengths differ".into(),
        ));
    }
    let iterations = trace.num_iterations() as u64;
    if iterations > ITER_MASK {
        return Err(Error::InvalidArgument(format!(
            "{iterations} iterations exceed the 63-bit iteration field"
        )));
    }
    let total: u64 = counts.iter().sum();
    let mut iters = vec![0u64; total as usize + 1];
    let mut cursor = ptr.to_vec();
    let region_end = |v: usize| ptr[v] + counts[v];

    for i in 0..trace.num_iterations() {
        let ids = trace.iteration(i)?;
        for &id in ids.iter() {
            let v = id as usize;
            if v >= cursor.len() || cursor[v] >= region_end(v) {
                return Err(Error::TraceMismatch(format!(
                    "node {id} at iteration {i} exceeds its counted accesses"
                )));
            }
            iters[cursor[v] as usize] = i as u64;
            cursor[v] += 1;
        }
    }
    if let Some(v) = (0..cursor.len()).find(|&v| cursor[v] != region_end(v)) {
        return Err(Error::TraceMismatch(format!(
            "node {v} has fewer accesses than counted"
        )));
    }

    iters[total as usize] = DUMMY;
    for (v, &start) in ptr.iter().enumerate() {
        if counts[v] > 0 {
            iters[start as usize] |= REGION_START;
        }
    }
    Ok(AccessIndex {
        iters,
        ptr: ptr.to_vec(),
    })
}

impl AccessIndex {
    /// Runs the count, prefix-sum and fill passes over `trace`.
    pub fn build<T: Trace + ?Sized>(trace: &T, num_nodes: u64) -> Result<AccessIndex> {
        let counts = count_pass(trace, num_nodes)?;
        let ptr = build_ptr(&counts);
        build_iters(trace, &ptr, &counts)
    }

    pub fn iters(&self) -> &[u64] {
        &self.iters
    }

    pub fn ptr(&self) -> &[u64] {
        &self.ptr
    }

    pub fn num_nodes(&self) -> u64 {
        self.ptr.len() as u64
    }

    pub fn dummy_index(&self) -> u64 {
        self.iters.len() as u64 - 1
    }

    /// Number of iterations accessing `node`.
    pub fn access_count(&self, node: NodeId) -> u64 {
        let v = node as usize;
        let end = self.ptr.get(v + 1).copied().unwrap_or(self.dummy_index());
        end - self.ptr[v]
    }

    /// Iteration number stored at `iters[pos]`, region flag stripped.
    pub fn iteration_at(&self, pos: u64) -> u64 {
        self.iters[pos as usize] & ITER_MASK
    }

    pub fn is_region_start(&self, pos: u64) -> bool {
        self.iters[pos as usize] & REGION_START != 0
    }

    /// Accesses of `node` in order, flags stripped.
    pub fn accesses(&self, node: NodeId) -> Vec<u64> {
        let start = self.ptr[node as usize];
        (start..start + self.access_count(node))
            .map(|p| self.iteration_at(p))
            .collect()
    }
}

/// Masked value of the dummy: the next access of a node never used again.
pub const NEVER: u64 = ITER_MASK;

/// Per-node cursors into an [`AccessIndex`], always pointing at each node's
/// next access at or after the current iteration.
#[derive(Debug, Clone)]
pub struct NextAccessCursor<'a> {
    index: &'a AccessIndex,
    cursor: Vec<u64>,
}

impl<'a> NextAccessCursor<'a> {
    pub fn new(index: &'a AccessIndex) -> Self {
        Self {
            index,
            cursor: index.ptr.clone(),
        }
    }

    /// Consumes `node`'s access at iteration `i`: steps past it, and jumps to
    /// the dummy if the next entry belongs to another region.
    pub fn advance(&mut self, node: NodeId, i: u64) -> Result<()> {
        let v = node as usize;
        let pos = self.cursor[v];
        if self.index.access_count(node) == 0 || self.index.iteration_at(pos) != i {
            return Err(Error::TraceMismatch(format!(
                "node {node} accessed at iteration {i} but the index expects {}",
                self.index.iteration_at(pos)
            )));
        }
        let next = pos + 1;
        self.cursor[v] = if self.index.is_region_start(next) {
            self.index.dummy_index()
        } else {
            next
        };
        Ok(())
    }

    /// Iteration of `node`'s next access, or [`NEVER`].
    ///
    /// A node not yet accessed in this superbatch points at its own flagged
    /// region start, so the flag is always masked off.
    pub fn next_access(&self, node: NodeId) -> u64 {
        self.index.iteration_at(self.cursor[node as usize])
    }

    pub fn position(&self, node: NodeId) -> u64 {
        self.cursor[node as usize]
    }
}
