use super::access_index::NextAccessCursor;
use super::{check_iteration, AccessIndex, Changeset, Trace};
use crate::{Error, NodeId, Result};

/// Initial cache contents: first occurrences in trace order until
/// `num_entries` distinct nodes are collected.
pub fn compute_init_set<T: Trace + ?Sized>(
    trace: &T,
    num_entries: usize,
    num_nodes: u64,
) -> Result<Vec<NodeId>> {
    let mut seen = vec![false; num_nodes as usize];
    let mut init = Vec::with_capacity(num_entries);
    for i in 0..trace.num_iterations() {
        if init.len() >= num_entries {
            break;
        }
        let ids = trace.iteration(i)?;
        for &id in ids.iter() {
            if init.len() >= num_entries {
                break;
            }
            let slot = seen.get_mut(id as usize).ok_or(Error::NodeOutOfRange {
                node: id,
                num_nodes,
            })?;
            if !*slot {
                *slot = true;
                init.push(id);
            }
        }
    }
    Ok(init)
}

/// Per-iteration outcome of a simulation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Simulation {
    pub changesets: Vec<Changeset>,
    /// `|ids[i] \ C[i]|` for every iteration.
    pub misses: Vec<u64>,
}

impl Simulation {
    pub fn total_misses(&self) -> u64 {
        self.misses.iter().sum()
    }
}

/// Selection key: next access first, then incumbents before newcomers, then
/// lower id. All keys are distinct because ids are.
type Key = (u64, bool, NodeId);

/// Simulates the superbatch and collects every changeset and miss count.
pub fn simulate_changesets<T: Trace + ?Sized>(
    index: &AccessIndex,
    trace: &T,
    num_entries: usize,
    init: &[NodeId],
) -> Result<Simulation> {
    let mut sim = Simulation::default();
    simulate_with(index, trace, num_entries, init, |_, cs, misses, _| {
        sim.changesets.push(cs.clone());
        sim.misses.push(misses);
        Ok(())
    })?;
    Ok(sim)
}

/// Streams the simulation: after iteration `i` is decided, calls
/// `visit(i, changeset, misses_i, resident)` where `resident` is `C[i+1]`
/// (unordered).
///
/// Cost per iteration is linear in `|C[i]| + |ids[i]|` (plus sorting the
/// changeset itself); there is no scan of future iterations.
pub fn simulate_with<T, F>(
    index: &AccessIndex,
    trace: &T,
    num_entries: usize,
    init: &[NodeId],
    mut visit: F,
) -> Result<()>
where
    T: Trace + ?Sized,
    F: FnMut(usize, &Changeset, u64, &[NodeId]) -> Result<()>,
{
    let num_nodes = index.num_nodes();
    if init.len() > num_entries {
        return Err(Error::InvalidArgument(format!(
            "init set of {} exceeds capacity {num_entries}",
            init.len()
        )));
    }
    let mut resident = vec![false; num_nodes as usize];
    let mut state: Vec<NodeId> = Vec::with_capacity(num_entries);
    for &v in init {
        if v >= num_nodes {
            return Err(Error::NodeOutOfRange { node: v, num_nodes });
        }
        if index.access_count(v) == 0 {
            return Err(Error::TraceMismatch(format!(
                "init node {v} is never accessed in this superbatch"
            )));
        }
        if std::mem::replace(&mut resident[v as usize], true) {
            return Err(Error::InvalidArgument(format!("duplicate init node {v}")));
        }
        state.push(v);
    }

    let mut cursor = NextAccessCursor::new(index);
    let mut stamp = vec![0u64; num_nodes as usize];
    let mut candidates: Vec<(Key, u32)> = Vec::new();

    for i in 0..trace.num_iterations() {
        let ids = trace.iteration(i)?;
        check_iteration(&ids, i, &mut stamp)?;

        let mut misses = 0u64;
        for &id in ids.iter() {
            if !resident[id as usize] {
                misses += 1;
            }
            cursor.advance(id, i as u64)?;
        }

        // Candidates are C[i] followed by the newcomers of ids[i]; newcomers
        // remember their position for in_positions.
        candidates.clear();
        candidates.extend(
            state
                .iter()
                .map(|&v| ((cursor.next_access(v), false, v), u32::MAX)),
        );
        candidates.extend(
            ids.iter()
                .enumerate()
                .filter(|(_, &id)| !resident[id as usize])
                .map(|(pos, &id)| ((cursor.next_access(id), true, id), pos as u32)),
        );

        if candidates.len() > num_entries {
            if num_entries == 0 {
                candidates.clear();
            } else {
                candidates.select_nth_unstable_by_key(num_entries - 1, |c| c.0);
                candidates.truncate(num_entries);
            }
        }

        let mut cs = Changeset::default();
        let mut incoming: Vec<(u32, NodeId)> = Vec::new();
        let mut kept = vec![];
        for &((_, newcomer, v), pos) in &candidates {
            if newcomer {
                incoming.push((pos, v));
            } else {
                kept.push(v);
            }
        }
        for &v in &state {
            resident[v as usize] = false;
        }
        for &v in &kept {
            resident[v as usize] = true;
        }
        cs.out_ids = state
            .iter()
            .copied()
            .filter(|&v| !resident[v as usize])
            .collect();
        cs.out_ids.sort_unstable();

        incoming.sort_unstable();
        for &(pos, v) in &incoming {
            resident[v as usize] = true;
            cs.in_ids.push(v);
            cs.in_positions.push(pos as u64);
        }

        state.clear();
        state.extend(candidates.iter().map(|c| c.0 .2));
        visit(i, &cs, misses, &state)?;
    }
    Ok(())
}
