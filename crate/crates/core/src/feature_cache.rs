//! Executor-side feature cache.
//!
//! `num_entries` feature rows live in one contiguous buffer. A full-length
//! address table maps each node to its row (`-1` when absent), so lookup is a
//! single index. Rows only enter the cache from the batch buffer that was
//! just gathered: a changeset's `in_positions` say where each incoming row
//! sits in that buffer, so insertion never touches the disk.

use rayon::prelude::*;

use crate::changeset::Changeset;
use crate::store::{FeatureStore, IoStats, RowMatrix};
use crate::{Error, NodeId, Result};

const ABSENT: i64 = -1;

/// Hit and miss counts of one gather.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatherCounts {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone)]
pub struct FeatureCache {
    address_table: Vec<i64>,
    rows: RowMatrix,
    free_slots: Vec<usize>,
}

impl FeatureCache {
    /// Cache with every slot free.
    pub fn empty(num_nodes: u64, num_entries: usize, dim: usize) -> Self {
        Self {
            address_table: vec![ABSENT; num_nodes as usize],
            rows: RowMatrix::zeros(num_entries, dim),
            // popped from the back, so slot 0 is handed out first
            free_slots: (0..num_entries).rev().collect(),
        }
    }

    /// Reads the rows of `init_ids` from `store`; row `k` holds `init_ids[k]`.
    pub fn init(
        store: &FeatureStore,
        init_ids: &[NodeId],
        num_entries: usize,
        stats: &IoStats,
    ) -> Result<Self> {
        if init_ids.len() > num_entries {
            return Err(Error::InvalidArgument(format!(
                "{} init ids exceed {num_entries} cache entries",
                init_ids.len()
            )));
        }
        let mut cache = Self::empty(store.num_nodes(), num_entries, store.dim());
        for (slot, &id) in init_ids.iter().enumerate() {
            let entry = cache.entry_mut(id)?;
            if *entry != ABSENT {
                return Err(Error::InvalidArgument(format!("duplicate init id {id}")));
            }
            *entry = slot as i64;
        }
        cache.free_slots.truncate(num_entries - init_ids.len());

        let dim = store.dim();
        if dim > 0 {
            cache.rows.as_mut_slice()[..init_ids.len() * dim]
                .par_chunks_mut(dim)
                .zip(init_ids.par_iter())
                .try_for_each(|(row, &id)| store.read_row_into(id, row, stats))?;
        }
        Ok(cache)
    }

    pub fn num_entries(&self) -> usize {
        self.rows.num_rows()
    }

    pub fn len(&self) -> usize {
        self.num_entries() - self.free_slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cached row of `node`, if resident.
    pub fn lookup(&self, node: NodeId) -> Option<&[f32]> {
        match self.address_table.get(node as usize) {
            Some(&slot) if slot >= 0 => Some(self.rows.row(slot as usize)),
            _ => None,
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.address_table
            .get(node as usize)
            .is_some_and(|&s| s >= 0)
    }

    /// Resident nodes, ascending.
    pub fn resident_set(&self) -> Vec<NodeId> {
        self.address_table
            .iter()
            .enumerate()
            .filter(|(_, &s)| s >= 0)
            .map(|(v, _)| v as NodeId)
            .collect()
    }

    /// Row of the batch buffer for every id, in order: hits copied from the
    /// cache, misses read from `store` by parallel workers into their own rows.
    pub fn gather(
        &self,
        store: &FeatureStore,
        ids: &[NodeId],
        stats: &IoStats,
    ) -> Result<(RowMatrix, GatherCounts)> {
        let num_nodes = self.address_table.len() as u64;
        let mut hits = 0u64;
        for &id in ids {
            if id >= num_nodes {
                return Err(Error::NodeOutOfRange {
                    node: id,
                    num_nodes,
                });
            }
            hits += u64::from(self.address_table[id as usize] >= 0);
        }
        let dim = store.dim();
        let mut batch = RowMatrix::zeros(ids.len(), dim);
        if dim > 0 {
            batch
                .as_mut_slice()
                .par_chunks_mut(dim)
                .zip(ids.par_iter())
                .try_for_each(|(row, &id)| match self.lookup(id) {
                    Some(cached) => {
                        row.copy_from_slice(cached);
                        Ok(())
                    }
                    None => store.read_row_into(id, row, stats),
                })?;
        }
        let counts = GatherCounts {
            hits,
            misses: ids.len() as u64 - hits,
        };
        Ok((batch, counts))
    }

    /// Applies one changeset. Incoming rows are copied from `batch` (the
    /// buffer gathered for `ids`) into the slots released by `out_ids`, in
    /// order, then into free slots. Validates everything before mutating.
    pub fn apply_changeset(
        &mut self,
        batch: &RowMatrix,
        ids: &[NodeId],
        cs: &Changeset,
    ) -> Result<()> {
        cs.check_positions(ids)?;
        if batch.num_rows() != ids.len() {
            return Err(Error::Changeset(format!(
                "batch has {} rows for {} ids",
                batch.num_rows(),
                ids.len()
            )));
        }
        for &out in &cs.out_ids {
            if !self.contains(out) {
                return Err(Error::Changeset(format!("out_id {out} is not cached")));
            }
        }
        let mut outgoing = cs.out_ids.clone();
        outgoing.sort_unstable();
        if outgoing.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Changeset("repeated out_id".into()));
        }
        for &id in &cs.in_ids {
            if self.contains(id) {
                return Err(Error::Changeset(format!("in_id {id} is already cached")));
            }
        }
        let available = self.free_slots.len() + cs.out_ids.len();
        if cs.in_ids.len() > available {
            return Err(Error::Changeset(format!(
                "{} insertions but only {available} slots available",
                cs.in_ids.len()
            )));
        }

        let mut released: Vec<usize> = Vec::with_capacity(cs.out_ids.len());
        for &out in &cs.out_ids {
            let entry = &mut self.address_table[out as usize];
            released.push(*entry as usize);
            *entry = ABSENT;
        }
        let mut released = released.into_iter();
        for (&id, &pos) in cs.in_ids.iter().zip(&cs.in_positions) {
            let slot = match released.next() {
                Some(s) => s,
                None => self
                    .free_slots
                    .pop()
                    .expect("slot availability checked above"),
            };
            self.rows
                .row_mut(slot)
                .copy_from_slice(batch.row(pos as usize));
            self.address_table[id as usize] = slot as i64;
        }
        // evicted slots not refilled become free
        self.free_slots.extend(released);
        Ok(())
    }

    fn entry_mut(&mut self, node: NodeId) -> Result<&mut i64> {
        let num_nodes = self.address_table.len() as u64;
        self.address_table
            .get_mut(node as usize)
            .ok_or(Error::NodeOutOfRange { node, num_nodes })
    }

    /// Slot currently holding `node`.
    pub fn slot_of(&self, node: NodeId) -> Option<usize> {
        self.address_table
            .get(node as usize)
            .filter(|&&s| s >= 0)
            .map(|&s| s as usize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::write_features;

    fn store(n: u64, dim: u32) -> (tempfile::TempDir, FeatureStore) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("features.bin");
        write_features(&p, n, dim, |v, row| {
            for (j, x) in row.iter_mut().enumerate() {
                *x = v as f32 * 100.0 + j as f32;
            }
        })
        .unwrap();
        let s = FeatureStore::open(&p).unwrap();
        (dir, s)
    }

    #[test]
    fn empty_init_misses_everything() {
        let (_d, s) = store(10, 4);
        let c = FeatureCache::init(&s, &[], 3, &IoStats::new()).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.free_slots.len(), 3);
        assert!((0..10).all(|v| !c.contains(v)));
    }

    #[test]
    fn init_counts_prefetch_pages() {
        let (_d, s) = store(10, 768);
        let stats = IoStats::new();
        let c = FeatureCache::init(&s, &[4, 1, 2], 5, &stats).unwrap();
        assert_eq!(c.resident_set(), vec![1, 2, 4]);
        assert_eq!(c.slot_of(4), Some(0));
        assert_eq!(c.lookup(1).unwrap()[3], 103.0);
        let expected: u64 = [4, 1, 2].iter().map(|&v| s.pages_for(v)).sum();
        assert_eq!(stats.snapshot().pages_read, expected);
    }

    #[test]
    fn init_errors() {
        let (_d, s) = store(10, 4);
        let st = IoStats::new();
        assert!(FeatureCache::init(&s, &[1, 1], 3, &st).is_err());
        assert!(FeatureCache::init(&s, &[10], 3, &st).is_err());
        assert!(FeatureCache::init(&s, &[1, 2], 1, &st).is_err());
    }

    #[test]
    fn gather_mixes_hits_and_reads() {
        let (_d, s) = store(10, 1024);
        let c = FeatureCache::init(&s, &[0, 1, 4, 6, 7], 5, &IoStats::new()).unwrap();
        let stats = IoStats::new();
        let ids = [0, 2, 5, 7];
        let (batch, counts) = c.gather(&s, &ids, &stats).unwrap();
        assert_eq!(counts, GatherCounts { hits: 2, misses: 2 });
        assert_eq!(stats.snapshot().pages_read, 2);
        assert!(batch.bit_eq(&s.read_feature_rows(&ids, &IoStats::new()).unwrap()));

        let stats = IoStats::new();
        c.gather(&s, &[0, 7], &stats).unwrap();
        assert_eq!(stats.snapshot().pages_read, 0);
        assert!(c.gather(&s, &[10], &stats).is_err());
    }

    #[test]
    fn changeset_reuses_evicted_slots() {
        let (_d, s) = store(10, 4);
        let mut c = FeatureCache::init(&s, &[0, 1, 4, 6, 7], 5, &IoStats::new()).unwrap();
        let ids = [0, 2, 5, 7];
        let (batch, _) = c.gather(&s, &ids, &IoStats::new()).unwrap();
        let cs = Changeset {
            in_ids: vec![2, 5],
            out_ids: vec![0, 6],
            in_positions: vec![1, 2],
        };
        c.apply_changeset(&batch, &ids, &cs).unwrap();
        assert_eq!(c.slot_of(2), Some(0));
        assert_eq!(c.slot_of(5), Some(3));
        assert_eq!(c.resident_set(), vec![1, 2, 4, 5, 7]);
        assert_eq!(c.lookup(5).unwrap(), batch.row(2));
    }

    #[test]
    fn empty_changeset_is_noop_and_free_list_used() {
        let (_d, s) = store(10, 4);
        let mut c = FeatureCache::init(&s, &[3], 2, &IoStats::new()).unwrap();
        let before = c.clone();
        let ids = [9];
        let (batch, _) = c.gather(&s, &ids, &IoStats::new()).unwrap();
        c.apply_changeset(&batch, &ids, &Changeset::default())
            .unwrap();
        assert_eq!(c.address_table, before.address_table);

        let cs = Changeset {
            in_ids: vec![9],
            out_ids: vec![],
            in_positions: vec![0],
        };
        c.apply_changeset(&batch, &ids, &cs).unwrap();
        assert_eq!(c.slot_of(9), Some(1));
        assert!(c.free_slots.is_empty());
    }

    #[test]
    fn invalid_changesets_leave_cache_untouched() {
        let (_d, s) = store(10, 4);
        let mut c = FeatureCache::init(&s, &[0, 1], 2, &IoStats::new()).unwrap();
        let ids = [0, 2];
        let (batch, _) = c.gather(&s, &ids, &IoStats::new()).unwrap();
        let snapshot = c.address_table.clone();
        let bad = [
            // out_id not cached
            Changeset {
                in_ids: vec![2],
                out_ids: vec![5],
                in_positions: vec![1],
            },
            // in_id already cached
            Changeset {
                in_ids: vec![0],
                out_ids: vec![1],
                in_positions: vec![0],
            },
            // position mismatch
            Changeset {
                in_ids: vec![2],
                out_ids: vec![1],
                in_positions: vec![0],
            },
            // no slot available
            Changeset {
                in_ids: vec![2],
                out_ids: vec![],
                in_positions: vec![1],
            },
        ];
        for cs in &bad {
            assert!(c.apply_changeset(&batch, &ids, cs).is_err());
            assert_eq!(c.address_table, snapshot);
        }
    }
}
