//! Static cache of in-neighbor lists.
//!
//! Lookup is direct-addressed: `address_table[v]` is either a negative miss
//! marker or the offset of `v`'s region in `cache_array`, where the region is
//! `[count, neighbor_0, .., neighbor_{count-1}]`. A hit costs three reads:
//! the table entry, the count, and the neighbor run.
//!
//! Nodes are admitted in descending order of `out_degree / in_degree`
//! (expected reuse per cached byte) until the byte budget is spent.

use std::cmp::Ordering;
use std::path::Path;

use crate::codec::{read_file, Decoder, Encoder};
use crate::store::{CscGraph, IoStats, NeighborSource};
use crate::{Error, NodeId, Result};

const NCACHE_MAGIC: &[u8; 8] = b"GXNCACH1";
const NCACHE_VERSION: u32 = 1;
/// Bytes per address-table entry and per cache-array element.
pub const ENTRY_BYTES: u64 = 8;
const MISS: i64 = -1;

/// Caching priority of one node: `out_degree / in_degree`, kept as an exact
/// fraction so ordering never depends on float rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Importance {
    pub out_degree: u64,
    pub in_degree: u64,
}

impl Importance {
    pub fn value(&self) -> f64 {
        self.out_degree as f64 / self.in_degree as f64
    }
}

impl Ord for Importance {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = self.out_degree as u128 * other.in_degree as u128;
        let rhs = other.out_degree as u128 * self.in_degree as u128;
        lhs.cmp(&rhs)
    }
}

impl PartialOrd for Importance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Importance of every node; `None` for nodes without in-neighbors.
pub fn score_nodes(graph: &CscGraph) -> Vec<Option<Importance>> {
    graph
        .out_degrees()
        .into_iter()
        .zip(graph.in_degrees())
        .map(|(out_degree, in_degree)| {
            (in_degree > 0).then_some(Importance {
                out_degree,
                in_degree,
            })
        })
        .collect()
}

/// Candidates in admission order: descending importance, then ascending id.
pub fn admission_order(scores: &[Option<Importance>]) -> Vec<NodeId> {
    let mut order: Vec<NodeId> = scores
        .iter()
        .enumerate()
        .filter_map(|(v, s)| s.map(|_| v as NodeId))
        .collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (scores[a as usize].unwrap(), scores[b as usize].unwrap());
        sb.cmp(&sa).then(a.cmp(&b))
    });
    order
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborCache {
    address_table: Vec<i64>,
    cache_array: Vec<u64>,
}

impl NeighborCache {
    /// Cache over `num_nodes` nodes with nothing admitted.
    pub fn empty(num_nodes: u64) -> Self {
        Self {
            address_table: vec![MISS; num_nodes as usize],
            cache_array: Vec::new(),
        }
    }

    /// Builds the cache under `budget_bytes`, counting `ENTRY_BYTES` per
    /// address-table entry and per region element. A node whose region does
    /// not fit the remaining budget is skipped and admission continues with
    /// the next candidate.
    pub fn build(graph: &CscGraph, budget_bytes: u64) -> Result<Self> {
        let table_bytes = graph.num_nodes() * ENTRY_BYTES;
        if budget_bytes < table_bytes {
            return Err(Error::InvalidArgument(format!(
                "neighbor cache budget {budget_bytes} B is below the address table size {table_bytes} B"
            )));
        }
        let mut remaining = budget_bytes - table_bytes;
        let mut cache = Self::empty(graph.num_nodes());
        for v in admission_order(&score_nodes(graph)) {
            let neighbors = graph.in_neighbors(v);
            let region_bytes = (1 + neighbors.len() as u64) * ENTRY_BYTES;
            if region_bytes > remaining {
                continue;
            }
            remaining -= region_bytes;
            cache.address_table[v as usize] = cache.cache_array.len() as i64;
            cache.cache_array.push(neighbors.len() as u64);
            cache.cache_array.extend_from_slice(neighbors);
        }
        Ok(cache)
    }

    pub fn num_nodes(&self) -> u64 {
        self.address_table.len() as u64
    }

    pub fn address_table(&self) -> &[i64] {
        &self.address_table
    }

    pub fn cache_array(&self) -> &[u64] {
        &self.cache_array
    }

    /// Builds a cache from raw parts, checking that every region is in bounds.
    pub fn from_parts(address_table: Vec<i64>, cache_array: Vec<u64>) -> Result<Self> {
        for (v, &addr) in address_table.iter().enumerate() {
            if addr < 0 {
                continue;
            }
            let ok = cache_array
                .get(addr as usize)
                .and_then(|&count| (addr as u64).checked_add(1 + count))
                .is_some_and(|end| end <= cache_array.len() as u64);
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "region of node {v} at offset {addr} exceeds cache array"
                )));
            }
        }
        Ok(Self {
            address_table,
            cache_array,
        })
    }

    pub fn lookup(&self, node: NodeId) -> Option<&[NodeId]> {
        let addr = *self.address_table.get(node as usize)?;
        if addr < 0 {
            return None;
        }
        let offset = addr as usize;
        let count = self.cache_array[offset] as usize;
        Some(&self.cache_array[offset + 1..offset + 1 + count])
    }

    pub fn cached_nodes(&self) -> usize {
        self.address_table.iter().filter(|&&a| a >= 0).count()
    }

    /// Bytes charged against the build budget.
    pub fn size_bytes(&self) -> u64 {
        (self.address_table.len() + self.cache_array.len()) as u64 * ENTRY_BYTES
    }

    /// Writes `ncache.bin`: magic "GXNCACH1", version u32, reserved u32,
    /// num_nodes u64, cache_array length u64, address_table (num_nodes x i64),
    /// cache_array (length x u64). Little-endian throughout.
    pub fn persist(&self, path: &Path) -> Result<()> {
        let mut enc = Encoder::create(path)?;
        enc.bytes(NCACHE_MAGIC)?;
        enc.u32(NCACHE_VERSION)?;
        enc.u32(0)?;
        enc.u64(self.address_table.len() as u64)?;
        enc.u64(self.cache_array.len() as u64)?;
        for &a in &self.address_table {
            enc.i64(a)?;
        }
        enc.u64_slice(&self.cache_array)?;
        enc.finish()
    }

    /// Loads a cache with one sequential read of the whole file.
    pub fn load(path: &Path) -> Result<Self> {
        let buf = read_file(path)?;
        let mut dec = Decoder::new(path, &buf);
        dec.magic(NCACHE_MAGIC)?;
        let version = dec.u32()?;
        if version != NCACHE_VERSION {
            return Err(dec.err(format!("unsupported version {version}")));
        }
        let _reserved = dec.u32()?;
        let num_nodes = dec.len(8)?;
        let array_len = dec.u64()? as usize;
        let address_table = dec.i64_vec(num_nodes)?;
        let cache_array = dec.u64_vec(array_len)?;
        if dec.position() != buf.len() {
            return Err(dec.err("trailing bytes"));
        }
        Self::from_parts(address_table, cache_array).map_err(|e| dec.err(e.to_string()))
    }
}

/// A neighbor source fronted by a [`NeighborCache`]: hits are served from
/// memory, misses fall through to the backing source (and its I/O accounting).
pub struct CachedNeighbors<'a, S: ?Sized> {
    pub cache: &'a NeighborCache,
    pub source: &'a S,
}

impl<S: NeighborSource + ?Sized> NeighborSource for CachedNeighbors<'_, S> {
    fn num_nodes(&self) -> u64 {
        self.source.num_nodes()
    }

    fn in_neighbors_into(
        &self,
        node: NodeId,
        out: &mut Vec<NodeId>,
        stats: &IoStats,
    ) -> Result<()> {
        match self.cache.lookup(node) {
            Some(list) => {
                out.clear();
                out.extend_from_slice(list);
                Ok(())
            }
            None => self.source.in_neighbors_into(node, out, stats),
        }
    }
}
