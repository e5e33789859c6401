use std::fs::File;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use super::{pages_spanned, IoStats};
use crate::codec::{decode_u64s, read_file, Decoder, Encoder};
use crate::{Error, NodeId, Result, PAGE_SIZE};

const GRAPH_MAGIC: &[u8; 8] = b"GXGRAPH1";
const GRAPH_VERSION: u32 = 1;
const HEADER_BYTES: u64 = 40;

/// Compressed-sparse-column adjacency: `indices[indptr[v]..indptr[v + 1]]`
/// are the in-neighbors of `v`, sorted ascending and free of duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CscGraph {
    num_nodes: u64,
    indptr: Vec<u64>,
    indices: Vec<NodeId>,
}

/// Builds a CSC graph from directed `(src, dst)` edges; `src` becomes an
/// in-neighbor of `dst`. Duplicate edges collapse to one.
pub fn build_csc(edges: &[(NodeId, NodeId)], num_nodes: u64) -> Result<CscGraph> {
    let n = num_nodes as usize;
    let mut counts = vec![0u64; n + 1];
    for &(src, dst) in edges {
        for node in [src, dst] {
            if node >= num_nodes {
                return Err(Error::NodeOutOfRange { node, num_nodes });
            }
        }
        counts[dst as usize + 1] += 1;
    }
    for i in 1..=n {
        counts[i] += counts[i - 1];
    }

    let mut cursor = counts.clone();
    let mut raw = vec![0 as NodeId; edges.len()];
    for &(src, dst) in edges {
        let slot = &mut cursor[dst as usize];
        raw[*slot as usize] = src;
        *slot += 1;
    }

    // Sort each bucket, drop duplicates, and compact in place.
    let mut indptr = Vec::with_capacity(n + 1);
    indptr.push(0);
    let mut write = 0usize;
    for v in 0..n {
        let (lo, hi) = (counts[v] as usize, counts[v + 1] as usize);
        raw[lo..hi].sort_unstable();
        let mut prev = None;
        for read in lo..hi {
            let id = raw[read];
            if prev != Some(id) {
                raw[write] = id;
                write += 1;
                prev = Some(id);
            }
        }
        indptr.push(write as u64);
    }
    raw.truncate(write);

    Ok(CscGraph {
        num_nodes,
        indptr,
        indices: raw,
    })
}

impl CscGraph {
    pub fn num_nodes(&self) -> u64 {
        self.num_nodes
    }

    pub fn num_edges(&self) -> u64 {
        self.indices.len() as u64
    }

    pub fn indptr(&self) -> &[u64] {
        &self.indptr
    }

    pub fn indices(&self) -> &[NodeId] {
        &self.indices
    }

    pub fn in_neighbors(&self, node: NodeId) -> &[NodeId] {
        let v = node as usize;
        &self.indices[self.indptr[v] as usize..self.indptr[v + 1] as usize]
    }

    pub fn in_degree(&self, node: NodeId) -> u64 {
        let v = node as usize;
        self.indptr[v + 1] - self.indptr[v]
    }

    pub fn in_degrees(&self) -> Vec<u64> {
        self.indptr.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn out_degrees(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.num_nodes as usize];
        for &src in &self.indices {
            out[src as usize] += 1;
        }
        out
    }

    /// Writes `graph.bin`. Layout (all little-endian):
    ///
    /// ```text
    /// 0   magic "GXGRAPH1"
    /// 8   version u32 (= 1)
    /// 12  reserved u32 (= 0)
    /// 16  num_nodes u64
    /// 24  num_edges u64
    /// 32  indices_offset u64 (page aligned)
    /// 40  indptr: (num_nodes + 1) x u64
    /// ..  zero padding to indices_offset
    /// indices_offset  indices: num_edges x u64
    /// ..  zero padding to a page multiple
    /// ```
    pub fn persist(&self, path: &Path) -> Result<()> {
        let indices_offset =
            (HEADER_BYTES + 8 * self.indptr.len() as u64).next_multiple_of(PAGE_SIZE);
        let mut enc = Encoder::create(path)?;
        enc.bytes(GRAPH_MAGIC)?;
        enc.u32(GRAPH_VERSION)?;
        enc.u32(0)?;
        enc.u64(self.num_nodes)?;
        enc.u64(self.num_edges())?;
        enc.u64(indices_offset)?;
        enc.u64_slice(&self.indptr)?;
        enc.pad_to(indices_offset)?;
        enc.u64_slice(&self.indices)?;
        enc.pad_to_page()?;
        enc.finish()
    }

    /// Loads and fully validates a graph written by [`CscGraph::persist`].
    pub fn read_from(path: &Path) -> Result<CscGraph> {
        let buf = read_file(path)?;
        let mut dec = Decoder::new(path, &buf);
        let header = GraphHeader::decode(&mut dec)?;
        let indptr = dec.u64_vec(header.num_nodes as usize + 1)?;
        validate_indptr(path, &indptr, header.num_edges)?;
        dec.seek(header.indices_offset as usize)?;
        let indices = dec.u64_vec(header.num_edges as usize)?;
        if let Some(&bad) = indices.iter().find(|&&id| id >= header.num_nodes) {
            return Err(dec.err(format!(
                "in-neighbor id {bad} >= num_nodes {}",
                header.num_nodes
            )));
        }
        Ok(CscGraph {
            num_nodes: header.num_nodes,
            indptr,
            indices,
        })
    }
}

struct GraphHeader {
    num_nodes: u64,
    num_edges: u64,
    indices_offset: u64,
}

impl GraphHeader {
    fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        dec.magic(GRAPH_MAGIC)?;
        let version = dec.u32()?;
        if version != GRAPH_VERSION {
            return Err(dec.err(format!("unsupported version {version}")));
        }
        let _reserved = dec.u32()?;
        let num_nodes = dec.u64()?;
        let num_edges = dec.u64()?;
        let indices_offset = dec.u64()?;
        let min_offset = num_nodes
            .checked_add(1)
            .and_then(|n| n.checked_mul(8))
            .and_then(|b| b.checked_add(HEADER_BYTES))
            .ok_or_else(|| dec.err("num_nodes overflows"))?;
        if indices_offset % PAGE_SIZE != 0 || indices_offset < min_offset {
            return Err(dec.err(format!("bad indices_offset {indices_offset}")));
        }
        Ok(Self {
            num_nodes,
            num_edges,
            indices_offset,
        })
    }
}

fn validate_indptr(path: &Path, indptr: &[u64], num_edges: u64) -> Result<()> {
    if indptr.first() != Some(&0) {
        return Err(Error::format(path, "indptr[0] != 0"));
    }
    if indptr.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::format(path, "indptr is not non-decreasing"));
    }
    if indptr.last() != Some(&num_edges) {
        return Err(Error::format(path, "indptr[num_nodes] != num_edges"));
    }
    Ok(())
}

/// Anything the sampler can pull in-neighbor lists from.
pub trait NeighborSource: Sync {
    fn num_nodes(&self) -> u64;

    /// Replaces the contents of `out` with the in-neighbors of `node`.
    fn in_neighbors_into(&self, node: NodeId, out: &mut Vec<NodeId>, stats: &IoStats)
        -> Result<()>;
}

/// In-memory graphs perform no I/O and leave `stats` untouched.
impl NeighborSource for CscGraph {
    fn num_nodes(&self) -> u64 {
        self.num_nodes
    }

    fn in_neighbors_into(
        &self,
        node: NodeId,
        out: &mut Vec<NodeId>,
        _stats: &IoStats,
    ) -> Result<()> {
        if node >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                node,
                num_nodes: self.num_nodes,
            });
        }
        out.clear();
        out.extend_from_slice(self.in_neighbors(node));
        Ok(())
    }
}

/// Disk-resident graph handle: `indptr` lives in memory, in-neighbor lists
/// are read from the file on demand in whole pages.
#[derive(Debug)]
pub struct DiskGraph {
    path: PathBuf,
    file: File,
    num_nodes: u64,
    indices_offset: u64,
    indptr: Vec<u64>,
}

impl DiskGraph {
    pub fn open(path: &Path) -> Result<DiskGraph> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();

        let mut head = vec![0u8; HEADER_BYTES.min(file_len) as usize];
        file.read_exact_at(&mut head, 0)
            .map_err(|e| Error::io(path, e))?;
        let header = GraphHeader::decode(&mut Decoder::new(path, &head))?;

        let indices_end = header
            .num_edges
            .checked_mul(8)
            .and_then(|b| b.checked_add(header.indices_offset))
            .ok_or_else(|| Error::format(path, "num_edges overflows"))?;
        if file_len < indices_end.next_multiple_of(PAGE_SIZE) {
            return Err(Error::format(
                path,
                format!("truncated: {file_len} bytes, expected at least {indices_end}"),
            ));
        }

        let mut raw = vec![0u8; 8 * (header.num_nodes as usize + 1)];
        file.read_exact_at(&mut raw, HEADER_BYTES)
            .map_err(|e| Error::io(path, e))?;
        let indptr = decode_u64s(&raw);
        validate_indptr(path, &indptr, header.num_edges)?;

        Ok(DiskGraph {
            path: path.to_path_buf(),
            file,
            num_nodes: header.num_nodes,
            indices_offset: header.indices_offset,
            indptr,
        })
    }

    pub fn num_nodes(&self) -> u64 {
        self.num_nodes
    }

    pub fn num_edges(&self) -> u64 {
        *self.indptr.last().unwrap()
    }

    pub fn in_degree(&self, node: NodeId) -> u64 {
        let v = node as usize;
        self.indptr[v + 1] - self.indptr[v]
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Reads one in-neighbor list, charging every page its bytes touch.
    pub fn read_in_neighbors(&self, node: NodeId, stats: &IoStats) -> Result<Vec<NodeId>> {
        let mut out = Vec::new();
        self.in_neighbors_into(node, &mut out, stats)?;
        Ok(out)
    }

    /// Out-degrees of every node, from one sequential scan of the adjacency
    /// (offline preprocessing; not charged to any [`IoStats`]).
    pub fn out_degrees(&self) -> Result<Vec<u64>> {
        let mut out = vec![0u64; self.num_nodes as usize];
        let total = self.num_edges();
        let chunk = 1u64 << 17;
        let mut buf = Vec::new();
        let mut done = 0;
        while done < total {
            let n = chunk.min(total - done);
            buf.resize(n as usize * 8, 0);
            self.file
                .read_exact_at(&mut buf, self.indices_offset + done * 8)
                .map_err(|e| Error::io(&self.path, e))?;
            for id in decode_u64s(&buf) {
                let slot = out.get_mut(id as usize).ok_or_else(|| {
                    Error::format(&self.path, format!("in-neighbor id {id} out of range"))
                })?;
                *slot += 1;
            }
            done += n;
        }
        Ok(out)
    }

    /// Materializes the full graph in memory.
    pub fn to_csc(&self) -> Result<CscGraph> {
        CscGraph::read_from(&self.path)
    }
}

impl NeighborSource for DiskGraph {
    fn num_nodes(&self) -> u64 {
        self.num_nodes
    }

    fn in_neighbors_into(
        &self,
        node: NodeId,
        out: &mut Vec<NodeId>,
        stats: &IoStats,
    ) -> Result<()> {
        if node >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                node,
                num_nodes: self.num_nodes,
            });
        }
        out.clear();
        stats.record_neighbor_list();
        let v = node as usize;
        let start = self.indices_offset + self.indptr[v] * 8;
        let len = (self.indptr[v + 1] - self.indptr[v]) * 8;
        let pages = pages_spanned(start, len);
        if pages == 0 {
            return Ok(());
        }
        let page_start = start / PAGE_SIZE * PAGE_SIZE;
        let mut buf = vec![0u8; (pages * PAGE_SIZE) as usize];
        self.file
            .read_exact_at(&mut buf, page_start)
            .map_err(|e| Error::io(&self.path, e))?;
        stats.record_pages(pages, pages * PAGE_SIZE);

        let lo = (start - page_start) as usize;
        out.extend(decode_u64s(&buf[lo..lo + len as usize]));
        if let Some(&bad) = out.iter().find(|&&id| id >= self.num_nodes) {
            return Err(Error::format(
                &self.path,
                format!("in-neighbor id {bad} out of range"),
            ));
        }
        Ok(())
    }
}
