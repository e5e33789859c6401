use std::fs::File;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use super::IoStats;
use crate::codec::{Decoder, Encoder};
use crate::{Error, NodeId, Result, PAGE_SIZE};

const FEAT_MAGIC: &[u8; 8] = b"GXFEAT01";
const FEAT_VERSION: u32 = 1;
const FEAT_HEADER_BYTES: usize = 40;
/// Feature scalars are 32-bit floats.
pub const SCALAR_WIDTH: u32 = 4;

/// Number of `page_size` pages covering row `row_index` of a table whose rows
/// are `row_bytes` long and packed from a page-aligned base.
pub fn page_count_for_row(row_bytes: u64, row_index: u64, page_size: u64) -> u64 {
    assert!(row_bytes > 0, "row_bytes must be positive");
    let first = row_index * row_bytes;
    let last = (row_index + 1) * row_bytes - 1;
    last / page_size - first / page_size + 1
}

/// Dense row-major matrix of `f32` feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl RowMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(dim: usize, data: Vec<f32>) -> Self {
        assert!(
            dim > 0 && data.len().is_multiple_of(dim),
            "data length must be a multiple of dim"
        );
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f32] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Bitwise equality, distinguishing `-0.0` from `0.0` and comparing NaNs by payload.
    pub fn bit_eq(&self, other: &RowMatrix) -> bool {
        self.dim == other.dim
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Writes `features.bin`, filling each row through `fill(node, row)`.
///
/// Layout (little-endian):
///
/// ```text
/// 0   magic "GXFEAT01"
/// 8   version u32 (= 1)
/// 12  reserved u32 (= 0)
/// 16  num_nodes u64
/// 24  dim u32
/// 28  scalar_width u32 (= 4)
/// 32  payload_offset u64 (= 4096)
/// ..  zero padding to payload_offset
/// payload_offset  num_nodes rows of dim f32, row i at payload_offset + i * dim * 4
/// ..  zero padding to a page multiple
/// ```
pub fn write_features<F>(path: &Path, num_nodes: u64, dim: u32, mut fill: F) -> Result<()>
where
    F: FnMut(NodeId, &mut [f32]),
{
    if dim == 0 {
        return Err(Error::InvalidArgument(
            "feature dim must be positive".into(),
        ));
    }
    let mut enc = Encoder::create(path)?;
    enc.bytes(FEAT_MAGIC)?;
    enc.u32(FEAT_VERSION)?;
    enc.u32(0)?;
    enc.u64(num_nodes)?;
    enc.u32(dim)?;
    enc.u32(SCALAR_WIDTH)?;
    enc.u64(PAGE_SIZE)?;
    enc.pad_to(PAGE_SIZE)?;
    let mut row = vec![0f32; dim as usize];
    let mut bytes = Vec::with_capacity(row.len() * 4);
    for v in 0..num_nodes {
        row.fill(0.0);
        fill(v, &mut row);
        bytes.clear();
        bytes.extend(row.iter().flat_map(|x| x.to_le_bytes()));
        enc.bytes(&bytes)?;
    }
    debug_assert_eq!(enc.position(), PAGE_SIZE + num_nodes * dim as u64 * 4);
    enc.pad_to_page()?;
    enc.finish()
}

/// Read-only feature table handle. Rows are fetched with aligned whole-page reads.
#[derive(Debug)]
pub struct FeatureStore {
    path: PathBuf,
    file: File,
    num_nodes: u64,
    dim: usize,
    payload_offset: u64,
}

impl FeatureStore {
    pub fn open(path: &Path) -> Result<FeatureStore> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut head = vec![0u8; FEAT_HEADER_BYTES.min(file_len as usize)];
        file.read_exact_at(&mut head, 0)
            .map_err(|e| Error::io(path, e))?;

        let mut dec = Decoder::new(path, &head);
        dec.magic(FEAT_MAGIC)?;
        let version = dec.u32()?;
        if version != FEAT_VERSION {
            return Err(dec.err(format!("unsupported version {version}")));
        }
        let _reserved = dec.u32()?;
        let num_nodes = dec.u64()?;
        let dim = dec.u32()?;
        let scalar_width = dec.u32()?;
        let payload_offset = dec.u64()?;
        if dim == 0 {
            return Err(dec.err("dim is zero"));
        }
        if scalar_width != SCALAR_WIDTH {
            return Err(dec.err(format!("unsupported scalar width {scalar_width}")));
        }
        if payload_offset == 0 || payload_offset % PAGE_SIZE != 0 {
            return Err(dec.err(format!("payload offset {payload_offset} not page aligned")));
        }
        let payload_end = num_nodes
            .checked_mul(dim as u64 * 4)
            .and_then(|b| b.checked_add(payload_offset))
            .ok_or_else(|| dec.err("payload size overflows"))?;
        if file_len < payload_end.next_multiple_of(PAGE_SIZE) {
            return Err(dec.err(format!(
                "truncated: {file_len} bytes, expected {}",
                payload_end.next_multiple_of(PAGE_SIZE)
            )));
        }
        Ok(FeatureStore {
            path: path.to_path_buf(),
            file,
            num_nodes,
            dim: dim as usize,
            payload_offset,
        })
    }

    pub fn num_nodes(&self) -> u64 {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row_bytes(&self) -> u64 {
        self.dim as u64 * SCALAR_WIDTH as u64
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Pages a miss on `node` costs.
    pub fn pages_for(&self, node: NodeId) -> u64 {
        page_count_for_row(self.row_bytes(), node, PAGE_SIZE)
    }

    /// Reads one row into `out` (length `dim`).
    pub fn read_row_into(&self, node: NodeId, out: &mut [f32], stats: &IoStats) -> Result<()> {
        if node >= self.num_nodes {
            return Err(Error::NodeOutOfRange {
                node,
                num_nodes: self.num_nodes,
            });
        }
        debug_assert_eq!(out.len(), self.dim);
        let row_bytes = self.row_bytes();
        let start = self.payload_offset + node * row_bytes;
        let page_start = start / PAGE_SIZE * PAGE_SIZE;
        let pages = self.pages_for(node);
        let mut buf = vec![0u8; (pages * PAGE_SIZE) as usize];
        self.file
            .read_exact_at(&mut buf, page_start)
            .map_err(|e| Error::io(&self.path, e))?;
        stats.record_pages(pages, pages * PAGE_SIZE);
        stats.record_row();

        let lo = (start - page_start) as usize;
        for (dst, src) in out
            .iter_mut()
            .zip(buf[lo..lo + row_bytes as usize].chunks_exact(4))
        {
            *dst = f32::from_le_bytes(src.try_into().unwrap());
        }
        Ok(())
    }

    /// Gathers rows for `ids` in order. Each row is an independent read.
    pub fn read_feature_rows(&self, ids: &[NodeId], stats: &IoStats) -> Result<RowMatrix> {
        let mut out = RowMatrix::zeros(ids.len(), self.dim);
        for (k, &id) in ids.iter().enumerate() {
            self.read_row_into(id, out.row_mut(k), stats)?;
        }
        Ok(out)
    }

    /// Whole table in memory, bypassing page accounting.
    pub fn read_all(&self) -> Result<RowMatrix> {
        let len = self.num_nodes as usize * self.row_bytes() as usize;
        let mut buf = vec![0u8; len];
        self.file
            .read_exact_at(&mut buf, self.payload_offset)
            .map_err(|e| Error::io(&self.path, e))?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(RowMatrix {
            dim: self.dim,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill(v: NodeId, row: &mut [f32]) {
        for (j, x) in row.iter_mut().enumerate() {
            *x = v as f32 * 1000.0 + j as f32;
        }
    }

    #[test]
    fn page_count_examples() {
        for i in [0, 1, 17, 1 << 30] {
            assert_eq!(page_count_for_row(4096, i, 4096), 1);
        }
        assert_eq!(page_count_for_row(3072, 0, 4096), 1);
        assert_eq!(page_count_for_row(3072, 1, 4096), 2);
        assert_eq!(page_count_for_row(3072, 2, 4096), 2);
        assert_eq!(page_count_for_row(3072, 3, 4096), 1);
        assert_eq!(page_count_for_row(1024, 5, 4096), 1);
    }

    /// Mean pages per 3072-byte row, two ways: brute force over every byte
    /// of every row in one 12 KiB cycle, and the formula. Both give 6/4.
    #[test]
    fn dim_768_mean_is_one_and_a_half() {
        let brute: u64 = (0..4u64)
            .map(|r| {
                let pages: std::collections::BTreeSet<u64> =
                    (r * 3072..(r + 1) * 3072).map(|b| b / 4096).collect();
                pages.len() as u64
            })
            .sum();
        let formula: u64 = (0..4).map(|r| page_count_for_row(3072, r, 4096)).sum();
        assert_eq!(brute, 6);
        assert_eq!(formula, 6);
    }

    #[test]
    fn round_trip_and_gather() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        write_features(&p, 10, 768, fill).unwrap();
        let store = FeatureStore::open(&p).unwrap();
        assert_eq!(store.dim(), 768);

        let stats = IoStats::new();
        let rows = store.read_feature_rows(&[1, 0, 9], &stats).unwrap();
        let mut expect = vec![0f32; 768];
        for (k, id) in [1u64, 0, 9].into_iter().enumerate() {
            fill(id, &mut expect);
            assert_eq!(rows.row(k), &expect[..]);
        }
        // rows 1 and 9 straddle a page boundary, row 0 does not
        assert_eq!(stats.snapshot().pages_read, 2 + 1 + 2);
        assert_eq!(stats.snapshot().rows_read, 3);

        let all = store.read_all().unwrap();
        assert_eq!(all.num_rows(), 10);
    }

    #[test]
    fn aligned_rows_cost_one_page() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        write_features(&p, 5, 1024, fill).unwrap();
        let store = FeatureStore::open(&p).unwrap();
        let stats = IoStats::new();
        store.read_feature_rows(&[4, 2, 3], &stats).unwrap();
        assert_eq!(stats.snapshot().pages_read, 3);
    }

    #[test]
    fn out_of_range_and_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        write_features(&p, 3, 8, fill).unwrap();
        let store = FeatureStore::open(&p).unwrap();
        let err = store.read_feature_rows(&[3], &IoStats::new()).unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { node: 3, .. }));

        let mut bytes = std::fs::read(&p).unwrap();
        bytes[3] ^= 0xff;
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(FeatureStore::open(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn empty_table_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        write_features(&p, 0, 4, fill).unwrap();
        let store = FeatureStore::open(&p).unwrap();
        assert_eq!(store.num_nodes(), 0);
        assert_eq!(store.read_all().unwrap().num_rows(), 0);
    }
}
