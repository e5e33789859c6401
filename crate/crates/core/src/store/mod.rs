//! On-disk graph and feature storage with block-granular I/O accounting.
//!
//! Every read is modeled as whole, aligned 4 KiB pages: a request covering
//! bytes `[a, b)` costs every page intersecting that range, no matter how few
//! bytes of it are used. Pages are counted per request with no coalescing
//! across requests, mirroring independent random reads on an SSD.

mod features;
mod graph;
mod stats;

pub use features::{page_count_for_row, write_features, FeatureStore, RowMatrix, SCALAR_WIDTH};
pub use graph::{build_csc, CscGraph, DiskGraph, NeighborSource};
pub use stats::{IoSnapshot, IoStats};

use crate::PAGE_SIZE;

/// Number of distinct pages touched by the byte range `[offset, offset + len)`.
pub fn pages_spanned(offset: u64, len: u64) -> u64 {
    if len == 0 {
        return 0;
    }
    (offset + len - 1) / PAGE_SIZE - offset / PAGE_SIZE + 1
}
