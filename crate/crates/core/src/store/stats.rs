use std::ops::{Add, AddAssign, Sub};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

/// Shared I/O counters. Safe to update from many reader threads at once.
#[derive(Debug, Default)]
pub struct IoStats {
    pages_read: AtomicU64,
    rows_read: AtomicU64,
    neighbor_lists_read: AtomicU64,
    bytes_read: AtomicU64,
}

/// Point-in-time copy of [`IoStats`].
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoSnapshot {
    pub pages_read: u64,
    pub rows_read: u64,
    pub neighbor_lists_read: u64,
    pub bytes_read: u64,
}

impl IoStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn record_pages(&self, pages: u64, bytes: u64) {
        self.pages_read.fetch_add(pages, Ordering::Relaxed);
        self.bytes_read.fetch_add(bytes, Ordering::Relaxed);
    }

    pub(crate) fn record_row(&self) {
        self.rows_read.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn record_neighbor_list(&self) {
        self.neighbor_lists_read.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> IoSnapshot {
        IoSnapshot {
            pages_read: self.pages_read.load(Ordering::Relaxed),
            rows_read: self.rows_read.load(Ordering::Relaxed),
            neighbor_lists_read: self.neighbor_lists_read.load(Ordering::Relaxed),
            bytes_read: self.bytes_read.load(Ordering::Relaxed),
        }
    }

    /// Folds another counter set (e.g. a worker's) into this one.
    pub fn merge(&self, other: &IoSnapshot) {
        self.pages_read
            .fetch_add(other.pages_read, Ordering::Relaxed);
        self.rows_read.fetch_add(other.rows_read, Ordering::Relaxed);
        self.neighbor_lists_read
            .fetch_add(other.neighbor_lists_read, Ordering::Relaxed);
        self.bytes_read
            .fetch_add(other.bytes_read, Ordering::Relaxed);
    }
}

impl Add for IoSnapshot {
    type Output = IoSnapshot;

    fn add(self, rhs: IoSnapshot) -> IoSnapshot {
        IoSnapshot {
            pages_read: self.pages_read + rhs.pages_read,
            rows_read: self.rows_read + rhs.rows_read,
            neighbor_lists_read: self.neighbor_lists_read + rhs.neighbor_lists_read,
            bytes_read: self.bytes_read + rhs.bytes_read,
        }
    }
}

impl AddAssign for IoSnapshot {
    fn add_assign(&mut self, rhs: IoSnapshot) {
        *self = *self + rhs;
    }
}

/// Counter delta between two snapshots of the same monotone counter set.
impl Sub for IoSnapshot {
    type Output = IoSnapshot;

    fn sub(self, rhs: IoSnapshot) -> IoSnapshot {
        IoSnapshot {
            pages_read: self.pages_read - rhs.pages_read,
            rows_read: self.rows_read - rhs.rows_read,
            neighbor_lists_read: self.neighbor_lists_read - rhs.neighbor_lists_read,
            bytes_read: self.bytes_read - rhs.bytes_read,
        }
    }
}
