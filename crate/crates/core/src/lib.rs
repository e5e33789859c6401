//! Disk-resident GNN data preparation.
//!
//! The crate splits mini-batch preparation into an inspector and an executor.
//! The inspector samples a whole superbatch of mini-batches ahead of time and
//! precomputes, from the resulting access trace, every insertion and eviction
//! an offline-optimal feature cache will perform. The executor then gathers
//! feature rows batch by batch, applying those precomputed changesets.
//!
//! Module map:
//!
//! - [`store`]: on-disk CSC adjacency and feature table with 4 KiB page accounting.
//! - [`neighbor_cache`]: static, importance-scored cache of in-neighbor lists.
//! - [`sampler`]: multi-layer uniform neighborhood sampling and the superbatch sample stage.
//! - [`changeset`]: next-access index, optimal cache-state simulation and its oracles.
//! - [`feature_cache`]: direct-addressed feature cache driven by changesets.
//! - [`baselines`]: comparison policies (none, static out-degree, LRU).
//! - [`pipeline`]: stage orchestration and metrics.
//! - [`runtime`]: naming and encoding of the files passed between stages.
//! - [`graphgen`]: RMAT-style synthetic graphs and features.

pub mod baselines;
pub mod changeset;
mod codec;
mod error;
pub mod feature_cache;
pub mod graphgen;
pub mod neighbor_cache;
pub mod pipeline;
pub mod runtime;
pub mod sampler;
pub mod store;

pub use error::{Error, Result};

/// Node identifier. Stored as a little-endian `u64` in every on-disk format.
pub type NodeId = u64;

/// Size of a storage block. All modeled reads are whole, aligned pages.
pub const PAGE_SIZE: u64 = 4096;
