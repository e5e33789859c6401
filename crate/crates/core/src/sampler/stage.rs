use rayon::prelude::*;

use super::{mix_seed, sample_batch, Fanouts};
use crate::runtime::{write_adj, write_ids, RuntimeDir};
use crate::store::{IoSnapshot, IoStats, NeighborSource};
use crate::{Error, NodeId, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampleStageReport {
    pub batches: usize,
    pub files_written: usize,
    pub io: IoSnapshot,
    /// Total sampled ids over all batches.
    pub sampled_ids: u64,
}

/// Samples every batch of superbatch `sb` and writes `ids_{sb}_{i}` /
/// `adj_{sb}_{i}` for `i in 0..batches.len()`.
///
/// Batch `i` is seeded from `(global_seed, first_global_batch + i)`, so the
/// output files are identical for any `workers` count.
#[allow(clippy::too_many_arguments)]
pub fn superbatch_sample<S: NeighborSource + ?Sized>(
    source: &S,
    batches: &[Vec<NodeId>],
    first_global_batch: u64,
    fanouts: &Fanouts,
    global_seed: u64,
    workers: usize,
    rt: &RuntimeDir,
    sb: u64,
) -> Result<SampleStageReport> {
    if batches.is_empty() {
        return Err(Error::InvalidArgument("superbatch has no batches".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("sampler pool: {e}")))?;
    let stats = IoStats::new();

    let sizes: Vec<u64> = pool.install(|| {
        batches
            .par_iter()
            .enumerate()
            .map(|(i, seeds)| {
                let batch_seed = mix_seed(global_seed, first_global_batch + i as u64);
                let out = sample_batch(source, seeds, fanouts, batch_seed, &stats)?;
                write_ids(&rt.ids_path(sb, i), &out.ids)?;
                write_adj(&rt.adj_path(sb, i), &out.adj)?;
                Ok(out.ids.len() as u64)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    Ok(SampleStageReport {
        batches: batches.len(),
        files_written: 2 * batches.len(),
        io: stats.snapshot(),
        sampled_ids: sizes.iter().sum(),
    })
}
