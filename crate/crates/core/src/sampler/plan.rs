use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, NodeId, Result};

/// Ordered partition of the training nodes into seed batches for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPlan {
    pub batches: Vec<Vec<NodeId>>,
}

impl SeedPlan {
    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }
}

/// Shuffles `train_ids` with `epoch_seed` and cuts it into batches of
/// `batch_size`; the last batch may be short.
pub fn plan_seed_batches(
    train_ids: &[NodeId],
    batch_size: usize,
    epoch_seed: u64,
) -> Result<SeedPlan> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch_size must be at least 1".into(),
        ));
    }
    if train_ids.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let mut order = train_ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    Ok(SeedPlan {
        batches: order.chunks(batch_size).map(<[NodeId]>::to_vec).collect(),
    })
}

/// Deterministic random subset of `round(fraction * num_nodes)` nodes (at
/// least one), returned in ascending order.
pub fn select_training_nodes(num_nodes: u64, fraction: f64, seed: u64) -> Result<Vec<NodeId>> {
    if num_nodes == 0 {
        return Err(Error::InvalidArgument("graph has no nodes".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1], got {fraction}"
        )));
    }
    let take = ((num_nodes as f64 * fraction).round() as usize).clamp(1, num_nodes as usize);
    let mut all: Vec<NodeId> = (0..num_nodes).collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    all.truncate(take);
    all.sort_unstable();
    Ok(all)
}
