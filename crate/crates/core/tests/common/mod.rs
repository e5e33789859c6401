#![allow(dead_code)]

use std::path::{Path, PathBuf};

use gnnprep::graphgen::{write_dataset, DatasetSummary, GenSpec};
use gnnprep::pipeline::RunConfig;
use gnnprep::NodeId;
use rand::seq::index::sample;
use rand::Rng;

/// Trace of `iterations` batches over `num_nodes` nodes. Batch sizes are
/// uniform in `1..=max_batch` (capped by `num_nodes`); a third of each batch
/// is drawn from a small hot set so that reuse and ties are common.
pub fn random_trace<R: Rng>(
    rng: &mut R,
    num_nodes: u64,
    iterations: usize,
    max_batch: usize,
) -> Vec<Vec<NodeId>> {
    let n = num_nodes as usize;
    let hot = (n / 20).max(1);
    (0..iterations)
        .map(|_| {
            let b = rng.gen_range(1..=max_batch.min(n));
            let mut ids: Vec<NodeId> = Vec::with_capacity(b);
            let mut seen = std::collections::HashSet::with_capacity(b);
            for v in sample(rng, hot, (b / 3).min(hot)).into_iter() {
                seen.insert(v as NodeId);
                ids.push(v as NodeId);
            }
            while ids.len() < b {
                let v = rng.gen_range(0..num_nodes);
                if seen.insert(v) {
                    ids.push(v);
                }
            }
            // interleave hot and cold ids
            let len = ids.len();
            for i in 0..len {
                ids.swap(i, rng.gen_range(i..len));
            }
            ids
        })
        .collect()
}

/// Generates a dataset under `dir` (once per directory).
pub fn dataset(dir: &Path, num_nodes: u64, avg_degree: f64, dim: u32, seed: u64) -> DatasetSummary {
    write_dataset(&GenSpec::new(num_nodes, avg_degree, dim, seed), dir).expect("dataset generation")
}

/// Run config over a generated dataset with a fresh runtime directory.
pub fn config_for(data: &DatasetSummary, runtime_dir: PathBuf) -> RunConfig {
    RunConfig {
        graph: data.graph_path.clone(),
        features: data.features_path.clone(),
        runtime_dir,
        ..RunConfig::default()
    }
}
