//! RMAT-style synthetic graphs with heavy-tailed degrees, plus seeded
//! random feature tables.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sampler::mix_seed;
use crate::store::{build_csc, write_features, CscGraph};
use crate::{Error, NodeId, Result};

pub const GRAPH_FILE: &str = "graph.bin";
pub const FEATURES_FILE: &str = "features.bin";

/// Generator parameters. `d = 1 - a - b - c` is the bottom-right quadrant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub num_nodes: u64,
    pub avg_degree: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub dim: u32,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(num_nodes: u64, avg_degree: f64, dim: u32, seed: u64) -> Self {
        Self {
            num_nodes,
            avg_degree,
            a: 0.57,
            b: 0.19,
            c: 0.19,
            dim,
            seed,
        }
    }

    pub fn d(&self) -> f64 {
        1.0 - self.a - self.b - self.c
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes == 0 {
            return Err(Error::InvalidArgument(
                "num_nodes must be at least 1".into(),
            ));
        }
        if !(self.avg_degree >= 0.0 && self.avg_degree.is_finite()) {
            return Err(Error::InvalidArgument(
                "avg_degree must be finite and non-negative".into(),
            ));
        }
        let probs = [self.a, self.b, self.c, self.d()];
        if probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidArgument(format!(
                "quadrant probabilities must lie in [0, 1], got {probs:?}"
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument(
                "feature dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Draws `round(num_nodes * avg_degree)` directed edges `(src, dst)`.
///
/// Endpoints outside `num_nodes` and self loops are redrawn. Node labels are
/// then shuffled so that degree does not correlate with id. Duplicate edges
/// are kept here and collapsed by [`generate_graph`].
pub fn generate_edges(spec: &GenSpec) -> Result<Vec<(NodeId, NodeId)>> {
    spec.validate()?;
    let n = spec.num_nodes;
    if n == 1 {
        return Ok(Vec::new());
    }
    let target = (n as f64 * spec.avg_degree).round() as usize;
    let scale = 64 - (n - 1).leading_zeros();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, 0x0067_7261_7068));
    let (ab, abc) = (spec.a + spec.b, spec.a + spec.b + spec.c);

    let mut edges = Vec::with_capacity(target);
    while edges.len() < target {
        let (mut src, mut dst) = (0u64, 0u64);
        for _ in 0..scale {
            let r: f64 = rng.gen();
            let (sb, db) = if r < spec.a {
                (0, 0)
            } else if r < ab {
                (0, 1)
            } else if r < abc {
                (1, 0)
            } else {
                (1, 1)
            };
            src = src << 1 | sb;
            dst = dst << 1 | db;
        }
        if src < n && dst < n && src != dst {
            edges.push((src, dst));
        }
    }

    let mut relabel: Vec<NodeId> = (0..n).collect();
    relabel.shuffle(&mut rng);
    for e in &mut edges {
        *e = (relabel[e.0 as usize], relabel[e.1 as usize]);
    }
    Ok(edges)
}

pub fn generate_graph(spec: &GenSpec) -> Result<CscGraph> {
    build_csc(&generate_edges(spec)?, spec.num_nodes)
}

/// Fills `row` with the features of `node`: uniform values in `[-1, 1)`
/// drawn from a stream keyed by `(seed, node)`.
pub fn feature_row(seed: u64, node: NodeId, row: &mut [f32]) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, node));
    for x in row {
        *x = rng.gen_range(-1.0f32..1.0);
    }
}

/// What [`write_dataset`] produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub num_nodes: u64,
    pub num_edges: u64,
    pub graph_path: PathBuf,
    pub features_path: PathBuf,
    pub graph_bytes: u64,
    pub feature_bytes: u64,
}

/// Generates the graph and features and writes `graph.bin` and
/// `features.bin` into `out_dir`.
pub fn write_dataset(spec: &GenSpec, out_dir: &Path) -> Result<DatasetSummary> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let graph = generate_graph(spec)?;
    let graph_path = out_dir.join(GRAPH_FILE);
    let features_path = out_dir.join(FEATURES_FILE);
    graph.persist(&graph_path)?;
    let feature_seed = mix_seed(spec.seed, 0x6665_6174);
    write_features(&features_path, spec.num_nodes, spec.dim, |v, row| {
        feature_row(feature_seed, v, row)
    })?;
    let size = |p: &Path| {
        std::fs::metadata(p)
            .map(|m| m.len())
            .map_err(|e| Error::io(p, e))
    };
    Ok(DatasetSummary {
        num_nodes: graph.num_nodes(),
        num_edges: graph.num_edges(),
        graph_bytes: size(&graph_path)?,
        feature_bytes: size(&features_path)?,
        graph_path,
        features_path,
    })
}

/// Fraction of edges whose source is among the top `fraction` of nodes by
/// out-degree.
pub fn top_out_degree_share(out_degrees: &[u64], fraction: f64) -> f64 {
    let total: u64 = out_degrees.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut sorted = out_degrees.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let k = ((out_degrees.len() as f64 * fraction).ceil() as usize).max(1);
    sorted[..k.min(sorted.len())].iter().sum::<u64>() as f64 / total as f64
}
