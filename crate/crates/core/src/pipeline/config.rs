use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::Policy;
use crate::sampler::Fanouts;
use crate::{Error, Result};

/// Everything a training run depends on. A run is a pure function of this
/// value apart from wall-clock timings.
///
/// Relative paths are resolved against the directory of the config file by
/// [`RunConfig::load`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: PathBuf,
    pub features: PathBuf,
    /// Persisted neighbor cache; `None` samples straight from disk.
    pub neighbor_cache: Option<PathBuf>,
    pub fanouts: Vec<usize>,
    pub batch_size: usize,
    /// Mini-batches per superbatch.
    pub superbatch_size: usize,
    pub epochs: usize,
    /// Share of nodes used as training seeds.
    pub train_fraction: f64,
    pub feature_cache_entries: usize,
    pub sampler_workers: usize,
    /// Run changeset precomputation of superbatch `k` alongside sampling of `k + 1`.
    pub overlap: bool,
    pub seed: u64,
    pub runtime_dir: PathBuf,
    /// Feature-cache policy: `belady`, `static_degree` or `none`.
    pub policy: Policy,
    /// Load the neighbor cache once instead of before every sample stage.
    pub retain_neighbor_cache: bool,
    /// Stop after this many superbatches.
    pub max_superbatches: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            graph: PathBuf::from("graph.bin"),
            features: PathBuf::from("features.bin"),
            neighbor_cache: None,
            fanouts: vec![10, 10, 10],
            batch_size: 512,
            superbatch_size: 16,
            epochs: 1,
            train_fraction: 0.1,
            feature_cache_entries: 0,
            sampler_workers: 4,
            overlap: true,
            seed: 0,
            runtime_dir: PathBuf::from("runtime"),
            policy: Policy::Belady,
            retain_neighbor_cache: false,
            max_superbatches: None,
        }
    }
}

impl RunConfig {
    /// Parses a JSON config and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.graph, &mut self.features, &mut self.runtime_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = self.neighbor_cache.as_mut().filter(|p| p.is_relative()) {
            *p = base.join(&*p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        Fanouts::new(self.fanouts.clone())?;
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.superbatch_size == 0 {
            return bad("superbatch_size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.sampler_workers == 0 {
            return bad("sampler_workers must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return bad(format!(
                "train_fraction must be in (0, 1], got {}",
                self.train_fraction
            ));
        }
        if self.policy == Policy::Lru {
            return bad("lru is available only in simulation, not as a pipeline policy".into());
        }
        if self.max_superbatches == Some(0) {
            return bad("max_superbatches must be at least 1".into());
        }
        Ok(())
    }

    pub fn fanouts(&self) -> Result<Fanouts> {
        Fanouts::new(self.fanouts.clone())
    }

    /// Cache entries actually used by the configured policy.
    pub fn effective_cache_entries(&self) -> usize {
        match self.policy {
            Policy::None => 0,
            _ => self.feature_cache_entries,
        }
    }
}
