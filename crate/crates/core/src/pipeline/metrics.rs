use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::store::IoSnapshot;
use crate::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

/// Wall time split into the five reported categories, in seconds.
///
/// `inspect` covers superbatch sampling and changeset precomputation (their
/// overlapped wall time when run concurrently); `switch` is feature-cache
/// initialization; `data_prep` is reading runtime files, gathering features
/// and deleting consumed files; `cache_update` is changeset application;
/// `compute` is the compute stub.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Categories {
    pub inspect: f64,
    pub switch: f64,
    pub data_prep: f64,
    pub cache_update: f64,
    pub compute: f64,
}

impl Categories {
    pub const NAMES: [&'static str; 5] =
        ["inspect", "switch", "data prep", "cache update", "compute"];

    pub fn values(&self) -> [f64; 5] {
        [
            self.inspect,
            self.switch,
            self.data_prep,
            self.cache_update,
            self.compute,
        ]
    }

    pub fn sum(&self) -> f64 {
        self.values().iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Category {
    Inspect,
    Switch,
    DataPrep,
    CacheUpdate,
    Compute,
}

/// Contiguous lap timer: every lap is charged to one category, so the
/// categories always add up to the measured total.
#[derive(Debug)]
pub(crate) struct LapClock {
    start: Instant,
    last: Instant,
    pub(crate) totals: Categories,
}

impl LapClock {
    pub(crate) fn start() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            totals: Categories::default(),
        }
    }

    /// Charges the time since the previous lap to `cat` and returns it.
    pub(crate) fn lap(&mut self, cat: Category) -> Duration {
        let now = Instant::now();
        let d = now - self.last;
        self.last = now;
        let slot = match cat {
            Category::Inspect => &mut self.totals.inspect,
            Category::Switch => &mut self.totals.switch,
            Category::DataPrep => &mut self.totals.data_prep,
            Category::CacheUpdate => &mut self.totals.cache_update,
            Category::Compute => &mut self.totals.compute,
        };
        *slot += d.as_secs_f64();
        d
    }

    pub(crate) fn elapsed(&self) -> f64 {
        (self.last - self.start).as_secs_f64()
    }
}

/// One main-loop iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub superbatch: u64,
    pub iteration: usize,
    pub global_batch: u64,
    pub num_ids: usize,
    pub hits: u64,
    pub misses: u64,
    pub predicted_misses: u64,
    pub pages_read: u64,
    pub checksum: u64,
}

/// Stage timings and counters of one superbatch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub superbatch: u64,
    pub epoch: usize,
    pub batches: usize,
    pub sample_secs: f64,
    pub precompute_secs: f64,
    pub switch_secs: f64,
    pub data_prep_secs: f64,
    pub cache_update_secs: f64,
    pub compute_secs: f64,
    pub sample_files: usize,
    pub precompute_files: usize,
    pub files_deleted: usize,
    pub sample_io: IoSnapshot,
    pub init_io: IoSnapshot,
    pub gather_io: IoSnapshot,
    pub sampled_ids: u64,
    pub hits: u64,
    pub misses: u64,
    pub predicted_misses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub feature_cache_entries: usize,
    pub overlap: bool,
    pub setup_secs: f64,
    /// Wall time of the superbatch loop; equals the category sum.
    pub total_wall_secs: f64,
    pub categories: Categories,
    pub superbatches: Vec<StageMetrics>,
    pub batches: Vec<BatchRecord>,
    /// Most superbatches whose runtime files were on disk at a census point.
    pub max_coexisting_superbatches: usize,
    pub sample_io: IoSnapshot,
    pub gather_io: IoSnapshot,
    pub init_io: IoSnapshot,
    pub total_accesses: u64,
    pub total_hits: u64,
    pub total_misses: u64,
    pub miss_ratio: f64,
}

impl RunReport {
    pub fn checksums(&self) -> Vec<u64> {
        self.batches.iter().map(|b| b.checksum).collect()
    }

    /// Writes `report.json` and `report.csv` (one row per superbatch) into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(REPORT_JSON);
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(&json, text).map_err(|e| Error::io(&json, e))?;

        let csv_path = dir.join(REPORT_CSV);
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
        for m in &self.superbatches {
            w.serialize(CsvRow::from(m))
                .map_err(|e| csv_error(&csv_path, e))?;
        }
        w.flush().map_err(|e| Error::io(&csv_path, e))?;
        Ok((json, csv_path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// Column order of `report.csv`.
#[derive(Debug, Serialize)]
struct CsvRow {
    superbatch: u64,
    epoch: usize,
    batches: usize,
    sample_secs: f64,
    precompute_secs: f64,
    switch_secs: f64,
    data_prep_secs: f64,
    cache_update_secs: f64,
    compute_secs: f64,
    sample_files: usize,
    precompute_files: usize,
    sample_pages: u64,
    init_pages: u64,
    gather_pages: u64,
    hits: u64,
    misses: u64,
}

impl From<&StageMetrics> for CsvRow {
    fn from(m: &StageMetrics) -> Self {
        Self {
            superbatch: m.superbatch,
            epoch: m.epoch,
            batches: m.batches,
            sample_secs: m.sample_secs,
            precompute_secs: m.precompute_secs,
            switch_secs: m.switch_secs,
            data_prep_secs: m.data_prep_secs,
            cache_update_secs: m.cache_update_secs,
            compute_secs: m.compute_secs,
            sample_files: m.sample_files,
            precompute_files: m.precompute_files,
            sample_pages: m.sample_io.pages_read,
            init_pages: m.init_io.pages_read,
            gather_pages: m.gather_io.pages_read,
            hits: m.hits,
            misses: m.misses,
        }
    }
}
