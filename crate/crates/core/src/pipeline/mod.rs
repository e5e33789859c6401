//! Stage orchestration.
//!
//! Each superbatch passes through four stages:
//!
//! 1. **sample**: sample every mini-batch and write `ids`/`adj` files (2 S files);
//! 2. **precompute**: build the access index and write `init` plus one
//!    `update` file per batch (S + 1 files);
//! 3. **switch**: load the initial feature-cache contents;
//! 4. **main loop**: per batch, gather features, run the compute stub and
//!    apply the batch's changeset; then delete the superbatch's files.
//!
//! With `overlap` on, precomputation of superbatch `k` runs on its own thread
//! while superbatch `k + 1` is sampled, so at most two superbatches' runtime
//! files exist at once. Stages communicate only through the runtime directory.

mod config;
mod metrics;

pub use config::RunConfig;
pub use metrics::{BatchRecord, Categories, RunReport, StageMetrics, REPORT_CSV, REPORT_JSON};

use std::hash::Hasher;
use std::time::Instant;

use fnv::FnvHasher;
use rayon::prelude::*;

use crate::baselines::{static_degree_set, Policy};
use crate::changeset::{compute_init_set, simulate_with, AccessIndex, IdsFiles};
use crate::feature_cache::FeatureCache;
use crate::neighbor_cache::{CachedNeighbors, NeighborCache};
use crate::runtime::{
    read_adj, read_ids, read_init, read_update, write_init, write_update, Adjacency, FileKind,
    RuntimeDir,
};
use crate::sampler::{
    mix_seed, plan_seed_batches, sample_batch, select_training_nodes, superbatch_sample, Fanouts,
};
use crate::store::{DiskGraph, FeatureStore, IoSnapshot, IoStats, NeighborSource, RowMatrix};
use crate::{Error, NodeId, Result};
use metrics::{Category, LapClock};

/// Checksum of a batch with no rows.
pub const EMPTY_BATCH_CHECKSUM: u64 = 0;

const TRAIN_SET_TAG: u64 = 0x0074_7261_696e;
const EPOCH_TAG: u64 = 0x0065_706f_6368;

/// Stand-in for model computation: FNV-1a over the batch rows (bit patterns)
/// and the sampled adjacency.
pub fn compute_stub(batch: &RowMatrix, adj: &Adjacency) -> u64 {
    if batch.num_rows() == 0 {
        return EMPTY_BATCH_CHECKSUM;
    }
    let mut h = FnvHasher::default();
    h.write_u64(batch.dim() as u64);
    h.write_u64(batch.num_rows() as u64);
    for x in batch.as_slice() {
        h.write(&x.to_bits().to_le_bytes());
    }
    h.write_u64(adj.len() as u64);
    for layer in adj {
        h.write_u64(layer.len() as u64);
        for &(c, p) in layer {
            h.write(&c.to_le_bytes());
            h.write(&p.to_le_bytes());
        }
    }
    h.finish()
}

/// Seed batches of one superbatch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperbatchPlan {
    pub sb: u64,
    pub epoch: usize,
    pub first_global_batch: u64,
    pub batches: Vec<Vec<NodeId>>,
}

/// Splits every epoch's shuffled seed batches into superbatches of
/// `superbatch_size`; an epoch's last superbatch may be short.
pub fn plan_superbatches(config: &RunConfig, num_nodes: u64) -> Result<Vec<SuperbatchPlan>> {
    config.validate()?;
    let train = select_training_nodes(
        num_nodes,
        config.train_fraction,
        mix_seed(config.seed, TRAIN_SET_TAG),
    )?;
    let mut plans = Vec::new();
    let mut global_batch = 0u64;
    'epochs: for epoch in 0..config.epochs {
        let seed = mix_seed(mix_seed(config.seed, EPOCH_TAG), epoch as u64);
        let plan = plan_seed_batches(&train, config.batch_size, seed)?;
        for chunk in plan.batches.chunks(config.superbatch_size) {
            if config.max_superbatches.is_some_and(|m| plans.len() >= m) {
                break 'epochs;
            }
            plans.push(SuperbatchPlan {
                sb: plans.len() as u64,
                epoch,
                first_global_batch: global_batch,
                batches: chunk.to_vec(),
            });
            global_batch += chunk.len() as u64;
        }
    }
    Ok(plans)
}

/// Sampled ids of every batch of `plan`, computed in memory. Identical to
/// the `ids` files the sample stage writes for the same config.
pub fn sample_trace<S: NeighborSource + ?Sized>(
    source: &S,
    config: &RunConfig,
    plan: &SuperbatchPlan,
) -> Result<Vec<Vec<NodeId>>> {
    let fanouts = config.fanouts()?;
    let stats = IoStats::new();
    plan.batches
        .par_iter()
        .enumerate()
        .map(|(i, seeds)| {
            let batch_seed = mix_seed(config.seed, plan.first_global_batch + i as u64);
            sample_batch(source, seeds, &fanouts, batch_seed, &stats).map(|out| out.ids)
        })
        .collect()
}

/// Result of a sample stage.
#[derive(Debug, Clone, Default)]
struct Sampled {
    secs: f64,
    files: usize,
    io: IoSnapshot,
    sampled_ids: u64,
}

/// Result of a precompute stage.
#[derive(Debug, Clone, Default)]
struct Precomputed {
    secs: f64,
    files: usize,
    predicted_misses: Vec<u64>,
}

/// Opened inputs of a run.
pub struct Engine {
    config: RunConfig,
    fanouts: Fanouts,
    graph: DiskGraph,
    features: FeatureStore,
    retained_ncache: Option<NeighborCache>,
    out_degrees: Option<Vec<u64>>,
    rt: RuntimeDir,
}

impl Engine {
    /// Validates `config`, opens the graph and features, and prepares an
    /// empty runtime directory.
    pub fn open(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let fanouts = config.fanouts()?;
        let graph = DiskGraph::open(&config.graph)?;
        let features = FeatureStore::open(&config.features)?;
        if features.num_nodes() != graph.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "graph has {} nodes but the feature table has {}",
                graph.num_nodes(),
                features.num_nodes()
            )));
        }
        let rt = RuntimeDir::create(&config.runtime_dir)?;
        let census = rt.census()?;
        if census.total() > 0 {
            return Err(Error::InvalidArgument(format!(
                "runtime directory {} already holds {} runtime files",
                rt.root().display(),
                census.total()
            )));
        }
        let retained_ncache = match (&config.neighbor_cache, config.retain_neighbor_cache) {
            (Some(p), true) => Some(load_neighbor_cache(p, graph.num_nodes())?),
            _ => None,
        };
        let out_degrees = match config.policy {
            Policy::StaticDegree => Some(graph.out_degrees()?),
            _ => None,
        };
        Ok(Self {
            config,
            fanouts,
            graph,
            features,
            retained_ncache,
            out_degrees,
            rt,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn runtime_dir(&self) -> &RuntimeDir {
        &self.rt
    }

    pub fn plan(&self) -> Result<Vec<SuperbatchPlan>> {
        plan_superbatches(&self.config, self.graph.num_nodes())
    }

    /// Runs the four stages of one superbatch back to back.
    pub fn run_superbatch(
        &self,
        plan: &SuperbatchPlan,
    ) -> Result<(StageMetrics, Vec<BatchRecord>)> {
        let mut clock = LapClock::start();
        let sampled = self.sample(plan)?;
        let pre = self.precompute(plan)?;
        clock.lap(Category::Inspect);
        let mut records = Vec::new();
        let m = self.main_loop(plan, &sampled, &pre, &mut clock, &mut records)?;
        Ok((m, records))
    }

    /// Runs every planned superbatch and assembles the report.
    pub fn run(&self) -> Result<RunReport> {
        let plans = self.plan()?;
        let mut clock = LapClock::start();
        let mut superbatches = Vec::with_capacity(plans.len());
        let mut batches = Vec::new();
        let mut max_coexisting = 0usize;
        let mut next_sampled: Option<Sampled> = None;

        for (k, plan) in plans.iter().enumerate() {
            let sampled = match next_sampled.take() {
                Some(s) => s,
                None => self.sample(plan)?,
            };
            let following = plans.get(k + 1).filter(|_| self.config.overlap);
            let pre = match following {
                Some(next_plan) => {
                    let (pre, next) = std::thread::scope(|scope| {
                        let sampler = scope.spawn(|| self.sample(next_plan));
                        let pre = self.precompute(plan);
                        (pre, sampler.join().expect("sample stage panicked"))
                    });
                    next_sampled = Some(next?);
                    pre?
                }
                None => self.precompute(plan)?,
            };
            clock.lap(Category::Inspect);

            let census = self.rt.census()?;
            max_coexisting = max_coexisting.max(census.superbatches().len());
            if census.superbatches().len() > 2 {
                return Err(Error::InvalidArgument(format!(
                    "{} superbatches of runtime files on disk",
                    census.superbatches().len()
                )));
            }
            clock.lap(Category::DataPrep);

            superbatches.push(self.main_loop(plan, &sampled, &pre, &mut clock, &mut batches)?);
        }

        let total_accesses: u64 = batches.iter().map(|b| b.num_ids as u64).sum();
        let total_hits: u64 = batches.iter().map(|b| b.hits).sum();
        let total_misses: u64 = batches.iter().map(|b| b.misses).sum();
        let sum_io = |f: fn(&StageMetrics) -> IoSnapshot| {
            superbatches
                .iter()
                .fold(IoSnapshot::default(), |acc, m| acc + f(m))
        };
        Ok(RunReport {
            policy: self.config.policy.to_string(),
            feature_cache_entries: self.config.effective_cache_entries(),
            overlap: self.config.overlap,
            setup_secs: 0.0,
            total_wall_secs: clock.elapsed(),
            categories: clock.totals,
            sample_io: sum_io(|m| m.sample_io),
            gather_io: sum_io(|m| m.gather_io),
            init_io: sum_io(|m| m.init_io),
            superbatches,
            batches,
            max_coexisting_superbatches: max_coexisting,
            total_accesses,
            total_hits,
            total_misses,
            miss_ratio: if total_accesses == 0 {
                0.0
            } else {
                total_misses as f64 / total_accesses as f64
            },
        })
    }

    fn sample(&self, plan: &SuperbatchPlan) -> Result<Sampled> {
        let start = Instant::now();
        let stage = || -> Result<Sampled> {
            let loaded;
            let ncache = match (&self.retained_ncache, &self.config.neighbor_cache) {
                (Some(c), _) => Some(c),
                (None, Some(p)) => {
                    loaded = load_neighbor_cache(p, self.graph.num_nodes())?;
                    Some(&loaded)
                }
                (None, None) => None,
            };
            let report = match ncache {
                Some(cache) => {
                    let source = CachedNeighbors {
                        cache,
                        source: &self.graph,
                    };
                    self.sample_from(&source, plan)?
                }
                None => self.sample_from(&self.graph, plan)?,
            };
            let files = self.rt.census()?;
            let files = files.count(plan.sb, FileKind::Ids) + files.count(plan.sb, FileKind::Adj);
            Ok(Sampled {
                secs: 0.0,
                files,
                io: report.io,
                sampled_ids: report.sampled_ids,
            })
        };
        let mut out = stage().map_err(|e| self.stage_error("sample", e))?;
        out.secs = start.elapsed().as_secs_f64();
        Ok(out)
    }

    fn sample_from<S: NeighborSource + ?Sized>(
        &self,
        source: &S,
        plan: &SuperbatchPlan,
    ) -> Result<crate::sampler::SampleStageReport> {
        superbatch_sample(
            source,
            &plan.batches,
            plan.first_global_batch,
            &self.fanouts,
            self.config.seed,
            self.config.sampler_workers,
            &self.rt,
            plan.sb,
        )
    }

    fn precompute(&self, plan: &SuperbatchPlan) -> Result<Precomputed> {
        let start = Instant::now();
        let stage = || -> Result<Precomputed> {
            let n = self.graph.num_nodes();
            let sb = plan.sb;
            let trace = IdsFiles {
                rt: &self.rt,
                sb,
                count: plan.batches.len(),
            };
            let entries = self.config.effective_cache_entries();
            let mut predicted = Vec::with_capacity(plan.batches.len());
            match self.config.policy {
                Policy::Belady => {
                    let index = AccessIndex::build(&trace, n)?;
                    let init = compute_init_set(&trace, entries, n)?;
                    write_init(&self.rt.init_path(sb), &init)?;
                    simulate_with(&index, &trace, entries, &init, |i, cs, misses, _| {
                        predicted.push(misses);
                        write_update(&self.rt.update_path(sb, i), cs)
                    })?;
                }
                Policy::StaticDegree | Policy::None => {
                    let init = match &self.out_degrees {
                        Some(deg) => static_degree_set(deg, entries),
                        None => Vec::new(),
                    };
                    let mut resident = vec![false; n as usize];
                    for &v in &init {
                        resident[v as usize] = true;
                    }
                    write_init(&self.rt.init_path(sb), &init)?;
                    for i in 0..plan.batches.len() {
                        let ids = read_ids(&self.rt.ids_path(sb, i))?;
                        predicted
                            .push(ids.iter().filter(|&&v| !resident[v as usize]).count() as u64);
                        write_update(&self.rt.update_path(sb, i), &Default::default())?;
                    }
                }
                Policy::Lru => unreachable!("rejected by RunConfig::validate"),
            }
            let census = self.rt.census()?;
            Ok(Precomputed {
                secs: 0.0,
                files: census.count(sb, FileKind::Init) + census.count(sb, FileKind::Update),
                predicted_misses: predicted,
            })
        };
        let mut out = stage().map_err(|e| self.stage_error("precompute", e))?;
        out.secs = start.elapsed().as_secs_f64();
        Ok(out)
    }

    fn main_loop(
        &self,
        plan: &SuperbatchPlan,
        sampled: &Sampled,
        pre: &Precomputed,
        clock: &mut LapClock,
        records: &mut Vec<BatchRecord>,
    ) -> Result<StageMetrics> {
        let sb = plan.sb;
        let mut m = StageMetrics {
            superbatch: sb,
            epoch: plan.epoch,
            batches: plan.batches.len(),
            sample_secs: sampled.secs,
            precompute_secs: pre.secs,
            sample_files: sampled.files,
            precompute_files: pre.files,
            sample_io: sampled.io,
            sampled_ids: sampled.sampled_ids,
            ..Default::default()
        };
        clock.lap(Category::DataPrep);

        let init_stats = IoStats::new();
        let init = read_init(&self.rt.init_path(sb)).map_err(|e| self.stage_error("switch", e))?;
        let mut cache = FeatureCache::init(
            &self.features,
            &init,
            self.config.effective_cache_entries(),
            &init_stats,
        )?;
        m.init_io = init_stats.snapshot();
        m.switch_secs = clock.lap(Category::Switch).as_secs_f64();

        let gather_stats = IoStats::new();
        for i in 0..plan.batches.len() {
            let before = gather_stats.snapshot().pages_read;
            let ids =
                read_ids(&self.rt.ids_path(sb, i)).map_err(|e| self.stage_error("main loop", e))?;
            let adj =
                read_adj(&self.rt.adj_path(sb, i)).map_err(|e| self.stage_error("main loop", e))?;
            let (batch, counts) = cache.gather(&self.features, &ids, &gather_stats)?;
            m.data_prep_secs += clock.lap(Category::DataPrep).as_secs_f64();

            let checksum = compute_stub(&batch, &adj);
            m.compute_secs += clock.lap(Category::Compute).as_secs_f64();

            let cs = read_update(&self.rt.update_path(sb, i))
                .map_err(|e| self.stage_error("main loop", e))?;
            cache.apply_changeset(&batch, &ids, &cs)?;
            m.cache_update_secs += clock.lap(Category::CacheUpdate).as_secs_f64();

            let predicted = pre.predicted_misses[i];
            if counts.misses != predicted {
                return Err(Error::TraceMismatch(format!(
                    "superbatch {sb} iteration {i}: observed {} misses, precomputed {predicted}",
                    counts.misses
                )));
            }
            m.hits += counts.hits;
            m.misses += counts.misses;
            m.predicted_misses += predicted;
            records.push(BatchRecord {
                superbatch: sb,
                iteration: i,
                global_batch: plan.first_global_batch + i as u64,
                num_ids: ids.len(),
                hits: counts.hits,
                misses: counts.misses,
                predicted_misses: predicted,
                pages_read: gather_stats.snapshot().pages_read - before,
                checksum,
            });
        }
        m.gather_io = gather_stats.snapshot();

        m.files_deleted = self
            .rt
            .remove_superbatch(sb)
            .map_err(|e| self.stage_error("cleanup", e))?;
        m.data_prep_secs += clock.lap(Category::DataPrep).as_secs_f64();
        Ok(m)
    }

    /// Attaches the runtime-file census to I/O failures.
    fn stage_error(&self, stage: &'static str, e: Error) -> Error {
        if !matches!(e, Error::Io { .. }) {
            return e;
        }
        let census = match self.rt.census() {
            Ok(c) => {
                let per_sb: Vec<String> = c
                    .superbatches()
                    .iter()
                    .map(|&sb| {
                        let n: usize = [
                            FileKind::Ids,
                            FileKind::Adj,
                            FileKind::Init,
                            FileKind::Update,
                        ]
                        .iter()
                        .map(|&k| c.count(sb, k))
                        .sum();
                        format!("sb {sb}: {n}")
                    })
                    .collect();
                format!(
                    "{} runtime files on disk [{}]",
                    c.total(),
                    per_sb.join(", ")
                )
            }
            Err(_) => "runtime census unavailable".into(),
        };
        Error::Stage {
            stage,
            census,
            source: Box::new(e),
        }
    }
}

fn load_neighbor_cache(path: &std::path::Path, num_nodes: u64) -> Result<NeighborCache> {
    let cache = NeighborCache::load(path)?;
    if cache.num_nodes() != num_nodes {
        return Err(Error::InvalidArgument(format!(
            "neighbor cache covers {} nodes, graph has {num_nodes}",
            cache.num_nodes()
        )));
    }
    Ok(cache)
}

/// Opens the inputs, runs every superbatch and returns the report.
pub fn run_training(config: &RunConfig) -> Result<RunReport> {
    let start = Instant::now();
    let engine = Engine::open(config.clone())?;
    let setup = start.elapsed().as_secs_f64();
    let mut report = engine.run()?;
    report.setup_secs = setup;
    Ok(report)
}
