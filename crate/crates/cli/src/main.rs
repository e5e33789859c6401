use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gnnprep::baselines::{simulate_policy, Policy};
use gnnprep::changeset::{IdsFiles, Trace};
use gnnprep::graphgen::{write_dataset, GenSpec};
use gnnprep::neighbor_cache::NeighborCache;
use gnnprep::pipeline::{
    plan_superbatches, run_training, sample_trace, Categories, RunConfig, RunReport,
};
use gnnprep::runtime::{FileKind, RuntimeDir};
use gnnprep::store::CscGraph;

#[derive(Parser)]
#[command(
    name = "gnnprep",
    version,
    about = "Disk-based GNN mini-batch preparation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic power-law graph and its feature table.
    Gen {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        nodes: u64,
        #[arg(long)]
        avg_degree: f64,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        dim: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the neighbor cache of a graph under a byte budget.
    Preprocess {
        #[arg(long)]
        graph: PathBuf,
        /// Budget in bytes, address table included.
        #[arg(long)]
        budget: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train with the staged pipeline and write report.json / report.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        overlap: Option<Switch>,
        #[arg(long)]
        feature_cache_entries: Option<usize>,
        #[arg(long)]
        policy: Option<Policy>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_superbatches: Option<usize>,
        /// Report directory; defaults to the config file's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Miss ratios of cache policies over a capacity grid, as CSV.
    Simulate {
        /// Run config whose superbatches are sampled in memory.
        #[arg(
            long,
            conflicts_with = "trace_dir",
            required_unless_present = "trace_dir"
        )]
        config: Option<PathBuf>,
        /// Directory of ids_{sb}_{i}.bin files kept from a sample stage.
        #[arg(long, requires = "graph")]
        trace_dir: Option<PathBuf>,
        /// Graph the traces were sampled from (node count and out-degrees).
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "belady,static_degree,lru,none"
        )]
        policies: Vec<Policy>,
        /// Capacities in percent of the node count.
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        capacities: Vec<f64>,
        /// Number of superbatches to simulate (config mode).
        #[arg(long, default_value_t = 1)]
        superbatches: usize,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the stage-time breakdown of a report.json.
    Report { report: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or_default();
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already render their sources
            let mut kind = "error";
            let mut parts = Vec::new();
            for cause in e.chain() {
                parts.push(cause.to_string());
                if let Some(err) = cause.downcast_ref::<gnnprep::Error>() {
                    kind = err.kind();
                    break;
                }
            }
            eprintln!("error: {kind}: {}", parts.join(": ").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Gen {
            nodes,
            avg_degree,
            dim,
            seed,
            out,
        } => cmd_gen(nodes, avg_degree, dim, seed, &out),
        Command::Preprocess { graph, budget, out } => cmd_preprocess(&graph, budget, &out),
        Command::Run {
            config,
            overlap,
            feature_cache_entries,
            policy,
            seed,
            max_superbatches,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = overlap {
                cfg.overlap = matches!(o, Switch::On);
            }
            if let Some(f) = feature_cache_entries {
                cfg.feature_cache_entries = f;
            }
            if let Some(p) = policy {
                cfg.policy = p;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if max_superbatches.is_some() {
                cfg.max_superbatches = max_superbatches;
            }
            let out =
                out.unwrap_or_else(|| config.parent().unwrap_or(Path::new(".")).to_path_buf());
            cmd_run(&cfg, &out)
        }
        Command::Simulate {
            config,
            trace_dir,
            graph,
            policies,
            capacities,
            superbatches,
            out,
        } => {
            let rows = match (config, trace_dir) {
                (Some(c), _) => simulate_from_config(
                    &c,
                    graph.as_deref(),
                    &policies,
                    &capacities,
                    superbatches,
                )?,
                (None, Some(dir)) => {
                    let graph = graph.ok_or_else(|| anyhow!("--trace-dir needs --graph"))?;
                    simulate_from_dir(&dir, &graph, &policies, &capacities)?
                }
                (None, None) => bail!("either --config or --trace-dir is required"),
            };
            write_csv(&rows, out.as_deref())
        }
        Command::Report { report } => cmd_report(&report),
    }
}

fn cmd_gen(nodes: u64, avg_degree: f64, dim: u32, seed: u64, out: &Path) -> Result<()> {
    let spec = GenSpec::new(nodes, avg_degree, dim, seed);
    spec.validate()?;
    let s = write_dataset(&spec, out)?;
    println!(
        "nodes={} edges={} graph={} graph_bytes={} features={} feature_bytes={}",
        s.num_nodes,
        s.num_edges,
        s.graph_path.display(),
        s.graph_bytes,
        s.features_path.display(),
        s.feature_bytes
    );
    Ok(())
}

fn cmd_preprocess(graph: &Path, budget: u64, out: &Path) -> Result<()> {
    let g = CscGraph::read_from(graph)?;
    let cache = NeighborCache::build(&g, budget)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    cache.persist(out)?;
    println!(
        "cached_nodes={} bytes={} budget={} out={}",
        cache.cached_nodes(),
        cache.size_bytes(),
        budget,
        out.display()
    );
    Ok(())
}

fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let report = run_training(cfg)?;
    let (json, csv) = report.write(out)?;
    println!(
        "superbatches={} batches={} miss_ratio={:.6} total_wall_secs={:.6} report={} csv={}",
        report.superbatches.len(),
        report.batches.len(),
        report.miss_ratio,
        report.total_wall_secs,
        json.display(),
        csv.display()
    );
    Ok(())
}

struct Row {
    policy: Policy,
    capacity: usize,
    misses: u64,
    accesses: u64,
}

fn capacity_grid(num_nodes: u64, percents: &[f64]) -> Result<Vec<usize>> {
    percents
        .iter()
        .map(|&p| {
            if !(0.0..=100.0).contains(&p) {
                bail!("capacity {p}% is outside 0..=100");
            }
            Ok((num_nodes as f64 * p / 100.0).floor() as usize)
        })
        .collect()
}

/// Runs every policy and capacity over each trace; misses and accesses are
/// summed across traces. Every trace starts from its policy's initial state.
fn simulate_grid<T: Trace + ?Sized>(
    traces: &[&T],
    num_nodes: u64,
    out_degrees: &[u64],
    policies: &[Policy],
    capacities: &[usize],
) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for &policy in policies {
        for &capacity in capacities {
            let mut row = Row {
                policy,
                capacity,
                misses: 0,
                accesses: 0,
            };
            for trace in traces {
                let r = simulate_policy(*trace, num_nodes, capacity, policy, Some(out_degrees))?;
                row.misses += r.total_misses();
                row.accesses += r.total_accesses;
            }
            rows.push(row);
        }
    }
    Ok(rows)
}

fn simulate_from_config(
    path: &Path,
    graph_override: Option<&Path>,
    policies: &[Policy],
    percents: &[f64],
    superbatches: usize,
) -> Result<Vec<Row>> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(g) = graph_override {
        cfg.graph = g.to_path_buf();
    }
    let graph = CscGraph::read_from(&cfg.graph)?;
    let n = graph.num_nodes();
    let plans = plan_superbatches(&cfg, n)?;
    let traces = plans
        .iter()
        .take(superbatches.max(1))
        .map(|p| sample_trace(&graph, &cfg, p))
        .collect::<gnnprep::Result<Vec<_>>>()?;
    let refs: Vec<&Vec<Vec<u64>>> = traces.iter().collect();
    simulate_grid(
        &refs,
        n,
        &graph.out_degrees(),
        policies,
        &capacity_grid(n, percents)?,
    )
}

fn simulate_from_dir(
    dir: &Path,
    graph: &Path,
    policies: &[Policy],
    percents: &[f64],
) -> Result<Vec<Row>> {
    let graph = CscGraph::read_from(graph)?;
    let n = graph.num_nodes();
    let rt = RuntimeDir::create(dir)?;
    let census = rt.census()?;
    let traces: Vec<IdsFiles> = census
        .superbatches()
        .into_iter()
        .map(|sb| IdsFiles {
            rt: &rt,
            sb,
            count: census.count(sb, FileKind::Ids),
        })
        .filter(|t| t.count > 0)
        .collect();
    if traces.is_empty() {
        bail!("no ids files in {}", dir.display());
    }
    let refs: Vec<&IdsFiles> = traces.iter().collect();
    simulate_grid(
        &refs,
        n,
        &graph.out_degrees(),
        policies,
        &capacity_grid(n, percents)?,
    )
}

fn write_csv(rows: &[Row], out: Option<&Path>) -> Result<()> {
    let mut text = String::from("policy,capacity,miss_ratio\n");
    for r in rows {
        let ratio = if r.accesses == 0 {
            0.0
        } else {
            r.misses as f64 / r.accesses as f64
        };
        text.push_str(&format!("{},{},{ratio:.6}\n", r.policy, r.capacity));
    }
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_report(path: &Path) -> Result<()> {
    let report = RunReport::read(path)?;
    let total = report.total_wall_secs;
    let sum = report.categories.sum();
    println!("{:<14}{:>12}{:>9}", "category", "seconds", "share");
    for (name, secs) in Categories::NAMES.iter().zip(report.categories.values()) {
        let share = if total > 0.0 {
            100.0 * secs / total
        } else {
            0.0
        };
        println!("{name:<14}{secs:>12.6}{share:>8.1}%");
    }
    println!("{:<14}{:>12.6}", "total", total);
    println!(
        "policy={} feature_cache_entries={} superbatches={} batches={} miss_ratio={:.6}",
        report.policy,
        report.feature_cache_entries,
        report.superbatches.len(),
        report.batches.len(),
        report.miss_ratio
    );
    if (sum - total).abs() > 0.01 * total {
        return Err(gnnprep::Error::format(
            path,
            format!("categories sum to {sum:.6} s but the total is {total:.6} s"),
        )
        .into());
    }
    Ok(())
}
