use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gridplan_bench::{Deployment, RunOptions, WorkloadSpec};
use gridplan_tools::BenchArgs;
use gridplan_core::geo::BoundingBox;
use gridplan_core::graph::GraphConfig;
use gridplan_core::osm::OverpassSource;
use gridplan_core::synth::{power_grid, SynthSpec};
use gridplan_service::conformance::{conformance_test, generate_golden, GoldenFile};
use gridplan_service::{run_service, Role, ServiceConfig};

#[derive(Parser)]
#[command(name = "gridplan", version, about = "UAV power-line inspection mission planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one service role until interrupted.
    Serve {
        #[arg(long)]
        role: Option<Role>,
        /// JSON config file; environment variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Replay golden plans against a deployment.
    Conformance {
        #[arg(long)]
        url: String,
        #[arg(long)]
        golden: PathBuf,
        #[arg(long, default_value_t = 60)]
        ready_timeout_s: u64,
    },
    /// Record golden plans from a reference deployment.
    Golden {
        #[arg(long)]
        url: String,
        /// Graph file or URL the requests are sampled from.
        #[arg(long)]
        graph: String,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Latency sweep over the sources x targets grid.
    Bench {
        #[arg(long)]
        endpoint: String,
        /// Workload spec (JSON); omitted fields take defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Graph file or URL the workload is drawn from. Defaults to
        /// `<endpoint>/graph`.
        #[arg(long)]
        graph: Option<String>,
        /// 100 repetitions per cell instead of the workload's count.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long, default_value = "monolith")]
        mode: String,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        #[arg(long, default_value_t = 900)]
        request_timeout_s: u64,
    },
    /// Side-by-side comparison of two bench output directories.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract power, railway and bridge data into a store directory.
    Ingest {
        /// south,west,north,east
        #[arg(long)]
        bbox: String,
        /// Overpass endpoint URL or saved response file.
        #[arg(long)]
        source: OverpassSource,
        #[arg(long)]
        railways: Option<OverpassSource>,
        #[arg(long)]
        bridges: Option<OverpassSource>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the infrastructure graph from a store directory.
    BuildGraph {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = GraphConfig::default().penalty_factor)]
        penalty_factor: f64,
        #[arg(long, default_value_t = GraphConfig::default().indirect_radius_m)]
        indirect_radius_m: f64,
        #[arg(long)]
        merge_bridges: bool,
    },
    /// Write a synthetic power grid as an Overpass response file.
    Synth {
        #[arg(long, default_value_t = 200)]
        towers: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_bbox(s: &str) -> Result<BoundingBox> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .context("bbox must be four numbers")?;
    let [south, west, north, east] = v[..] else {
        anyhow::bail!("bbox must be south,west,north,east");
    };
    Ok(BoundingBox::new(south, west, north, east)?)
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("tokio runtime starts")
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Serve { role, config } => {
            let cfg = ServiceConfig::load(config.as_deref(), role)?;
            runtime().block_on(run_service(cfg, |addr| {
                println!("listening on http://{addr}");
                let _ = std::io::stdout().flush();
            }))?;
            Ok(true)
        }
        Command::Conformance {
            url,
            golden,
            ready_timeout_s,
        } => {
            let golden = GoldenFile::load(&golden)?;
            let report = runtime().block_on(conformance_test(&url, &golden, Duration::from_secs(ready_timeout_s)))?;
            println!("{report}");
            Ok(report.passed())
        }
        Command::Golden {
            url,
            graph,
            count,
            seed,
            out,
        } => {
            let graph = gridplan_bench::load_graph(&graph)?;
            let requests = gridplan_tools::sample_requests(&graph, count, seed);
            let golden = runtime().block_on(generate_golden(&url, &requests))?;
            golden.save(&out)?;
            println!("{} golden cases written to {}", golden.cases.len(), out.display());
            Ok(true)
        }
        Command::Bench {
            endpoint,
            spec,
            out,
            graph,
            paper_scale,
            mode,
            replicas,
            request_timeout_s,
        } => {
            let mut spec = match spec {
                Some(p) => WorkloadSpec::load(&p)?,
                None => WorkloadSpec::default(),
            };
            if paper_scale {
                spec = spec.paper_scale();
            }
            let graph = graph.unwrap_or_else(|| format!("{}/graph", endpoint.trim_end_matches('/')));
            let args = BenchArgs {
                endpoint: &endpoint,
                spec,
                graph: &graph,
                deployment: Deployment { mode, replicas },
                options: RunOptions {
                    request_timeout: Duration::from_secs(request_timeout_s),
                    ..RunOptions::default()
                },
            };
            let report = gridplan_tools::bench(&args, &out)?;
            print!("{}", gridplan_tools::summary(&report));
            println!("{} samples written to {}", report.total_samples, out.display());
            Ok(true)
        }
        Command::Compare { a, b, out } => {
            let cmp = gridplan_tools::compare(&a, &b, &out)?;
            print!("{}", cmp.to_csv());
            Ok(true)
        }
        Command::Ingest {
            bbox,
            source,
            railways,
            bridges,
            out,
        } => {
            let bbox = parse_bbox(&bbox)?;
            let store = gridplan_tools::ingest(&bbox, &source, railways.as_ref(), bridges.as_ref(), &out)?;
            println!(
                "{} towers, {} lines, {} railway nodes, {} bridges stored in {}",
                store.tower_count(),
                store.power_lines().count(),
                store.railway_nodes().count(),
                store.bridges().count(),
                out.display()
            );
            Ok(true)
        }
        Command::BuildGraph {
            store,
            out,
            penalty_factor,
            indirect_radius_m,
            merge_bridges,
        } => {
            let cfg = GraphConfig {
                penalty_factor,
                indirect_radius_m,
                merge_bridges,
            };
            let g = gridplan_tools::build_graph_file(&store, &cfg, &out)?;
            println!("{} nodes, {} edges written to {}", g.node_count(), g.edges().len(), out.display());
            Ok(true)
        }
        Command::Synth { towers, seed, out } => {
            let doc = power_grid(&SynthSpec {
                towers,
                seed,
                ..Default::default()
            });
            std::fs::write(&out, serde_json::to_vec(&doc)?)?;
            println!("synthetic grid written to {}", out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
