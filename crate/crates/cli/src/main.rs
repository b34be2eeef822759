use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cect_core::ecmp::route_ecmp;
use cect_core::exact::solve_exact;
use cect_core::experiment::{self, ExperimentConfig, Method};
use cect_core::fluidsim::{generate_volumes, simulate, simulate_transfer, RateModel};
use cect_core::ga::{run_cect, GaConfig};
use cect_core::routing::{assemble, dump_assignment, parse_assignment_dump, validate, RoutingMatrix};
use cect_core::topology::{
    make_fat_tree, make_sample_topology, FatTreeCapacities, SampleTopology, Topology,
};
use cect_core::traffic::{compress_flows, generate_flows, ClassMix, FlowSet};
use cect_core::xpath::{precompute_xpaths, XPathTable};

#[derive(Parser)]
#[command(name = "cect-lab", version, about = "Congestion-aware flow routing lab")]
struct Cli {
    /// Master seed for generators and solvers.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Build a topology file.
    GenTopo(GenTopo),
    /// Generate a synthetic flow set.
    GenTraffic(GenTraffic),
    /// Enumerate x-paths of a topology.
    Paths(PathsArgs),
    /// Route a flow set.
    Solve(Solve),
    /// Evaluate a routing with the fluid model.
    Simulate(Simulate),
    /// Run a sweep described by a config file.
    Run { config: PathBuf },
    /// Aggregate a result directory into summary tables.
    Report { dir: PathBuf },
    /// Time the genetic solver over growing flow counts.
    Bench(Bench),
}

#[derive(Clone, Copy, ValueEnum)]
enum TopoKind {
    FatTree,
    Fig2a,
    Fig2b,
}

#[derive(Args)]
struct GenTopo {
    #[arg(long, value_enum, default_value_t = TopoKind::FatTree)]
    kind: TopoKind,
    #[arg(long, default_value_t = 4, allow_hyphen_values = true)]
    k: i64,
    /// Link capacity in Kb/s.
    #[arg(long, default_value_t = 1_000_000)]
    capacity: u64,
    #[arg(long)]
    edge_agg_capacity: Option<u64>,
    #[arg(long)]
    agg_core_capacity: Option<u64>,
    /// Output file, default `<out-dir>/topology.txt`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GenTraffic {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    n_flows: usize,
    #[arg(long, default_value = "micro=0.4,small=0.3,medium=0.2,big=0.1")]
    mix: ClassMix,
    #[arg(long, default_value_t = 0.5)]
    plr: f64,
    /// Merge same-pair flows below this demand.
    #[arg(long, requires = "compress_upper")]
    compress_lower: Option<u64>,
    #[arg(long, requires = "compress_lower")]
    compress_upper: Option<u64>,
    /// Output file, default `<out-dir>/flows.txt`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long)]
    topology: PathBuf,
    /// Hop bound x.
    #[arg(long, default_value_t = 10)]
    max_hops: usize,
    /// Paths kept per pair; 0 keeps all.
    #[arg(long, default_value_t = 50)]
    cap: usize,
}

impl TableArgs {
    fn load(&self) -> Result<(Topology, XPathTable)> {
        let topo = load_topology(&self.topology)?;
        let table = precompute_xpaths(&topo, self.max_hops, (self.cap > 0).then_some(self.cap))?;
        Ok((topo, table))
    }
}

#[derive(Args)]
struct PathsArgs {
    #[command(flatten)]
    table: TableArgs,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GaArgs {
    #[arg(long)]
    population: Option<usize>,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 0.02)]
    mut_min: f64,
    #[arg(long, default_value_t = 0.2)]
    mut_max: f64,
    #[arg(long, default_value_t = 10)]
    stall_window: usize,
    #[arg(long, default_value_t = 0.7)]
    mu_target: f64,
    #[arg(long)]
    penalty: Option<f64>,
    /// Start from random chromosomes only.
    #[arg(long)]
    no_seed_shortest: bool,
}

impl GaArgs {
    fn config(&self, seed: u64) -> GaConfig {
        GaConfig {
            population_size: self.population,
            max_iterations: self.max_iterations,
            mut_min: self.mut_min,
            mut_max: self.mut_max,
            stall_window: self.stall_window,
            mu_target: self.mu_target,
            penalty: self.penalty,
            seed_shortest: !self.no_seed_shortest,
            seed,
        }
    }
}

#[derive(Args)]
struct Solve {
    #[command(flatten)]
    table: TableArgs,
    #[arg(long)]
    flows: PathBuf,
    #[arg(long, default_value = "cect")]
    method: Method,
    #[command(flatten)]
    ga: GaArgs,
    #[arg(long)]
    ecmp_max_paths: Option<usize>,
    /// Largest search space the exact solver accepts.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    /// Assignment dump, default `<out-dir>/assignment.txt`.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct Simulate {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long)]
    flows: PathBuf,
    /// Assignment dump as written by `solve`.
    #[arg(long)]
    assignment: PathBuf,
    #[arg(long, default_value = "maxmin")]
    model: RateModel,
    /// Also run a volume-retirement transfer with this step length (s).
    #[arg(long)]
    transfer_interval: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    mean_duration: f64,
    #[arg(long, default_value_t = 1000)]
    transfer_steps: usize,
}

#[derive(Args)]
struct Bench {
    #[arg(long, default_value_t = 4)]
    k: i64,
    #[arg(long, default_value_t = 1_000_000)]
    capacity: u64,
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000")]
    sizes: Vec<usize>,
    #[arg(long, default_value = "micro=0.4,small=0.3,medium=0.2,big=0.1")]
    mix: ClassMix,
    #[arg(long, default_value_t = 0.5)]
    plr: f64,
    #[arg(long, default_value_t = 10)]
    max_hops: usize,
    #[arg(long, default_value_t = 50)]
    cap: usize,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

fn load_topology(path: &Path) -> Result<Topology> {
    Topology::load(path).with_context(|| format!("loading topology {}", path.display()))
}

fn load_flows(path: &Path) -> Result<FlowSet> {
    FlowSet::load(path).with_context(|| format!("loading flows {}", path.display()))
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn out_file(cli: &Cli, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cli.out_dir.join(default))
}

fn gen_topo(cli: &Cli, a: &GenTopo) -> Result<()> {
    let topo = match a.kind {
        TopoKind::FatTree => make_fat_tree(
            a.k,
            FatTreeCapacities {
                edge_agg: a.edge_agg_capacity.unwrap_or(a.capacity),
                agg_core: a.agg_core_capacity.unwrap_or(a.capacity),
            },
        )?,
        TopoKind::Fig2a => make_sample_topology(SampleTopology::Fig2a, a.capacity)?,
        TopoKind::Fig2b => make_sample_topology(SampleTopology::Fig2b, a.capacity)?,
    };
    let path = out_file(cli, &a.output, "topology.txt");
    write(&path, &topo.to_text())?;
    println!(
        "{}: {} switches, {} links",
        path.display(),
        topo.node_count(),
        topo.link_count()
    );
    Ok(())
}

fn gen_traffic(cli: &Cli, a: &GenTraffic) -> Result<()> {
    let topo = load_topology(&a.topology)?;
    let mut flows = generate_flows(&topo, a.n_flows, &a.mix, a.plr, cli.seed)?;
    if let (Some(lo), Some(hi)) = (a.compress_lower, a.compress_upper) {
        let before = flows.len();
        flows = compress_flows(&flows, lo, hi)?.0;
        eprintln!("compressed {before} flows into {}", flows.len());
    }
    let path = out_file(cli, &a.output, "flows.txt");
    write(&path, &flows.to_text())?;
    println!("{}: {} flows, total demand {}", path.display(), flows.len(), flows.total_demand());
    Ok(())
}

fn paths(a: &PathsArgs) -> Result<()> {
    let (_, table) = a.table.load()?;
    match &a.output {
        Some(p) => {
            write(p, &table.dump())?;
            println!("{}: {} paths", p.display(), table.len());
        }
        None => print!("{}", table.dump()),
    }
    Ok(())
}

fn solve(cli: &Cli, a: &Solve) -> Result<()> {
    let (topo, table) = a.table.load()?;
    let flows = load_flows(&a.flows)?;
    let start = Instant::now();
    let (assignment, generations) = match a.method {
        Method::Cect => {
            let out = run_cect(&flows, &table, &topo, &a.ga.config(cli.seed))?;
            write(&cli.out_dir.join("ga_stats.csv"), &out.stats_csv())?;
            let g = out.generations();
            (out.assignment, Some(g))
        }
        Method::Ecmp => (route_ecmp(&flows, &table, a.ecmp_max_paths)?, None),
        Method::Exact => (solve_exact(&flows, &table, &topo, a.budget as u128)?.assignment, None),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let matrix = assemble(&assignment, &flows, &table, &topo)?;
    let path = out_file(cli, &a.output, "assignment.txt");
    write(&path, &dump_assignment(&assignment, &flows, &table))?;

    let mu = matrix.mu.as_f64();
    match cli.format {
        Format::Csv => {
            println!("method,n_flows,mu,wall_time,generations");
            let g = generations.map(|g| g.to_string()).unwrap_or_default();
            println!("{},{},{mu},{elapsed},{g}", a.method, flows.len());
        }
        Format::Json => println!(
            "{}",
            json!({
                "method": a.method.name(),
                "n_flows": flows.len(),
                "mu": mu,
                "wall_time": elapsed,
                "generations": generations,
                "assignment": path,
            })
        ),
    }
    Ok(())
}

fn matrix_from_dump(text: &str, flows: &FlowSet, topo: &Topology) -> Result<(RoutingMatrix, Vec<u32>)> {
    let mut rows = parse_assignment_dump(text).map_err(anyhow::Error::msg)?;
    rows.sort_by_key(|r| r.0);
    ensure!(
        rows.len() == flows.len(),
        "assignment covers {} flows, flow set has {}",
        rows.len(),
        flows.len()
    );
    for (f, r) in flows.flows().iter().zip(&rows) {
        ensure!(f.id == r.0, "assignment is missing flow {}", f.id);
    }
    let labels = rows.iter().map(|r| r.1).collect();
    let hops: Vec<_> = rows.into_iter().map(|r| r.2).collect();
    Ok((RoutingMatrix::from_paths(flows, &hops, topo)?, labels))
}

fn simulate_cmd(cli: &Cli, a: &Simulate) -> Result<()> {
    let topo = load_topology(&a.topology)?;
    let flows = load_flows(&a.flows)?;
    let text = fs::read_to_string(&a.assignment)
        .with_context(|| format!("reading {}", a.assignment.display()))?;
    let (matrix, labels) = matrix_from_dump(&text, &flows, &topo)?;
    let violations = validate(&matrix, &flows, &topo);
    if let Some(v) = violations.first() {
        bail!("assignment is not a valid routing ({} violations), first: {v}", violations.len());
    }
    let sim = simulate(&matrix, &flows, &topo, a.model);
    let transfer = a.transfer_interval.map(|dt| {
        let volumes = generate_volumes(&flows, a.mean_duration, cli.seed);
        simulate_transfer(&matrix, &flows, &topo, &volumes, a.model, dt, a.transfer_steps)
    });

    match cli.format {
        Format::Csv => {
            write(&cli.out_dir.join("flows.csv"), &sim.flow_csv(&flows, &labels))?;
            write(&cli.out_dir.join("links.csv"), &sim.link_csv(&topo))?;
            write(&cli.out_dir.join("summary.csv"), &sim.summary_csv())?;
            if let Some(samples) = &transfer {
                let mut body = String::from("time,transferred,cumulative,active_flows\n");
                for s in samples {
                    body += &format!("{},{},{},{}\n", s.time, s.transferred, s.cumulative, s.active_flows);
                }
                write(&cli.out_dir.join("transfer.csv"), &body)?;
            }
            print!("{}", sim.summary_csv());
        }
        Format::Json => {
            let per_flow: Vec<_> = flows
                .flows()
                .iter()
                .zip(&sim.per_flow_rate)
                .zip(&labels)
                .map(|((f, r), l)| json!({"id": f.id, "demand": f.demand, "delivered": r, "label": l}))
                .collect();
            let links: Vec<_> = topo
                .links()
                .iter()
                .zip(&sim.link_utilization)
                .map(|(l, u)| json!({"src": l.src, "dst": l.dst, "utilization": u}))
                .collect();
            let transfer: Option<Vec<_>> = transfer.map(|t| {
                t.iter()
                    .map(|s| json!({"time": s.time, "transferred": s.transferred, "cumulative": s.cumulative, "active_flows": s.active_flows}))
                    .collect()
            });
            let body = json!({
                "throughput": sim.throughput(),
                "loss_pct": sim.loss_pct,
                "mu": sim.mu,
                "total_offered": sim.total_offered,
                "total_delivered": sim.total_delivered,
                "flows": per_flow,
                "links": links,
                "transfer": transfer,
            });
            let text = serde_json::to_string_pretty(&body)?;
            write(&cli.out_dir.join("simulation.json"), &(text + "\n"))?;
            println!(
                "{}",
                json!({"throughput": sim.throughput(), "loss_pct": sim.loss_pct, "mu": sim.mu})
            );
        }
    }
    Ok(())
}

/// Returns whether every cell succeeded.
fn run(cli: &Cli, config: &Path) -> Result<bool> {
    let cfg = ExperimentConfig::load(config)?;
    let threads = experiment::resolve_threads(cfg.sweep.threads).map_err(anyhow::Error::msg)?;
    fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let summary = experiment::run_experiment(&cfg, &cli.out_dir, threads)?;
    for r in summary.rows.iter().filter(|r| !r.ok()) {
        eprintln!("cell {} n={} r={}: {}", r.method, r.n_flows, r.replicate, r.status);
    }
    let failed = summary.failures();
    match cli.format {
        Format::Csv => println!(
            "{} cells, {} failed, results in {}",
            summary.rows.len(),
            failed,
            cli.out_dir.join("results.csv").display()
        ),
        Format::Json => println!(
            "{}",
            json!({"cells": summary.rows.len(), "failed": failed, "out_dir": cli.out_dir, "config_sha256": summary.manifest.config_sha256})
        ),
    }
    Ok(failed == 0)
}

fn report(cli: &Cli, dir: &Path) -> Result<()> {
    let rep = experiment::report(dir)?;
    // tables go next to the results unless an output directory was given
    let target = if cli.out_dir == Path::new(".") { dir } else { cli.out_dir.as_path() };
    fs::create_dir_all(target).with_context(|| format!("creating {}", target.display()))?;
    let files = rep.write(target, cli.format == Format::Json)?;
    match cli.format {
        Format::Csv => {
            print!("{}", rep.summary_csv());
            if !rep.ratios.is_empty() {
                print!("{}", rep.ratio_csv());
            }
        }
        Format::Json => println!("{}", serde_json::to_string_pretty(&rep)?),
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    if rep.failed_rows > 0 {
        eprintln!("{} failed rows skipped", rep.failed_rows);
    }
    Ok(())
}

fn bench(cli: &Cli, a: &Bench) -> Result<()> {
    let topo = make_fat_tree(a.k, FatTreeCapacities::uniform(a.capacity))?;
    let table = precompute_xpaths(&topo, a.max_hops, (a.cap > 0).then_some(a.cap))?;
    let ga = GaConfig {
        max_iterations: a.max_iterations,
        seed: cli.seed,
        ..GaConfig::default()
    };
    let rep = experiment::bench_scaling(&topo, &table, &a.sizes, &a.mix, a.plr, &ga, a.repeats)?;
    match cli.format {
        Format::Csv => {
            let body = rep.to_csv();
            write(&cli.out_dir.join("bench.csv"), &body)?;
            print!("{body}");
        }
        Format::Json => {
            let body = serde_json::to_string_pretty(&rep)? + "\n";
            write(&cli.out_dir.join("bench.json"), &body)?;
            print!("{body}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenTopo(a) => gen_topo(&cli, a).map(|_| true),
        Command::GenTraffic(a) => gen_traffic(&cli, a).map(|_| true),
        Command::Paths(a) => paths(a).map(|_| true),
        Command::Solve(a) => solve(&cli, a).map(|_| true),
        Command::Simulate(a) => simulate_cmd(&cli, a).map(|_| true),
        Command::Run { config } => run(&cli, config),
        Command::Report { dir } => report(&cli, dir).map(|_| true),
        Command::Bench(a) => bench(&cli, a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
