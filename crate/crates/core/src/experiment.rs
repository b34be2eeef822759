//! Sweep harness: TOML scenario configs, deterministic per-cell seeds,
//! result files, aggregation and timing benchmarks.
//!
//! A result directory holds `results.csv`, `manifest.json`, the topology,
//! every generated flow set under `flows/` and every solved assignment under
//! `assignments/`, so each row can be re-simulated from disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ecmp::route_ecmp;
use crate::exact::solve_exact;
use crate::fluidsim::{ratio, simulate, RateModel};
use crate::ga::{run_cect, GaConfig};
use crate::routing::{assemble, dump_assignment, RoutingAssignment};
use crate::topology::{
    make_fat_tree, make_sample_topology, Bandwidth, FatTreeCapacities, SampleTopology, Topology,
    TopologyError,
};
use crate::traffic::{compress_flows, generate_flows, ClassMix, CompressionMap, FlowSet, TrafficError};
use crate::xpath::{precompute_xpaths, XPathError, XPathTable};

/// Environment variable overriding the number of worker threads.
pub const THREADS_ENV: &str = "CECT_LAB_THREADS";

const TRAFFIC_DOMAIN: u64 = 1;
const SOLVER_DOMAIN: u64 = 2;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}:{line}: {msg}")]
    Config { path: String, line: usize, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    XPath(#[from] XPathError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("{path}: {msg}")]
    Results { path: PathBuf, msg: String },
    #[error("{0}: no result rows")]
    Empty(PathBuf),
    #[error("benchmark needs at least two sizes")]
    BenchSizes,
    #[error("thread pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cect,
    Ecmp,
    Exact,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cect => "cect",
            Self::Ecmp => "ecmp",
            Self::Exact => "exact",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cect" => Ok(Self::Cect),
            "ecmp" => Ok(Self::Ecmp),
            "exact" => Ok(Self::Exact),
            _ => Err(format!("unknown method `{s}` (expected cect, ecmp or exact)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TopologySpec {
    FatTree {
        k: i64,
        #[serde(default = "default_capacity")]
        capacity: Bandwidth,
        edge_agg_capacity: Option<Bandwidth>,
        agg_core_capacity: Option<Bandwidth>,
    },
    Sample {
        which: SampleTopology,
        #[serde(default = "default_capacity")]
        capacity: Bandwidth,
    },
    File {
        path: PathBuf,
    },
}

fn default_capacity() -> Bandwidth {
    // 1 Gb/s in Kb/s
    1_000_000
}

impl TopologySpec {
    /// Builds the topology; file paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Topology, TopologyError> {
        match self {
            Self::FatTree {
                k,
                capacity,
                edge_agg_capacity,
                agg_core_capacity,
            } => make_fat_tree(
                *k,
                FatTreeCapacities {
                    edge_agg: edge_agg_capacity.unwrap_or(*capacity),
                    agg_core: agg_core_capacity.unwrap_or(*capacity),
                },
            ),
            Self::Sample { which, capacity } => make_sample_topology(*which, *capacity),
            Self::File { path } => Topology::load(base.join(path)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSpec {
    pub max_hops: usize,
    /// Paths kept per pair; 0 keeps all.
    pub cap: usize,
}

impl Default for PathsSpec {
    fn default() -> Self {
        Self { max_hops: 10, cap: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub mix: ClassMix,
    #[serde(default)]
    pub plr: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FlowCounts {
    List(Vec<usize>),
    Range { start: usize, stop: usize, step: usize },
}

impl FlowCounts {
    pub fn values(&self) -> Vec<usize> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, stop, step } => (*start..=*stop).step_by((*step).max(1)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub n_flows: FlowCounts,
    pub methods: Vec<Method>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; `CECT_LAB_THREADS` takes precedence.
    pub threads: Option<usize>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionSpec {
    pub lower_bound: Bandwidth,
    pub upper_bound: Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcmpSpec {
    pub max_paths: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExactSpec {
    pub budget: u64,
}

impl Default for ExactSpec {
    fn default() -> Self {
        Self { budget: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub model: RateModel,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySpec,
    #[serde(default)]
    pub paths: PathsSpec,
    pub traffic: TrafficSpec,
    pub sweep: SweepSpec,
    pub compression: Option<CompressionSpec>,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default)]
    pub ecmp: EcmpSpec,
    #[serde(default)]
    pub exact: ExactSpec,
    #[serde(default)]
    pub simulation: SimulationSpec,
    /// Directory relative topology files resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    pub hash: String,
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Parses config text; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, ExperimentError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config {
            path: origin.to_string(),
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            msg: e.message().to_string(),
        })?;
        cfg.hash = sha256_hex(text.as_bytes());
        cfg.check().map_err(|(section, key, msg)| ExperimentError::Config {
            path: origin.to_string(),
            line: locate(text, section, key),
            msg,
        })?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), (&'static str, &'static str, String)> {
        if let TopologySpec::FatTree { k, .. } = self.topology {
            if k <= 0 || k % 2 != 0 {
                return Err(("topology", "k", format!("fat-tree arity must be even and positive, got {k}")));
            }
        }
        if self.paths.max_hops == 0 {
            return Err(("paths", "max_hops", "max_hops must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.traffic.plr) {
            return Err(("traffic", "plr", format!("plr must lie in [0, 1], got {}", self.traffic.plr)));
        }
        let counts = self.sweep.n_flows.values();
        if counts.is_empty() || counts.contains(&0) {
            return Err(("sweep", "n_flows", "n_flows must list positive counts".into()));
        }
        if let FlowCounts::Range { step: 0, .. } = self.sweep.n_flows {
            return Err(("sweep", "n_flows", "range step must be positive".into()));
        }
        if self.sweep.methods.is_empty() {
            return Err(("sweep", "methods", "at least one method is required".into()));
        }
        if self.sweep.replicates == 0 {
            return Err(("sweep", "replicates", "replicates must be at least 1".into()));
        }
        if self.sweep.threads == Some(0) {
            return Err(("sweep", "threads", "threads must be at least 1".into()));
        }
        if let Some(c) = self.compression {
            if c.lower_bound > c.upper_bound {
                return Err(("compression", "lower_bound", "lower_bound exceeds upper_bound".into()));
            }
        }
        self.ga.validate().map_err(|e| ("ga", "", e.to_string()))?;
        Ok(())
    }

    pub fn path_cap(&self) -> Option<usize> {
        (self.paths.cap > 0).then_some(self.paths.cap)
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]`, else of the section header, else 1.
fn locate(text: &str, section: &str, key: &str) -> usize {
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            if header.is_some() {
                break;
            }
            if line.trim_matches(|c| c == '[' || c == ']').trim() == section {
                header = Some(i + 1);
            }
            continue;
        }
        if header.is_some()
            && !key.is_empty()
            && line.split('=').next().is_some_and(|k| k.trim() == key)
        {
            return i + 1;
        }
    }
    header.unwrap_or(1)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Independent seed for stream `index` of `domain` under `master`.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((domain << 48) | index);
    rng.next_u64()
}

/// Worker count from the environment, else the config, else rayon's default.
pub fn resolve_threads(configured: Option<usize>) -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got `{v}`")),
        },
        Err(_) => Ok(configured),
    }
}

/// One sweep cell. Methods sharing `(n_flows, replicate)` see the same flows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub method: Method,
    pub n_flows: usize,
    pub replicate: usize,
    pub traffic_seed: u64,
    pub solver_seed: u64,
}

impl Cell {
    pub fn stem(&self) -> String {
        format!("{}_n{}_r{}", self.method, self.n_flows, self.replicate)
    }

    pub fn flows_stem(&self) -> String {
        format!("n{}_r{}", self.n_flows, self.replicate)
    }
}

pub fn plan_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let counts = cfg.sweep.n_flows.values();
    let reps = cfg.sweep.replicates;
    let master = cfg.sweep.master_seed;
    let mut cells = Vec::new();
    for (ni, &n) in counts.iter().enumerate() {
        for r in 0..reps {
            let traffic_seed = derive_seed(master, TRAFFIC_DOMAIN, (ni * reps + r) as u64);
            for &method in &cfg.sweep.methods {
                let index = cells.len();
                cells.push(Cell {
                    index,
                    method,
                    n_flows: n,
                    replicate: r,
                    traffic_seed,
                    solver_seed: derive_seed(master, SOLVER_DOMAIN, index as u64),
                });
            }
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub n_flows: usize,
    pub replicate: usize,
    pub seed: u64,
    /// Flows handed to the solver, after compression.
    pub solved_flows: Option<usize>,
    pub throughput: Option<f64>,
    pub loss_pct: Option<f64>,
    pub mu: Option<f64>,
    pub wall_time_total: Option<f64>,
    pub wall_time_per_flow: Option<f64>,
    pub status: String,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(cell: &Cell, msg: String) -> Self {
        Self {
            method: cell.method.to_string(),
            n_flows: cell.n_flows,
            replicate: cell.replicate,
            seed: cell.traffic_seed,
            solved_flows: None,
            throughput: None,
            loss_pct: None,
            mu: None,
            wall_time_total: None,
            wall_time_per_flow: None,
            status: format!("error: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    #[serde(flatten)]
    pub cell: Cell,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub master_seed: u64,
    pub switches: usize,
    pub links: usize,
    pub xpaths: usize,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub rows: Vec<ResultRow>,
    pub manifest: Manifest,
}

impl RunSummary {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok()).count()
    }
}

/// Maps a solution over merged flows back onto the original flows.
pub fn expand_assignment(
    assignment: &RoutingAssignment,
    map: &CompressionMap,
    original_len: usize,
) -> RoutingAssignment {
    let mut labels = vec![0; original_len];
    for (&new_id, members) in &map.merged {
        for &(orig, _) in members {
            labels[orig as usize - 1] = assignment.labels[new_id as usize - 1];
        }
    }
    for (&new_id, &orig) in &map.passthrough {
        labels[orig as usize - 1] = assignment.labels[new_id as usize - 1];
    }
    RoutingAssignment::new(labels)
}

struct CellOutput {
    row: ResultRow,
    dump: Option<String>,
}

fn solve_cell(
    cfg: &ExperimentConfig,
    cell: &Cell,
    flows: &FlowSet,
    table: &XPathTable,
    topology: &Topology,
) -> Result<(ResultRow, String), String> {
    let start = Instant::now();
    let (work, map) = match cfg.compression {
        Some(c) => {
            let (f, m) = compress_flows(flows, c.lower_bound, c.upper_bound).map_err(|e| e.to_string())?;
            (f, Some(m))
        }
        None => (flows.clone(), None),
    };
    let assignment = match cell.method {
        Method::Cect => {
            let ga = GaConfig {
                seed: cell.solver_seed,
                ..cfg.ga.clone()
            };
            run_cect(&work, table, topology, &ga).map_err(|e| e.to_string())?.assignment
        }
        Method::Ecmp => route_ecmp(&work, table, cfg.ecmp.max_paths).map_err(|e| e.to_string())?,
        Method::Exact => {
            solve_exact(&work, table, topology, cfg.exact.budget as u128)
                .map_err(|e| e.to_string())?
                .assignment
        }
    };
    let assignment = match &map {
        Some(m) => expand_assignment(&assignment, m, flows.len()),
        None => assignment,
    };
    let elapsed = start.elapsed().as_secs_f64();

    let matrix = assemble(&assignment, flows, table, topology).map_err(|e| e.to_string())?;
    let sim = simulate(&matrix, flows, topology, cfg.simulation.model);
    let row = ResultRow {
        method: cell.method.to_string(),
        n_flows: cell.n_flows,
        replicate: cell.replicate,
        seed: cell.traffic_seed,
        solved_flows: Some(work.len()),
        throughput: Some(sim.throughput()),
        loss_pct: Some(sim.loss_pct),
        mu: Some(matrix.mu.as_f64()),
        wall_time_total: Some(elapsed),
        wall_time_per_flow: Some(elapsed / cell.n_flows as f64),
        status: "ok".into(),
    };
    Ok((row, dump_assignment(&assignment, flows, table)))
}

/// Runs every cell of the sweep and writes the result directory.
///
/// Cell failures are recorded in their rows and do not stop the sweep.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    threads: Option<usize>,
) -> Result<RunSummary, ExperimentError> {
    let topology = cfg.topology.build(&cfg.base_dir)?;
    let table = precompute_xpaths(&topology, cfg.paths.max_hops, cfg.path_cap())?;
    let cells = plan_cells(cfg);

    for sub in ["flows", "assignments"] {
        let p = out_dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    topology.save(out_dir.join("topology.txt"))?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| ExperimentError::Pool(e.to_string()))?;

    let (flowsets, outputs) = pool.install(|| {
        // one flow set per (n_flows, replicate), shared by all methods
        let mut keys: Vec<(usize, usize, u64)> = cells
            .iter()
            .map(|c| (c.n_flows, c.replicate, c.traffic_seed))
            .collect();
        keys.dedup();
        let flowsets: BTreeMap<(usize, usize), Result<FlowSet, String>> = keys
            .par_iter()
            .map(|&(n, r, seed)| {
                let f = generate_flows(&topology, n, &cfg.traffic.mix, cfg.traffic.plr, seed)
                    .map_err(|e| e.to_string());
                ((n, r), f)
            })
            .collect();
        let outputs: Vec<CellOutput> = cells
            .par_iter()
            .map(|cell| match &flowsets[&(cell.n_flows, cell.replicate)] {
                Err(msg) => CellOutput {
                    row: ResultRow::failed(cell, msg.clone()),
                    dump: None,
                },
                Ok(flows) => match solve_cell(cfg, cell, flows, &table, &topology) {
                    Ok((row, dump)) => CellOutput { row, dump: Some(dump) },
                    Err(msg) => CellOutput {
                        row: ResultRow::failed(cell, msg),
                        dump: None,
                    },
                },
            })
            .collect();
        (flowsets, outputs)
    });

    for ((n, r), flows) in &flowsets {
        if let Ok(flows) = flows {
            flows.save(out_dir.join("flows").join(format!("n{n}_r{r}.txt")))?;
        }
    }
    let mut rows = Vec::with_capacity(outputs.len());
    let mut records = Vec::with_capacity(outputs.len());
    for (cell, out) in cells.into_iter().zip(outputs) {
        if let Some(dump) = &out.dump {
            let p = out_dir.join("assignments").join(format!("{}.txt", cell.stem()));
            fs::write(&p, dump).map_err(io_err(&p))?;
        }
        records.push(CellRecord {
            cell,
            status: out.row.status.clone(),
        });
        rows.push(out.row);
    }

    write_rows(&out_dir.join("results.csv"), &rows)?;
    let manifest = Manifest {
        config_sha256: cfg.hash.clone(),
        master_seed: cfg.sweep.master_seed,
        switches: topology.node_count(),
        links: topology.link_count(),
        xpaths: table.len(),
        cells: records,
    };
    let p = out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&p, json + "\n").map_err(io_err(&p))?;
    Ok(RunSummary { rows, manifest })
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> ExperimentError {
    ExperimentError::Results {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            stddev: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub method: String,
    pub n_flows: usize,
    pub runs: usize,
    pub throughput: Stats,
    pub loss_pct: Stats,
    pub mu: Stats,
    pub wall_time_total: Stats,
    pub wall_time_per_flow: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub n_flows: usize,
    /// Mean CECT throughput over mean ECMP throughput.
    pub throughput_ratio: f64,
    /// Mean ECMP loss over mean CECT loss.
    pub loss_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub aggregates: Vec<Aggregate>,
    pub ratios: Vec<RatioRow>,
    pub failed_rows: usize,
}

pub fn aggregate(rows: &[ResultRow]) -> Report {
    let mut groups: BTreeMap<(usize, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok()) {
        groups.entry((r.n_flows, r.method.clone())).or_default().push(r);
    }
    let stat = |g: &[&ResultRow], f: fn(&ResultRow) -> Option<f64>| {
        Stats::of(&g.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
    };
    let aggregates: Vec<Aggregate> = groups
        .iter()
        .map(|((n, m), g)| Aggregate {
            method: m.clone(),
            n_flows: *n,
            runs: g.len(),
            throughput: stat(g, |r| r.throughput),
            loss_pct: stat(g, |r| r.loss_pct),
            mu: stat(g, |r| r.mu),
            wall_time_total: stat(g, |r| r.wall_time_total),
            wall_time_per_flow: stat(g, |r| r.wall_time_per_flow),
        })
        .collect();

    let find = |n: usize, m: &str| aggregates.iter().find(|a| a.n_flows == n && a.method == m);
    let mut counts: Vec<usize> = aggregates.iter().map(|a| a.n_flows).collect();
    counts.dedup();
    let ratios = counts
        .into_iter()
        .filter_map(|n| {
            let (c, e) = (find(n, "cect")?, find(n, "ecmp")?);
            Some(RatioRow {
                n_flows: n,
                throughput_ratio: ratio(c.throughput.mean, e.throughput.mean),
                loss_ratio: ratio(e.loss_pct.mean, c.loss_pct.mean),
            })
        })
        .collect();
    Report {
        aggregates,
        ratios,
        failed_rows: rows.iter().filter(|r| !r.ok()).count(),
    }
}

/// Reads `results.csv` from a result directory and aggregates it.
pub fn report(dir: &Path) -> Result<Report, ExperimentError> {
    let path = dir.join("results.csv");
    if !path.exists() {
        return Err(ExperimentError::Empty(dir.to_path_buf()));
    }
    let rows = read_rows(&path)?;
    if rows.is_empty() {
        return Err(ExperimentError::Empty(dir.to_path_buf()));
    }
    Ok(aggregate(&rows))
}

impl Report {
    fn methods(&self) -> Vec<&str> {
        let mut m: Vec<&str> = self.aggregates.iter().map(|a| a.method.as_str()).collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    /// Wide table of one metric: a mean and stddev column per method.
    pub fn metric_csv(&self, metric: fn(&Aggregate) -> Stats) -> String {
        let methods = self.methods();
        let mut out = String::from("n_flows");
        for m in &methods {
            let _ = write!(out, ",{m}_mean,{m}_stddev");
        }
        out.push('\n');
        let mut counts: Vec<usize> = self.aggregates.iter().map(|a| a.n_flows).collect();
        counts.dedup();
        for n in counts {
            let _ = write!(out, "{n}");
            for m in &methods {
                match self.aggregates.iter().find(|a| a.n_flows == n && a.method == *m) {
                    Some(a) => {
                        let s = metric(a);
                        let _ = write!(out, ",{},{}", s.mean, s.stddev);
                    }
                    None => out.push_str(",,"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,n_flows,runs");
        for m in ["throughput", "loss_pct", "mu", "wall_time_total", "wall_time_per_flow"] {
            let _ = write!(out, ",{m}_mean,{m}_stddev,{m}_min,{m}_max");
        }
        out.push('\n');
        for a in &self.aggregates {
            let _ = write!(out, "{},{},{}", a.method, a.n_flows, a.runs);
            for s in [a.throughput, a.loss_pct, a.mu, a.wall_time_total, a.wall_time_per_flow] {
                let _ = write!(out, ",{},{},{},{}", s.mean, s.stddev, s.min, s.max);
            }
            out.push('\n');
        }
        out
    }

    pub fn ratio_csv(&self) -> String {
        let mut out = String::from("n_flows,throughput_ratio,loss_ratio\n");
        for r in &self.ratios {
            let _ = writeln!(out, "{},{},{}", r.n_flows, r.throughput_ratio, r.loss_ratio);
        }
        out
    }

    /// Writes the summary and the per-metric tables into `dir`.
    pub fn write(&self, dir: &Path, json: bool) -> Result<Vec<PathBuf>, ExperimentError> {
        let mut files = vec![
            ("summary.csv", self.summary_csv()),
            ("throughput.csv", self.metric_csv(|a| a.throughput)),
            ("loss.csv", self.metric_csv(|a| a.loss_pct)),
            ("time.csv", self.metric_csv(|a| a.wall_time_total)),
        ];
        if !self.ratios.is_empty() {
            files.push(("ratio.csv", self.ratio_csv()));
        }
        if json {
            let body = serde_json::to_string_pretty(self).expect("report serializes");
            files.push(("summary.json", body + "\n"));
        }
        let mut written = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io_err(&p))?;
            written.push(p);
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchPoint {
    pub n_flows: usize,
    /// Fastest of the repeats, in seconds.
    pub seconds: f64,
    pub per_flow_ms: f64,
    pub generations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    /// Least-squares slope of log(time) against log(flows).
    pub slope: f64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_flows,seconds,per_flow_ms,generations\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{}", p.n_flows, p.seconds, p.per_flow_ms, p.generations);
        }
        let _ = writeln!(out, "# slope,{}", self.slope);
        out
    }
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Times `run_cect` over growing flow counts.
///
/// The utilization target is disabled so every run performs the full
/// `max_iterations` generations.
pub fn bench_scaling(
    topology: &Topology,
    table: &XPathTable,
    sizes: &[usize],
    mix: &ClassMix,
    plr: f64,
    ga: &GaConfig,
    repeats: usize,
) -> Result<BenchReport, ExperimentError> {
    if sizes.len() < 2 {
        return Err(ExperimentError::BenchSizes);
    }
    let cfg = GaConfig {
        mu_target: f64::MIN_POSITIVE,
        ..ga.clone()
    };
    let mut points = Vec::new();
    for &n in sizes {
        let flows = generate_flows(topology, n, mix, plr, ga.seed)?;
        let mut best = f64::INFINITY;
        let mut generations = 0;
        for _ in 0..repeats.max(1) {
            let start = Instant::now();
            let out = run_cect(&flows, table, topology, &cfg).map_err(|e| ExperimentError::Results {
                path: PathBuf::new(),
                msg: e.to_string(),
            })?;
            best = best.min(start.elapsed().as_secs_f64());
            generations = out.generations();
        }
        points.push(BenchPoint {
            n_flows: n,
            seconds: best,
            per_flow_ms: best * 1e3 / n as f64,
            generations,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.n_flows as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    Ok(BenchReport {
        slope: loglog_slope(&xs, &ys),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[topology]
kind = "fat-tree"
k = 4
capacity = 1000

[paths]
max_hops = 4
cap = 8

[traffic]
mix = "micro=0.5,small=0.5"
plr = 0.5

[sweep]
n_flows = [10, 20]
methods = ["cect", "ecmp"]
replicates = 2
master_seed = 7

[ga]
max_iterations = 5
"#;

    #[test]
    fn parses_and_plans() {
        let cfg = ExperimentConfig::parse(SMALL, "small.toml").unwrap();
        assert_eq!(cfg.sweep.n_flows.values(), vec![10, 20]);
        assert_eq!(cfg.ga.max_iterations, 5);
        assert_eq!(cfg.ga.mut_min, 0.02);
        let cells = plan_cells(&cfg);
        assert_eq!(cells.len(), 8);
        // both methods of a replicate share traffic, solver seeds differ
        assert_eq!(cells[0].traffic_seed, cells[1].traffic_seed);
        assert_ne!(cells[0].traffic_seed, cells[2].traffic_seed);
        assert_ne!(cells[0].solver_seed, cells[1].solver_seed);
        assert_eq!(cfg.hash.len(), 64);
    }

    #[test]
    fn range_counts() {
        let r = FlowCounts::Range { start: 200, stop: 2000, step: 200 };
        assert_eq!(r.values().len(), 10);
        assert_eq!(*r.values().last().unwrap(), 2000);
    }

    #[test]
    fn syntax_error_has_line() {
        let bad = SMALL.replace("plr = 0.5", "plr = = 0.5");
        match ExperimentConfig::parse(&bad, "x.toml") {
            Err(ExperimentError::Config { path, line, .. }) => {
                assert_eq!(path, "x.toml");
                assert_eq!(line, 13);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_point_at_key() {
        let bad = SMALL.replace("plr = 0.5", "plr = 1.5");
        let err = ExperimentConfig::parse(&bad, "x.toml").unwrap_err();
        assert!(err.to_string().starts_with("x.toml:13:"), "{err}");
        let bad = SMALL.replace("\"cect\", \"ecmp\"", "\"cect\", \"ospf\"");
        let err = ExperimentConfig::parse(&bad, "x.toml").unwrap_err();
        assert!(err.to_string().starts_with("x.toml:17:"), "{err}");
        let bad = SMALL.replace("micro=0.5", "micro=0.6");
        let err = ExperimentConfig::parse(&bad, "x.toml").unwrap_err();
        assert!(err.to_string().starts_with("x.toml:12:"), "{err}");
        let bad = SMALL.replace("max_iterations = 5", "max_iterations = 5\nmut_min = 0.5");
        let err = ExperimentConfig::parse(&bad, "x.toml").unwrap_err();
        assert!(err.to_string().starts_with("x.toml:21:"), "{err}");
    }

    #[test]
    fn stats_basics() {
        let s = Stats::of(&[3.0]);
        assert_eq!((s.mean, s.stddev, s.min, s.max), (3.0, 0.0, 3.0, 3.0));
        let s = Stats::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.stddev - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [250.0, 500.0, 1000.0, 2000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        assert!((loglog_slope(&xs, &ys) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn expand_follows_groups() {
        let flows = FlowSet::from_triples([(1, 2, 1), (1, 2, 1), (1, 2, 50)]).unwrap();
        let (_, map) = compress_flows(&flows, 10, 10).unwrap();
        let merged = RoutingAssignment::new(vec![4, 9]);
        assert_eq!(expand_assignment(&merged, &map, 3).labels, vec![4, 4, 9]);
    }
}
