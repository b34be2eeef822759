//! Rate-level evaluation of a routing.
//!
//! Flows are fluid: each gets a delivered rate no larger than its demand, and
//! no link carries more than its capacity. Two allocation models are
//! offered. `Bottleneck` scales each flow by the worst offered-load ratio on
//! its path. `MaxMin` runs progressive filling and yields the max-min fair
//! allocation under per-flow demand caps.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::routing::RoutingMatrix;
use crate::topology::Topology;
use crate::traffic::FlowSet;

// relative slack for float comparisons against capacities and demands
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateModel {
    Bottleneck,
    #[default]
    MaxMin,
}

impl FromStr for RateModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bottleneck" => Ok(Self::Bottleneck),
            "maxmin" => Ok(Self::MaxMin),
            _ => Err(format!("unknown rate model `{s}` (expected bottleneck or maxmin)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Delivered rate per flow, in flow-set order.
    pub per_flow_rate: Vec<f64>,
    /// Delivered load over capacity, per link index.
    pub link_utilization: Vec<f64>,
    /// Maximum utilization of the offered (raw demand) load.
    pub mu: f64,
    pub total_offered: f64,
    pub total_delivered: f64,
    pub loss_pct: f64,
}

impl SimResult {
    /// Throughput is the total delivered rate.
    pub fn throughput(&self) -> f64 {
        self.total_delivered
    }

    /// Volume delivered over an interval of the given length.
    pub fn transferred(&self, interval: f64) -> f64 {
        self.total_delivered * interval
    }

    /// `id,demand,delivered,path_label` rows; `labels` may be empty.
    pub fn flow_csv(&self, flows: &FlowSet, labels: &[u32]) -> String {
        let mut out = String::from("id,demand,delivered,path_label\n");
        for (i, f) in flows.flows().iter().enumerate() {
            let label = labels.get(i).map(|l| l.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{:.6},{}", f.id, f.demand, self.per_flow_rate[i], label).unwrap();
        }
        out
    }

    /// `src,dst,load,utilization` rows over delivered load.
    pub fn link_csv(&self, topology: &Topology) -> String {
        let mut out = String::from("src,dst,load,utilization\n");
        for (l, &u) in topology.links().iter().zip(&self.link_utilization) {
            writeln!(out, "{},{},{:.6},{:.6}", l.src, l.dst, u * l.capacity as f64, u).unwrap();
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        format!(
            "throughput,loss_pct,mu\n{:.6},{:.6},{:.6}\n",
            self.throughput(),
            self.loss_pct,
            self.mu
        )
    }
}

fn flow_links(matrix: &RoutingMatrix) -> Vec<Vec<usize>> {
    matrix
        .indicator
        .iter()
        .map(|ind| ind.iter().filter(|(_, &v)| v > 0).map(|(&li, _)| li).collect())
        .collect()
}

pub fn simulate(matrix: &RoutingMatrix, flows: &FlowSet, topology: &Topology, model: RateModel) -> SimResult {
    let demand: Vec<f64> = flows.flows().iter().map(|f| f.demand as f64).collect();
    let capacity: Vec<f64> = topology.links().iter().map(|l| l.capacity as f64).collect();
    let paths = flow_links(matrix);
    let rates = match model {
        RateModel::Bottleneck => bottleneck_rates(&paths, &demand, &capacity),
        RateModel::MaxMin => max_min_rates(&paths, &demand, &capacity),
    };
    summarize(rates, &paths, &demand, &capacity, matrix.mu.as_f64())
}

fn summarize(rates: Vec<f64>, paths: &[Vec<usize>], demand: &[f64], capacity: &[f64], mu: f64) -> SimResult {
    let mut delivered_load = vec![0.0; capacity.len()];
    for (p, &r) in paths.iter().zip(&rates) {
        for &li in p {
            delivered_load[li] += r;
        }
    }
    let total_offered: f64 = demand.iter().sum();
    let total_delivered: f64 = rates.iter().sum();
    let loss_pct = if total_offered > 0.0 {
        (100.0 * (1.0 - total_delivered / total_offered)).clamp(0.0, 100.0)
    } else {
        0.0
    };
    SimResult {
        link_utilization: delivered_load
            .iter()
            .zip(capacity)
            .map(|(l, c)| l / c)
            .collect(),
        per_flow_rate: rates,
        mu,
        total_offered,
        total_delivered,
        loss_pct,
    }
}

/// Each flow keeps `min(1, capacity / offered)` of its demand, taken at its
/// worst link; a repair pass then rescales flows on any link still above
/// capacity.
pub fn bottleneck_rates(paths: &[Vec<usize>], demand: &[f64], capacity: &[f64]) -> Vec<f64> {
    let mut offered = vec![0.0; capacity.len()];
    for (p, &d) in paths.iter().zip(demand) {
        for &li in p {
            offered[li] += d;
        }
    }
    let mut rates: Vec<f64> = paths
        .iter()
        .zip(demand)
        .map(|(p, &d)| {
            let scale = p
                .iter()
                .map(|&li| (capacity[li] / offered[li]).min(1.0))
                .fold(1.0, f64::min);
            d * scale
        })
        .collect();

    let mut crossing: Vec<Vec<usize>> = vec![Vec::new(); capacity.len()];
    for (f, p) in paths.iter().enumerate() {
        for &li in p {
            crossing[li].push(f);
        }
    }
    for (li, fs) in crossing.iter().enumerate() {
        let load: f64 = fs.iter().map(|&f| rates[f]).sum();
        if load > capacity[li] * (1.0 + TOL) {
            let scale = capacity[li] / load;
            for &f in fs {
                rates[f] *= scale;
            }
        }
    }
    rates
}

/// Progressive filling with demand caps.
///
/// All unfrozen flows rise together; a flow freezes when it reaches its
/// demand or when any link on its path saturates.
pub fn max_min_rates(paths: &[Vec<usize>], demand: &[f64], capacity: &[f64]) -> Vec<f64> {
    let n = demand.len();
    let mut rate = vec![0.0; n];
    let mut frozen = vec![false; n];
    let mut crossing: Vec<Vec<usize>> = vec![Vec::new(); capacity.len()];
    for (f, p) in paths.iter().enumerate() {
        for &li in p {
            crossing[li].push(f);
        }
        if p.is_empty() {
            // nothing constrains a flow without links except its demand
            rate[f] = demand[f];
            frozen[f] = true;
        }
    }
    let mut residual = capacity.to_vec();
    let mut active: Vec<usize> = vec![0; capacity.len()];
    for (li, fs) in crossing.iter().enumerate() {
        active[li] = fs.len();
    }

    loop {
        let mut step = f64::INFINITY;
        for f in (0..n).filter(|&f| !frozen[f]) {
            step = step.min(demand[f] - rate[f]);
        }
        if step == f64::INFINITY {
            break;
        }
        for li in 0..capacity.len() {
            if active[li] > 0 {
                step = step.min(residual[li] / active[li] as f64);
            }
        }
        let step = step.max(0.0);

        for f in (0..n).filter(|&f| !frozen[f]) {
            rate[f] += step;
        }
        for li in 0..capacity.len() {
            residual[li] -= step * active[li] as f64;
        }

        let saturated: Vec<bool> = residual
            .iter()
            .zip(capacity)
            .map(|(&r, &c)| r <= c * TOL)
            .collect();
        let mut froze_any = false;
        for f in 0..n {
            if frozen[f] {
                continue;
            }
            if rate[f] >= demand[f] * (1.0 - TOL) || paths[f].iter().any(|&li| saturated[li]) {
                frozen[f] = true;
                froze_any = true;
                rate[f] = rate[f].min(demand[f]);
                for &li in &paths[f] {
                    active[li] -= 1;
                }
            }
        }
        if !froze_any {
            // guards against a stall from rounding; every round must freeze something
            break;
        }
    }
    rate
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub a: SimResult,
    pub b: SimResult,
    /// Throughput of `a` over throughput of `b`.
    pub throughput_ratio: f64,
    /// Loss of `b` over loss of `a`.
    pub loss_ratio: f64,
}

/// `num / den`, with equal values giving 1 and a zero denominator infinity.
pub fn ratio(num: f64, den: f64) -> f64 {
    if num == den {
        1.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn compare(
    a: &RoutingMatrix,
    b: &RoutingMatrix,
    flows: &FlowSet,
    topology: &Topology,
    model: RateModel,
) -> ComparisonReport {
    let a = simulate(a, flows, topology, model);
    let b = simulate(b, flows, topology, model);
    ComparisonReport {
        throughput_ratio: ratio(a.throughput(), b.throughput()),
        loss_ratio: ratio(b.loss_pct, a.loss_pct),
        a,
        b,
    }
}

/// Per-flow volumes for a transfer run. Each flow keeps its demand for a
/// duration drawn uniformly from `[0.5, 1.5] * mean_duration`, so volumes
/// follow the size-class mix of the flow set.
pub fn generate_volumes(flows: &FlowSet, mean_duration: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    flows
        .flows()
        .iter()
        .map(|f| f.demand as f64 * mean_duration * rng.gen_range(0.5..=1.5))
        .collect()
}

/// One step of a volume-retirement run.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferSample {
    /// End time of the interval.
    pub time: f64,
    /// Volume moved during the interval.
    pub transferred: f64,
    pub cumulative: f64,
    /// Flows still holding volume at the start of the interval.
    pub active_flows: usize,
}

/// Moves a fixed volume per flow through the network in steps of
/// `interval`; finished flows leave and free their share. Rates are
/// re-allocated among the remaining flows every step.
pub fn simulate_transfer(
    matrix: &RoutingMatrix,
    flows: &FlowSet,
    topology: &Topology,
    volumes: &[f64],
    model: RateModel,
    interval: f64,
    max_steps: usize,
) -> Vec<TransferSample> {
    let demand: Vec<f64> = flows.flows().iter().map(|f| f.demand as f64).collect();
    let capacity: Vec<f64> = topology.links().iter().map(|l| l.capacity as f64).collect();
    let all_paths = flow_links(matrix);
    let mut remaining = volumes.to_vec();
    let mut cumulative = 0.0;
    let mut out = Vec::new();
    for step in 0..max_steps {
        let live: Vec<usize> = (0..remaining.len()).filter(|&f| remaining[f] > 0.0).collect();
        if live.is_empty() {
            break;
        }
        let paths: Vec<Vec<usize>> = live.iter().map(|&f| all_paths[f].clone()).collect();
        let d: Vec<f64> = live.iter().map(|&f| demand[f]).collect();
        let rates = match model {
            RateModel::Bottleneck => bottleneck_rates(&paths, &d, &capacity),
            RateModel::MaxMin => max_min_rates(&paths, &d, &capacity),
        };
        let mut moved = 0.0;
        for (&f, r) in live.iter().zip(rates) {
            let m = (r * interval).min(remaining[f]);
            remaining[f] -= m;
            if remaining[f] <= volumes[f] * TOL {
                remaining[f] = 0.0;
            }
            moved += m;
        }
        cumulative += moved;
        out.push(TransferSample {
            time: (step + 1) as f64 * interval,
            transferred: moved,
            cumulative,
            active_flows: live.len(),
        });
    }
    out
}
