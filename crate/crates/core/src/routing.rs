//! Per-flow link-indicator model, constraint validation, and exact maximum
//! link utilization.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::topology::{Bandwidth, SwitchId, Topology};
use crate::traffic::{FlowId, FlowSet};
use crate::xpath::{format_hops, PathLabel, XPathTable};

/// Hot-spot threshold: links at or above 70% utilization trigger rerouting.
pub const DEFAULT_MU_TARGET: f64 = 0.7;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RoutingError {
    #[error("assignment has {got} labels for {expected} flows")]
    LengthMismatch { expected: usize, got: usize },
    #[error("flow {flow}: label {label} does not exist")]
    UnknownLabel { flow: FlowId, label: PathLabel },
    #[error("flow {flow}: label {label} runs {path_src}->{path_dst}, flow runs {flow_src}->{flow_dst}")]
    Infeasible {
        flow: FlowId,
        label: PathLabel,
        path_src: SwitchId,
        path_dst: SwitchId,
        flow_src: SwitchId,
        flow_dst: SwitchId,
    },
    #[error("flow {flow}: path uses missing link {src}->{dst}")]
    MissingLink {
        flow: FlowId,
        src: SwitchId,
        dst: SwitchId,
    },
}

/// A ratio `load / capacity`, compared exactly.
#[derive(Debug, Clone, Copy)]
pub struct Utilization {
    pub load: Bandwidth,
    pub capacity: Bandwidth,
}

impl Utilization {
    pub const ZERO: Self = Self {
        load: 0,
        capacity: 1,
    };

    pub fn new(load: Bandwidth, capacity: Bandwidth) -> Self {
        debug_assert!(capacity > 0);
        Self { load, capacity }
    }

    pub fn as_f64(self) -> f64 {
        self.load as f64 / self.capacity as f64
    }

    /// `self <= target`, with `target` a real threshold.
    pub fn at_most(self, target: f64) -> bool {
        self.as_f64() <= target
    }
}

impl PartialEq for Utilization {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Utilization {}

impl PartialOrd for Utilization {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Utilization {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.load as u128 * other.capacity as u128).cmp(&(other.load as u128 * self.capacity as u128))
    }
}

impl fmt::Display for Utilization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.as_f64())
    }
}

/// One x-path label per flow, aligned with the flow set's order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RoutingAssignment {
    pub labels: Vec<PathLabel>,
}

impl RoutingAssignment {
    pub fn new(labels: Vec<PathLabel>) -> Self {
        Self { labels }
    }

    /// Checks every label against its flow's endpoints.
    pub fn check(&self, flows: &FlowSet, table: &XPathTable) -> Result<(), RoutingError> {
        if self.labels.len() != flows.len() {
            return Err(RoutingError::LengthMismatch {
                expected: flows.len(),
                got: self.labels.len(),
            });
        }
        for (f, &label) in flows.flows().iter().zip(&self.labels) {
            let p = table.path(label).ok_or(RoutingError::UnknownLabel {
                flow: f.id,
                label,
            })?;
            if (p.src(), p.dst()) != (f.src, f.dst) {
                return Err(RoutingError::Infeasible {
                    flow: f.id,
                    label,
                    path_src: p.src(),
                    path_dst: p.dst(),
                    flow_src: f.src,
                    flow_dst: f.dst,
                });
            }
        }
        Ok(())
    }

    pub fn total_hops(&self, table: &XPathTable) -> usize {
        self.labels
            .iter()
            .map(|&l| table.path(l).map_or(0, |p| p.hop_count()))
            .sum()
    }
}

/// Routing tensor of one flow: link index -> indicator value. Assembled
/// matrices only hold ones; other values exist to represent broken input.
pub type FlowIndicator = BTreeMap<usize, u32>;

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix {
    pub indicator: Vec<FlowIndicator>,
    /// Summed demand per link index.
    pub link_load: Vec<Bandwidth>,
    pub mu: Utilization,
}

impl RoutingMatrix {
    /// Builds loads from raw indicators, weighting each entry by its value.
    pub fn from_indicator(indicator: Vec<FlowIndicator>, flows: &FlowSet, topology: &Topology) -> Self {
        let mut link_load = vec![0; topology.link_count()];
        for (f, ind) in flows.flows().iter().zip(&indicator) {
            for (&li, &v) in ind {
                link_load[li] += f.demand * v as Bandwidth;
            }
        }
        let mu = max_utilization(&link_load, topology);
        Self {
            indicator,
            link_load,
            mu,
        }
    }

    /// Builds the matrix from explicit hop sequences, one per flow.
    pub fn from_paths(
        flows: &FlowSet,
        paths: &[Vec<SwitchId>],
        topology: &Topology,
    ) -> Result<Self, RoutingError> {
        if paths.len() != flows.len() {
            return Err(RoutingError::LengthMismatch {
                expected: flows.len(),
                got: paths.len(),
            });
        }
        let mut indicator = Vec::with_capacity(flows.len());
        for (f, hops) in flows.flows().iter().zip(paths) {
            let mut ind = FlowIndicator::new();
            for w in hops.windows(2) {
                let li = topology.link_by_ids(w[0], w[1]).ok_or(RoutingError::MissingLink {
                    flow: f.id,
                    src: w[0],
                    dst: w[1],
                })?;
                *ind.entry(li).or_default() += 1;
            }
            indicator.push(ind);
        }
        Ok(Self::from_indicator(indicator, flows, topology))
    }

    pub fn utilization(&self, link: usize, topology: &Topology) -> f64 {
        self.link_load[link] as f64 / topology.link(link).capacity as f64
    }

    /// Per-link CSV: `src,dst,capacity,load,utilization`.
    pub fn load_csv(&self, topology: &Topology) -> String {
        let mut out = String::from("src,dst,capacity,load,utilization\n");
        for (li, l) in topology.links().iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{:.6}",
                l.src,
                l.dst,
                l.capacity,
                self.link_load[li],
                self.utilization(li, topology)
            )
            .unwrap();
        }
        out
    }
}

pub fn max_utilization(link_load: &[Bandwidth], topology: &Topology) -> Utilization {
    link_load
        .iter()
        .zip(topology.links())
        .map(|(&load, l)| Utilization::new(load, l.capacity))
        .max()
        .unwrap_or(Utilization::ZERO)
        .max(Utilization::ZERO)
}

/// Adds every flow's demand onto the links of its chosen path.
///
/// Labels must already be known to be valid for `table`.
pub fn accumulate_loads(
    labels: &[PathLabel],
    demands: &[Bandwidth],
    table: &XPathTable,
    link_load: &mut [Bandwidth],
) {
    for (&label, &d) in labels.iter().zip(demands) {
        for &li in &table.paths()[label as usize - 1].links {
            link_load[li] += d;
        }
    }
}

pub fn assemble(
    assignment: &RoutingAssignment,
    flows: &FlowSet,
    table: &XPathTable,
    topology: &Topology,
) -> Result<RoutingMatrix, RoutingError> {
    assignment.check(flows, table)?;
    let indicator = assignment
        .labels
        .iter()
        .map(|&l| table.path(l).unwrap().links.iter().map(|&li| (li, 1)).collect())
        .collect();
    let demands: Vec<Bandwidth> = flows.flows().iter().map(|f| f.demand).collect();
    let mut link_load = vec![0; topology.link_count()];
    accumulate_loads(&assignment.labels, &demands, table, &mut link_load);
    let mu = max_utilization(&link_load, topology);
    Ok(RoutingMatrix {
        indicator,
        link_load,
        mu,
    })
}

/// `flow <id> via <label>: s1 -> ... -> sk`, one line per flow.
pub fn dump_assignment(assignment: &RoutingAssignment, flows: &FlowSet, table: &XPathTable) -> String {
    let mut out = String::new();
    for (f, &l) in flows.flows().iter().zip(&assignment.labels) {
        let hops = table.path(l).map(|p| format_hops(&p.hops)).unwrap_or_default();
        writeln!(out, "flow {} via {}: {}", f.id, l, hops).unwrap();
    }
    out
}

/// Parses a routing dump back into `(flow id, label, hops)` rows.
pub fn parse_assignment_dump(text: &str) -> Result<Vec<(FlowId, PathLabel, Vec<SwitchId>)>, String> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: &str| format!("line {}: {m}", i + 1);
        let (head, hops) = line.split_once(':').ok_or_else(|| err("missing `:`"))?;
        let head: Vec<&str> = head.split_whitespace().collect();
        let ["flow", id, "via", label] = head.as_slice() else {
            return Err(err("expected `flow <id> via <label>: ...`"));
        };
        let id = id.parse().map_err(|_| err("invalid flow id"))?;
        let label = label.parse().map_err(|_| err("invalid label"))?;
        let hops = hops
            .split("->")
            .map(|h| h.trim().parse::<SwitchId>().map_err(|_| err("invalid switch id")))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((id, label, hops));
    }
    Ok(rows)
}

/// True when the routing keeps every link at or below `mu_target`.
pub fn congestion_ok(matrix: &RoutingMatrix, mu_target: f64) -> bool {
    matrix.mu.at_most(mu_target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    /// No link enters the source.
    NoReturnToSource,
    /// No link leaves the destination.
    StayAtDestination,
    /// Exactly one link leaves the source.
    LeaveSourceOnce,
    /// Exactly one link enters the destination.
    EnterDestinationOnce,
    /// In-degree equals out-degree at intermediate switches.
    Conservation,
    /// In-degree at most one at every switch.
    LoopFree,
    /// Indicator values are 0 or 1.
    Binary,
}

impl Constraint {
    pub const ALL: [Constraint; 7] = [
        Self::NoReturnToSource,
        Self::StayAtDestination,
        Self::LeaveSourceOnce,
        Self::EnterDestinationOnce,
        Self::Conservation,
        Self::LoopFree,
        Self::Binary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::NoReturnToSource => "no-return-to-source",
            Self::StayAtDestination => "stay-at-destination",
            Self::LeaveSourceOnce => "leave-source-once",
            Self::EnterDestinationOnce => "enter-destination-once",
            Self::Conservation => "conservation",
            Self::LoopFree => "loop-free",
            Self::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Location {
    Switch(SwitchId),
    Link(SwitchId, SwitchId),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Violation {
    pub flow: FlowId,
    pub constraint: Constraint,
    pub location: Location,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "flow {}: {} violated at {:?}",
            self.flow,
            self.constraint.name(),
            self.location
        )
    }
}

/// Checks source/destination, conservation, loop and binary constraints for
/// every flow. An empty result means the matrix is a valid routing.
pub fn validate(matrix: &RoutingMatrix, flows: &FlowSet, topology: &Topology) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = topology.node_count();
    for (f, ind) in flows.flows().iter().zip(&matrix.indicator) {
        let mut indeg = vec![0u64; n];
        let mut outdeg = vec![0u64; n];
        for (&li, &v) in ind {
            let l = topology.link(li);
            if v > 1 {
                out.push(Violation {
                    flow: f.id,
                    constraint: Constraint::Binary,
                    location: Location::Link(l.src, l.dst),
                });
            }
            outdeg[topology.node_index(l.src).unwrap()] += v as u64;
            indeg[topology.node_index(l.dst).unwrap()] += v as u64;
        }
        let s = topology.node_index(f.src);
        let d = topology.node_index(f.dst);
        let mut push = |constraint, at: SwitchId| {
            out.push(Violation {
                flow: f.id,
                constraint,
                location: Location::Switch(at),
            })
        };
        match s {
            Some(s) => {
                if indeg[s] != 0 {
                    push(Constraint::NoReturnToSource, f.src);
                }
                if outdeg[s] != 1 {
                    push(Constraint::LeaveSourceOnce, f.src);
                }
            }
            None => push(Constraint::LeaveSourceOnce, f.src),
        }
        match d {
            Some(d) => {
                if outdeg[d] != 0 {
                    push(Constraint::StayAtDestination, f.dst);
                }
                if indeg[d] != 1 {
                    push(Constraint::EnterDestinationOnce, f.dst);
                }
            }
            None => push(Constraint::EnterDestinationOnce, f.dst),
        }
        for v in 0..n {
            if Some(v) != s && Some(v) != d && indeg[v] != outdeg[v] {
                push(Constraint::Conservation, topology.node_id(v));
            }
            if indeg[v] > 1 {
                push(Constraint::LoopFree, topology.node_id(v));
            }
        }
    }
    out
}
