#![allow(dead_code)]

use std::collections::BTreeMap;

use cect_core::routing::{Constraint, RoutingAssignment, RoutingMatrix};
use cect_core::topology::{Bandwidth, Link, SwitchId, Topology};
use cect_core::traffic::FlowSet;
use cect_core::xpath::XPathTable;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Directed graph on switches `1..=n` from an adjacency bit matrix.
pub fn graph(n: usize, adj: &[bool], caps: &[Bandwidth]) -> Topology {
    let mut links = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && adj[a * n + b] {
                links.push(Link {
                    src: a as SwitchId + 1,
                    dst: b as SwitchId + 1,
                    capacity: caps[a * n + b],
                });
            }
        }
    }
    Topology::new(1..=n as SwitchId, links, BTreeMap::new()).unwrap()
}

pub fn arb_graph(max_nodes: usize, max_cap: Bandwidth) -> impl Strategy<Value = Topology> {
    (2..=max_nodes).prop_flat_map(move |n| {
        (
            Just(n),
            proptest::collection::vec(any::<bool>(), n * n),
            proptest::collection::vec(1..=max_cap, n * n),
        )
            .prop_map(|(n, adj, caps)| graph(n, &adj, &caps))
    })
}

/// Plain recursive enumeration of simple paths with at most `x` edges,
/// sorted by length then hop sequence.
pub fn dfs_paths(topo: &Topology, src: SwitchId, dst: SwitchId, x: usize) -> Vec<Vec<SwitchId>> {
    fn go(
        topo: &Topology,
        dst: SwitchId,
        x: usize,
        stack: &mut Vec<SwitchId>,
        out: &mut Vec<Vec<SwitchId>>,
    ) {
        let u = *stack.last().unwrap();
        if u == dst && stack.len() > 1 {
            out.push(stack.clone());
            return;
        }
        if stack.len() > x {
            return;
        }
        for l in topo.links().iter().filter(|l| l.src == u) {
            if !stack.contains(&l.dst) {
                stack.push(l.dst);
                go(topo, dst, x, stack, out);
                stack.pop();
            }
        }
    }
    let mut out = Vec::new();
    if src != dst {
        go(topo, dst, x, &mut vec![src], &mut out);
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

pub fn routable_flows(topo: &Topology, table: &XPathTable, rng: &mut ChaCha8Rng, n: usize) -> Option<FlowSet> {
    let pairs: Vec<(u32, u32)> = topo
        .nodes()
        .iter()
        .flat_map(|&a| topo.nodes().iter().map(move |&b| (a, b)))
        .filter(|&(a, b)| !table.feasible_labels(a, b).is_empty())
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let triples: Vec<_> = (0..n)
        .map(|_| {
            let (a, b) = pairs[rng.gen_range(0..pairs.len())];
            (a, b, rng.gen_range(1..=20))
        })
        .collect();
    Some(FlowSet::from_triples(triples).unwrap())
}

pub fn random_assignment(flows: &FlowSet, table: &XPathTable, rng: &mut ChaCha8Rng) -> RoutingAssignment {
    RoutingAssignment::new(
        flows
            .flows()
            .iter()
            .map(|f| *table.feasible_labels(f.src, f.dst).choose(rng).unwrap())
            .collect(),
    )
}

pub fn inject(
    topo: &Topology,
    table: &XPathTable,
    label: u32,
    which: Constraint,
) -> Option<RoutingMatrix> {
    let p = table.path(label).unwrap();
    let flows = FlowSet::from_triples([(p.src(), p.dst(), 1)]).unwrap();
    let mut ind: std::collections::BTreeMap<usize, u32> = p.links.iter().map(|&l| (l, 1)).collect();
    let (src, dst) = (p.src(), p.dst());
    let on_path = |v: u32| p.hops.contains(&v);
    match which {
        Constraint::NoReturnToSource => {
            let li = topo.links().iter().position(|l| l.dst == src)?;
            ind.insert(li, 1);
        }
        Constraint::StayAtDestination => {
            let li = topo.links().iter().position(|l| l.src == dst)?;
            ind.insert(li, 1);
        }
        Constraint::LeaveSourceOnce => {
            ind.remove(&p.links[0]);
        }
        Constraint::EnterDestinationOnce => {
            ind.remove(p.links.last().unwrap());
        }
        Constraint::Conservation => {
            if p.links.len() < 3 {
                return None;
            }
            ind.remove(&p.links[1]);
        }
        Constraint::LoopFree => {
            // a second link into an intermediate switch
            let mid = *p.hops.get(1).filter(|&&v| v != dst)?;
            let li = topo
                .links()
                .iter()
                .position(|l| l.dst == mid && l.src != src && !on_path(l.src))?;
            ind.insert(li, 1);
        }
        Constraint::Binary => {
            ind.insert(p.links[0], 2);
        }
    }
    Some(RoutingMatrix::from_indicator(vec![ind], &flows, topo))
}

pub const ALL: [Constraint; 7] = Constraint::ALL;

/// Max-min allocation by scanning a common level upward on a fine grid.
/// At each stage the level rises while every active flow can take it; flows
/// that hit their demand or sit on a link without room for one more grid
/// step per active flow are frozen.
pub fn grid_max_min(paths: &[Vec<usize>], demand: &[f64], cap: &[f64], step: f64) -> Vec<f64> {
    let n = paths.len();
    let mut frozen: Vec<Option<f64>> = vec![None; n];
    let load_at = |level: f64, frozen: &[Option<f64>]| {
        let mut load = vec![0.0; cap.len()];
        for f in 0..n {
            let r = frozen[f].unwrap_or(level.min(demand[f]));
            for &l in &paths[f] {
                load[l] += r;
            }
        }
        load
    };
    let fits = |load: &[f64]| load.iter().zip(cap).all(|(x, c)| *x <= c * (1.0 + 1e-12));
    let mut level = 0.0;
    while frozen.iter().any(Option::is_none) {
        while fits(&load_at(level + step, &frozen)) && frozen.iter().enumerate().any(|(f, z)| z.is_none() && demand[f] > level) {
            level += step;
        }
        let load = load_at(level, &frozen);
        let active = |l: usize, frozen: &[Option<f64>]| {
            (0..n).filter(|&f| frozen[f].is_none() && demand[f] > level && paths[f].contains(&l)).count()
        };
        let snapshot = frozen.clone();
        let mut progressed = false;
        for f in 0..n {
            if snapshot[f].is_some() {
                continue;
            }
            let blocked = demand[f] <= level
                || paths[f]
                    .iter()
                    .any(|&l| cap[l] - load[l] < step * active(l, &snapshot) as f64);
            if blocked {
                frozen[f] = Some(level.min(demand[f]));
                progressed = true;
            }
        }
        assert!(progressed, "grid search stalled");
    }
    frozen.into_iter().map(Option::unwrap).collect()
}
