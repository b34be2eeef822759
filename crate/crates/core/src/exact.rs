//! Exhaustive min-max-utilization solver over x-path assignments.
//!
//! Depth-first search in flow order, trying each flow's labels shortest
//! first, with incremental link loads. Since loads only grow along a branch,
//! the running maximum utilization is a lower bound for every completion and
//! prunes the search. Ties on utilization are broken by total hop count,
//! then by the lexicographically smallest label vector.

use thiserror::Error;

use crate::routing::{RoutingAssignment, Utilization};
use crate::topology::{Bandwidth, Topology};
use crate::traffic::{FlowId, FlowSet};
use crate::xpath::{PathLabel, XPathTable};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExactError {
    #[error("flow {0} has no feasible path")]
    NoFeasiblePath(FlowId),
    #[error("search space of {size} assignments exceeds budget {budget}")]
    BudgetExceeded { size: u128, budget: u128 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub assignment: RoutingAssignment,
    pub mu: Utilization,
    pub total_hops: usize,
    /// Search nodes visited.
    pub visited: u64,
}

/// Number of complete assignments, saturating.
pub fn search_space(flows: &FlowSet, table: &XPathTable) -> u128 {
    flows.flows().iter().fold(1u128, |acc, f| {
        acc.saturating_mul(table.feasible_labels(f.src, f.dst).len() as u128)
    })
}

pub fn solve_exact(
    flows: &FlowSet,
    table: &XPathTable,
    topology: &Topology,
    budget: u128,
) -> Result<ExactSolution, ExactError> {
    let options: Vec<&[PathLabel]> = flows
        .flows()
        .iter()
        .map(|f| table.feasible_labels(f.src, f.dst))
        .collect();
    if let Some((f, _)) = flows.flows().iter().zip(&options).find(|(_, o)| o.is_empty()) {
        return Err(ExactError::NoFeasiblePath(f.id));
    }
    let size = search_space(flows, table);
    if size > budget {
        return Err(ExactError::BudgetExceeded { size, budget });
    }

    // hop lower bound for the remaining suffix of flows
    let min_hops: Vec<usize> = options
        .iter()
        .map(|o| table.path(o[0]).unwrap().hop_count())
        .collect();
    let mut suffix_hops = vec![0; flows.len() + 1];
    for i in (0..flows.len()).rev() {
        suffix_hops[i] = suffix_hops[i + 1] + min_hops[i];
    }

    let mut search = Search {
        table,
        capacity: topology.links().iter().map(|l| l.capacity).collect(),
        demands: flows.flows().iter().map(|f| f.demand).collect(),
        options,
        suffix_hops,
        load: vec![0; topology.link_count()],
        current: Vec::with_capacity(flows.len()),
        best: None,
        visited: 0,
    };
    search.descend(0, Utilization::ZERO, 0);

    let (labels, mu, total_hops) = search.best.unwrap_or((Vec::new(), Utilization::ZERO, 0));
    Ok(ExactSolution {
        assignment: RoutingAssignment::new(labels),
        mu,
        total_hops,
        visited: search.visited,
    })
}

struct Search<'a> {
    table: &'a XPathTable,
    capacity: Vec<Bandwidth>,
    demands: Vec<Bandwidth>,
    options: Vec<&'a [PathLabel]>,
    suffix_hops: Vec<usize>,
    load: Vec<Bandwidth>,
    current: Vec<PathLabel>,
    best: Option<(Vec<PathLabel>, Utilization, usize)>,
    visited: u64,
}

impl Search<'_> {
    fn dominated(&self, mu: Utilization, hops_lb: usize) -> bool {
        // labels are tried in ascending order, so an equal key found later
        // loses the lexicographic tie-break
        match &self.best {
            Some((_, bmu, bhops)) => (mu, hops_lb) >= (*bmu, *bhops),
            None => false,
        }
    }

    fn descend(&mut self, depth: usize, mu: Utilization, hops: usize) {
        self.visited += 1;
        if self.dominated(mu, hops + self.suffix_hops[depth]) {
            return;
        }
        if depth == self.demands.len() {
            self.best = Some((self.current.clone(), mu, hops));
            return;
        }
        let d = self.demands[depth];
        for &label in self.options[depth] {
            let path = self.table.path(label).unwrap();
            let mut next_mu = mu;
            for &li in &path.links {
                self.load[li] += d;
                next_mu = next_mu.max(Utilization::new(self.load[li], self.capacity[li]));
            }
            self.current.push(label);
            self.descend(depth + 1, next_mu, hops + path.hop_count());
            self.current.pop();
            for &li in &path.links {
                self.load[li] -= d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{make_sample_topology, SampleTopology};
    use crate::xpath::precompute_xpaths;

    fn fig2a() -> (Topology, XPathTable) {
        let t = make_sample_topology(SampleTopology::Fig2a, 10).unwrap();
        let x = precompute_xpaths(&t, 3, None).unwrap();
        (t, x)
    }

    #[test]
    fn splits_two_heavy_flows() {
        let (topo, table) = fig2a();
        let flows = FlowSet::from_triples([(3, 1, 6), (3, 1, 6)]).unwrap();
        let s = solve_exact(&flows, &table, &topo, 1_000).unwrap();
        assert_eq!(s.mu, Utilization::new(6, 10));
        // tie between (3,5) and (5,3) goes to the smaller label vector
        assert_eq!(s.assignment.labels, vec![3, 5]);
        assert_eq!(s.total_hops, 3);
    }

    #[test]
    fn single_flow_takes_shortest() {
        let (topo, table) = fig2a();
        let flows = FlowSet::from_triples([(3, 1, 4)]).unwrap();
        let s = solve_exact(&flows, &table, &topo, 10).unwrap();
        assert_eq!(s.assignment.labels, vec![3]);
        assert_eq!(s.mu.as_f64(), 0.4);
    }

    #[test]
    fn zero_flows() {
        let (topo, table) = fig2a();
        let s = solve_exact(&FlowSet::default(), &table, &topo, 1).unwrap();
        assert!(s.assignment.labels.is_empty());
        assert_eq!(s.mu.as_f64(), 0.0);
    }

    #[test]
    fn errors() {
        let (topo, table) = fig2a();
        let flows = FlowSet::from_triples([(3, 1, 1), (1, 3, 1)]).unwrap();
        assert_eq!(
            solve_exact(&flows, &table, &topo, 100).unwrap_err(),
            ExactError::NoFeasiblePath(2)
        );
        let flows = FlowSet::from_triples([(3, 1, 1), (3, 2, 1), (3, 1, 1)]).unwrap();
        assert_eq!(
            solve_exact(&flows, &table, &topo, 7).unwrap_err(),
            ExactError::BudgetExceeded { size: 8, budget: 7 }
        );
    }
}
