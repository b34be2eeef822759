mod common;

use cect_core::exact::{search_space, solve_exact, ExactError};
use cect_core::routing::{assemble, validate, RoutingAssignment, Utilization};
use cect_core::topology::Topology;
use cect_core::traffic::FlowSet;
use cect_core::xpath::{precompute_xpaths, XPathTable};
use proptest::prelude::*;

/// Minimum of `(mu, total hops, labels)` over every assignment.
fn brute_force(flows: &FlowSet, table: &XPathTable, topo: &Topology) -> (Utilization, usize, Vec<u32>) {
    let options: Vec<&[u32]> = flows.flows().iter().map(|f| table.feasible_labels(f.src, f.dst)).collect();
    let mut idx = vec![0usize; options.len()];
    let mut best: Option<(Utilization, usize, Vec<u32>)> = None;
    loop {
        let labels: Vec<u32> = idx.iter().zip(&options).map(|(&i, o)| o[i]).collect();
        let a = RoutingAssignment::new(labels.clone());
        let m = assemble(&a, flows, table, topo).unwrap();
        let key = (m.mu, a.total_hops(table), labels);
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
        let mut k = 0;
        loop {
            if k == idx.len() {
                return best.unwrap();
            }
            idx[k] += 1;
            if idx[k] < options[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn instance() -> impl Strategy<Value = (Topology, FlowSet)> {
    (common::arb_graph(5, 10), proptest::collection::vec((any::<prop::sample::Index>(), 1u64..=8), 1..=5))
        .prop_filter_map("no routable pair", |(topo, raw)| {
            let table = precompute_xpaths(&topo, 3, None).unwrap();
            let pairs: Vec<(u32, u32)> = topo
                .nodes()
                .iter()
                .flat_map(|&a| topo.nodes().iter().map(move |&b| (a, b)))
                .filter(|&(a, b)| !table.feasible_labels(a, b).is_empty())
                .collect();
            if pairs.is_empty() {
                return None;
            }
            let flows = FlowSet::from_triples(raw.iter().map(|(i, d)| {
                let (a, b) = pairs[i.index(pairs.len())];
                (a, b, *d)
            }))
            .unwrap();
            Some((topo, flows))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_exhaustive_enumeration((topo, flows) in instance()) {
        let table = precompute_xpaths(&topo, 3, None).unwrap();
        prop_assume!(search_space(&flows, &table) <= 1000);
        let s = solve_exact(&flows, &table, &topo, 1000).unwrap();
        let (mu, hops, labels) = brute_force(&flows, &table, &topo);
        prop_assert_eq!(s.mu, mu);
        prop_assert_eq!(s.total_hops, hops);
        prop_assert_eq!(&s.assignment.labels, &labels);
        let m = assemble(&s.assignment, &flows, &table, &topo).unwrap();
        prop_assert_eq!(m.mu, s.mu);
        prop_assert!(validate(&m, &flows, &topo).is_empty());
    }

    #[test]
    fn adding_a_flow_never_lowers_optimum((topo, flows) in instance()) {
        let table = precompute_xpaths(&topo, 3, None).unwrap();
        prop_assume!(flows.len() >= 2 && search_space(&flows, &table) <= 100_000);
        let full = solve_exact(&flows, &table, &topo, 100_000).unwrap();
        let fewer = FlowSet::from_triples(
            flows.flows()[..flows.len() - 1].iter().map(|f| (f.src, f.dst, f.demand)),
        )
        .unwrap();
        let part = solve_exact(&fewer, &table, &topo, 100_000).unwrap();
        prop_assert!(part.mu <= full.mu);
    }
}

#[test]
fn budget_is_enforced() {
    let topo = common::graph(3, &[false, true, true, true, false, true, true, true, false], &[5; 9]);
    let table = precompute_xpaths(&topo, 2, None).unwrap();
    let flows = FlowSet::from_triples([(1, 2, 1), (1, 2, 1), (1, 2, 1)]).unwrap();
    assert_eq!(search_space(&flows, &table), 8);
    assert!(matches!(
        solve_exact(&flows, &table, &topo, 7),
        Err(ExactError::BudgetExceeded { size: 8, budget: 7 })
    ));
    assert!(solve_exact(&flows, &table, &topo, 8).is_ok());
}
