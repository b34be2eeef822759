//! Bounded-hop simple path tables.
//!
//! Every loop-free directed path with at most `x` edges is enumerated
//! offline and given a unique integer label starting at 1. Labels are
//! assigned in order of `(hop count, source, destination, hop sequence)`,
//! which reproduces the labeling of the three-switch sample fabric.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::topology::{SwitchId, Topology};

pub type PathLabel = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum XPathError {
    #[error("hop bound must be at least 1")]
    ZeroHopBound,
    #[error("per-pair path cap must be at least 1")]
    ZeroCap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XPath {
    pub label: PathLabel,
    /// Switch ids from source to destination.
    pub hops: Vec<SwitchId>,
    /// Topology link indices along the path.
    pub links: Vec<usize>,
}

impl XPath {
    pub fn src(&self) -> SwitchId {
        self.hops[0]
    }

    pub fn dst(&self) -> SwitchId {
        *self.hops.last().unwrap()
    }

    /// Number of edges.
    pub fn hop_count(&self) -> usize {
        self.links.len()
    }
}

#[derive(Debug, Clone)]
pub struct XPathTable {
    max_hops: usize,
    cap: Option<usize>,
    paths: Vec<XPath>,
    by_pair: HashMap<(SwitchId, SwitchId), Vec<PathLabel>>,
}

impl XPathTable {
    pub fn max_hops(&self) -> usize {
        self.max_hops
    }

    pub fn cap(&self) -> Option<usize> {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[XPath] {
        &self.paths
    }

    pub fn path(&self, label: PathLabel) -> Option<&XPath> {
        (label as usize)
            .checked_sub(1)
            .and_then(|i| self.paths.get(i))
    }

    /// Labels usable by a flow from `src` to `dst`, shortest first.
    pub fn feasible_labels(&self, src: SwitchId, dst: SwitchId) -> &[PathLabel] {
        self.by_pair
            .get(&(src, dst))
            .map_or(&[], |labels| labels.as_slice())
    }

    /// Label of the path with exactly these hops, if tabulated.
    pub fn label_of(&self, hops: &[SwitchId]) -> Option<PathLabel> {
        let (&src, &dst) = (hops.first()?, hops.last()?);
        self.feasible_labels(src, dst)
            .iter()
            .copied()
            .find(|&l| self.paths[l as usize - 1].hops == hops)
    }

    /// Minimum-hop labels for a pair.
    pub fn shortest_tier(&self, src: SwitchId, dst: SwitchId) -> &[PathLabel] {
        let labels = self.feasible_labels(src, dst);
        let Some(&first) = labels.first() else {
            return labels;
        };
        let h = self.paths[first as usize - 1].hop_count();
        let n = labels
            .iter()
            .take_while(|&&l| self.paths[l as usize - 1].hop_count() == h)
            .count();
        &labels[..n]
    }

    /// `label <n>: s1 -> s2 -> ...`, one path per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for p in &self.paths {
            writeln!(out, "label {}: {}", p.label, format_hops(&p.hops)).unwrap();
        }
        out
    }
}

pub fn format_hops(hops: &[SwitchId]) -> String {
    hops.iter()
        .map(|h| h.to_string())
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Enumerates all simple paths of 1..=`max_hops` edges, keeping at most
/// `cap` paths per (source, destination) pair, shortest first with ties
/// broken lexicographically.
pub fn precompute_xpaths(
    topology: &Topology,
    max_hops: usize,
    cap: Option<usize>,
) -> Result<XPathTable, XPathError> {
    if max_hops == 0 {
        return Err(XPathError::ZeroHopBound);
    }
    if cap == Some(0) {
        return Err(XPathError::ZeroCap);
    }

    let per_source: Vec<Vec<Vec<usize>>> = (0..topology.node_count())
        .into_par_iter()
        .map(|s| paths_from(topology, s, max_hops, cap))
        .collect();

    // node indices are ordered like switch ids, so sorting index sequences
    // gives the id ordering
    let mut all: Vec<Vec<usize>> = per_source.into_iter().flatten().collect();
    all.sort_unstable_by(|a, b| {
        (a.len(), a[0], a[a.len() - 1])
            .cmp(&(b.len(), b[0], b[b.len() - 1]))
            .then_with(|| a.cmp(b))
    });

    let mut paths = Vec::with_capacity(all.len());
    let mut by_pair: HashMap<(SwitchId, SwitchId), Vec<PathLabel>> = HashMap::new();
    for (i, seq) in all.into_iter().enumerate() {
        let label = (i + 1) as PathLabel;
        let hops: Vec<SwitchId> = seq.iter().map(|&n| topology.node_id(n)).collect();
        let links = seq
            .windows(2)
            .map(|w| topology.link_between(w[0], w[1]).unwrap())
            .collect();
        by_pair
            .entry((hops[0], *hops.last().unwrap()))
            .or_default()
            .push(label);
        paths.push(XPath { label, hops, links });
    }

    Ok(XPathTable {
        max_hops,
        cap,
        paths,
        by_pair,
    })
}

// Tier-by-tier growth from one source. Once every reachable destination holds
// at least `cap` paths after a complete tier, longer paths can never survive
// the shortest-first cap, so growth stops early.
fn paths_from(topology: &Topology, src: usize, max_hops: usize, cap: Option<usize>) -> Vec<Vec<usize>> {
    let n = topology.node_count();
    let reachable: Vec<usize> = topology
        .bfs_distances(src)
        .iter()
        .enumerate()
        .filter(|&(v, d)| v != src && d.is_some())
        .map(|(v, _)| v)
        .collect();

    let mut found: Vec<Vec<Vec<usize>>> = vec![Vec::new(); n];
    let mut frontier: Vec<Vec<usize>> = vec![vec![src]];
    for _ in 0..max_hops {
        let mut next = Vec::new();
        for path in &frontier {
            let last = *path.last().unwrap();
            for &(nb, _) in topology.out_links(last) {
                if path.contains(&nb) {
                    continue;
                }
                let mut grown = Vec::with_capacity(path.len() + 1);
                grown.extend_from_slice(path);
                grown.push(nb);
                found[nb].push(grown.clone());
                next.push(grown);
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
        if let Some(c) = cap {
            if reachable.iter().all(|&d| found[d].len() >= c) {
                break;
            }
        }
    }

    let mut out = Vec::new();
    for mut list in found {
        // within a tier paths were produced in lexicographic order already,
        // but a stable sort keeps this independent of adjacency ordering
        list.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        if let Some(c) = cap {
            list.truncate(c);
        }
        out.extend(list);
    }
    out
}

/// Literal set-growth procedure: start from all single edges and repeatedly
/// extend every path by one unvisited neighbor of its tail, up to
/// `max_hops` edges. Returns hop sequences in discovery order.
pub fn grow_xpaths(topology: &Topology, max_hops: usize) -> Vec<Vec<SwitchId>> {
    let mut result: Vec<Vec<usize>> = Vec::new();
    for v in 0..topology.node_count() {
        for &(nb, _) in topology.out_links(v) {
            result.push(vec![v, nb]);
        }
    }
    let mut start = 0;
    for _ in 1..max_hops {
        let end = result.len();
        for i in start..end {
            let tail = *result[i].last().unwrap();
            for &(nb, _) in topology.out_links(tail) {
                if !result[i].contains(&nb) {
                    let mut grown = result[i].clone();
                    grown.push(nb);
                    result.push(grown);
                }
            }
        }
        if result.len() == end {
            break;
        }
        start = end;
    }
    result
        .into_iter()
        .map(|p| p.into_iter().map(|n| topology.node_id(n)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{make_fat_tree, make_sample_topology, FatTreeCapacities, SampleTopology};

    fn fig2a() -> Topology {
        make_sample_topology(SampleTopology::Fig2a, 10).unwrap()
    }

    #[test]
    fn fig2a_one_paths_are_the_edges() {
        let t = precompute_xpaths(&fig2a(), 1, None).unwrap();
        let got: Vec<_> = t.paths().iter().map(|p| p.hops.clone()).collect();
        assert_eq!(got, vec![vec![1, 2], vec![2, 1], vec![3, 1], vec![3, 2]]);
    }

    #[test]
    fn feasible_labels_examples() {
        let t = precompute_xpaths(&fig2a(), 3, None).unwrap();
        assert_eq!(t.feasible_labels(3, 1), &[3, 5]);
        assert!(t.feasible_labels(1, 3).is_empty());
        assert!(t.feasible_labels(2, 2).is_empty());
        assert_eq!(t.shortest_tier(3, 1), &[3]);
        assert_eq!(t.label_of(&[3, 2, 1]), Some(5));
        assert_eq!(t.label_of(&[1, 3]), None);
    }

    #[test]
    fn cap_keeps_shortest_first() {
        let topo = make_sample_topology(SampleTopology::Fig2a, 10).unwrap();
        let t = precompute_xpaths(&topo, 3, Some(1)).unwrap();
        assert_eq!(t.feasible_labels(3, 1).len(), 1);
        assert_eq!(t.path(t.feasible_labels(3, 1)[0]).unwrap().hops, vec![3, 1]);
        assert_eq!(t.len(), 4);
    }

    #[test]
    fn rejects_zero_bounds() {
        assert_eq!(
            precompute_xpaths(&fig2a(), 0, None).unwrap_err(),
            XPathError::ZeroHopBound
        );
        assert_eq!(
            precompute_xpaths(&fig2a(), 2, Some(0)).unwrap_err(),
            XPathError::ZeroCap
        );
    }

    #[test]
    fn dump_format() {
        let t = precompute_xpaths(&fig2a(), 3, None).unwrap();
        assert!(t.dump().starts_with("label 1: 1 -> 2\nlabel 2: 2 -> 1\n"));
        assert!(t.dump().contains("label 5: 3 -> 2 -> 1\n"));
    }

    #[test]
    fn capped_fat_tree_matches_uncapped_truncation() {
        let topo = make_fat_tree(4, FatTreeCapacities::uniform(10)).unwrap();
        let full = precompute_xpaths(&topo, 6, None).unwrap();
        let capped = precompute_xpaths(&topo, 6, Some(5)).unwrap();
        for &s in topo.nodes() {
            for &d in topo.nodes() {
                let a: Vec<_> = full
                    .feasible_labels(s, d)
                    .iter()
                    .take(5)
                    .map(|&l| full.path(l).unwrap().hops.clone())
                    .collect();
                let b: Vec<_> = capped
                    .feasible_labels(s, d)
                    .iter()
                    .map(|&l| capped.path(l).unwrap().hops.clone())
                    .collect();
                assert_eq!(a, b, "pair {s}->{d}");
            }
        }
    }
}
