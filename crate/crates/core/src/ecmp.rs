//! Flow-level equal-cost multipath baseline.
//!
//! Each flow hashes `(src, dst, id)` onto one of the minimum-hop paths of its
//! pair. The hash is 64-bit FNV-1a over the three values, each written as a
//! little-endian `u64`, so assignments are reproducible anywhere.

use thiserror::Error;

use crate::routing::RoutingAssignment;
use crate::topology::{SwitchId, Topology};
use crate::traffic::{Flow, FlowId, FlowSet};
use crate::xpath::{PathLabel, XPathTable};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EcmpError {
    #[error("flow {0}: destination unreachable within the path table's hop bound")]
    Unreachable(FlowId),
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn flow_hash(src: SwitchId, dst: SwitchId, id: FlowId) -> u64 {
    let mut buf = [0u8; 24];
    buf[..8].copy_from_slice(&(src as u64).to_le_bytes());
    buf[8..16].copy_from_slice(&(dst as u64).to_le_bytes());
    buf[16..].copy_from_slice(&(id as u64).to_le_bytes());
    fnv1a64(&buf)
}

/// The equal-cost label a flow hashes to, or `None` if its pair has no path.
pub fn ecmp_label(flow: &Flow, table: &XPathTable, max_paths: Option<usize>) -> Option<PathLabel> {
    let tier = table.shortest_tier(flow.src, flow.dst);
    let n = max_paths.map_or(tier.len(), |m| m.min(tier.len()));
    if n == 0 {
        return None;
    }
    Some(tier[(flow_hash(flow.src, flow.dst, flow.id) % n as u64) as usize])
}

/// Routes every flow on a hashed minimum-hop path.
///
/// Within a pair the table lists equal-length paths in lexicographic hop
/// order, which is the order the hash indexes into.
pub fn route_ecmp(
    flows: &FlowSet,
    table: &XPathTable,
    max_paths: Option<usize>,
) -> Result<RoutingAssignment, EcmpError> {
    flows
        .flows()
        .iter()
        .map(|f| ecmp_label(f, table, max_paths).ok_or(EcmpError::Unreachable(f.id)))
        .collect::<Result<Vec<_>, _>>()
        .map(RoutingAssignment::new)
}

/// All minimum-hop paths between two switches, in lexicographic order,
/// without a path table.
pub fn shortest_paths(topology: &Topology, src: SwitchId, dst: SwitchId) -> Vec<Vec<SwitchId>> {
    let (Some(s), Some(d)) = (topology.node_index(src), topology.node_index(dst)) else {
        return Vec::new();
    };
    if s == d {
        return Vec::new();
    }
    // distances to the destination over reversed links
    let n = topology.node_count();
    let mut to_dst = vec![usize::MAX; n];
    to_dst[d] = 0;
    let mut queue = std::collections::VecDeque::from([d]);
    while let Some(u) = queue.pop_front() {
        for &(p, _) in topology.in_links(u) {
            if to_dst[p] == usize::MAX {
                to_dst[p] = to_dst[u] + 1;
                queue.push_back(p);
            }
        }
    }
    if to_dst[s] == usize::MAX {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut stack = vec![s];
    walk(topology, &to_dst, d, &mut stack, &mut out);
    out
}

fn walk(
    topology: &Topology,
    to_dst: &[usize],
    dst: usize,
    stack: &mut Vec<usize>,
    out: &mut Vec<Vec<SwitchId>>,
) {
    let u = *stack.last().unwrap();
    if u == dst {
        out.push(stack.iter().map(|&i| topology.node_id(i)).collect());
        return;
    }
    for &(v, _) in topology.out_links(u) {
        if to_dst[v] != usize::MAX && to_dst[v] + 1 == to_dst[u] {
            stack.push(v);
            walk(topology, to_dst, dst, stack, out);
            stack.pop();
        }
    }
}
