//! Directed capacitated switch graphs.
//!
//! Capacities are integer bandwidth units (1 unit = 1 Kb/s). An absent edge
//! has capacity zero and is simply not stored.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// User-visible switch identifier.
pub type SwitchId = u32;

/// Integer bandwidth, in Kb/s.
pub type Bandwidth = u64;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("self-loop edge on switch {0}")]
    SelfLoop(SwitchId),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(SwitchId, SwitchId),
    #[error("edge {0} -> {1} has non-positive capacity")]
    NonPositiveCapacity(SwitchId, SwitchId),
    #[error("duplicate node {0}")]
    DuplicateNode(SwitchId),
    #[error("unknown node {0}")]
    UnknownNode(SwitchId),
    #[error("fat-tree arity must be even and at least 2, got {0}")]
    InvalidArity(i64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Link {
    pub src: SwitchId,
    pub dst: SwitchId,
    pub capacity: Bandwidth,
}

/// Immutable switch fabric.
///
/// Nodes are kept sorted by id, so comparing internal node indices is the
/// same as comparing switch ids. Links are sorted by `(src, dst)`.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<SwitchId>,
    links: Vec<Link>,
    pod_of: BTreeMap<SwitchId, usize>,
    index: HashMap<SwitchId, usize>,
    link_index: HashMap<(usize, usize), usize>,
    // per node: (neighbor index, link index), sorted by neighbor
    out_adj: Vec<Vec<(usize, usize)>>,
    in_adj: Vec<Vec<(usize, usize)>>,
}

impl PartialEq for Topology {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.links == other.links && self.pod_of == other.pod_of
    }
}

impl Eq for Topology {}

impl Topology {
    pub fn new(
        nodes: impl IntoIterator<Item = SwitchId>,
        links: impl IntoIterator<Item = Link>,
        pod_of: BTreeMap<SwitchId, usize>,
    ) -> Result<Self, TopologyError> {
        let mut nodes: Vec<SwitchId> = nodes.into_iter().collect();
        nodes.sort_unstable();
        if let Some(w) = nodes.windows(2).find(|w| w[0] == w[1]) {
            return Err(TopologyError::DuplicateNode(w[0]));
        }
        let index: HashMap<SwitchId, usize> =
            nodes.iter().enumerate().map(|(i, &id)| (id, i)).collect();

        let mut links: Vec<Link> = links.into_iter().collect();
        for l in &links {
            if l.src == l.dst {
                return Err(TopologyError::SelfLoop(l.src));
            }
            if l.capacity == 0 {
                return Err(TopologyError::NonPositiveCapacity(l.src, l.dst));
            }
            for id in [l.src, l.dst] {
                if !index.contains_key(&id) {
                    return Err(TopologyError::UnknownNode(id));
                }
            }
        }
        links.sort_unstable_by_key(|l| (l.src, l.dst));
        if let Some(w) = links
            .windows(2)
            .find(|w| (w[0].src, w[0].dst) == (w[1].src, w[1].dst))
        {
            return Err(TopologyError::DuplicateEdge(w[0].src, w[0].dst));
        }
        for id in pod_of.keys() {
            if !index.contains_key(id) {
                return Err(TopologyError::UnknownNode(*id));
            }
        }

        let n = nodes.len();
        let mut link_index = HashMap::with_capacity(links.len());
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for (li, l) in links.iter().enumerate() {
            let (s, d) = (index[&l.src], index[&l.dst]);
            link_index.insert((s, d), li);
            out_adj[s].push((d, li));
            in_adj[d].push((s, li));
        }
        for adj in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            adj.sort_unstable();
        }

        Ok(Self {
            nodes,
            links,
            pod_of,
            index,
            link_index,
            out_adj,
            in_adj,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> &[SwitchId] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, index: usize) -> &Link {
        &self.links[index]
    }

    pub fn node_id(&self, index: usize) -> SwitchId {
        self.nodes[index]
    }

    pub fn node_index(&self, id: SwitchId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Index of the directed link between two node indices.
    pub fn link_between(&self, src: usize, dst: usize) -> Option<usize> {
        self.link_index.get(&(src, dst)).copied()
    }

    /// Index of the directed link `src -> dst`, by switch id.
    pub fn link_by_ids(&self, src: SwitchId, dst: SwitchId) -> Option<usize> {
        self.link_between(self.node_index(src)?, self.node_index(dst)?)
    }

    /// Capacity of `src -> dst`, zero when absent.
    pub fn capacity(&self, src: SwitchId, dst: SwitchId) -> Bandwidth {
        self.link_by_ids(src, dst)
            .map_or(0, |li| self.links[li].capacity)
    }

    /// Outgoing `(neighbor index, link index)` pairs, sorted by neighbor.
    pub fn out_links(&self, node: usize) -> &[(usize, usize)] {
        &self.out_adj[node]
    }

    pub fn in_links(&self, node: usize) -> &[(usize, usize)] {
        &self.in_adj[node]
    }

    pub fn pod_of(&self, id: SwitchId) -> Option<usize> {
        self.pod_of.get(&id).copied()
    }

    pub fn pods(&self) -> &BTreeMap<SwitchId, usize> {
        &self.pod_of
    }

    pub fn pod_count(&self) -> usize {
        self.pod_of.values().max().map_or(0, |&p| p + 1)
    }

    pub fn has_pods(&self) -> bool {
        !self.pod_of.is_empty()
    }

    /// Switches that terminate traffic.
    ///
    /// In a podded fabric these are pod members whose neighbors all sit in the
    /// same pod (aggregation switches also reach the core). Without pods,
    /// every switch is an endpoint.
    pub fn edge_switches(&self) -> Vec<SwitchId> {
        if !self.has_pods() {
            return self.nodes.clone();
        }
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, id)| self.pod_of.contains_key(id))
            .filter(|&(i, id)| {
                let pod = self.pod_of[id];
                self.out_adj[i]
                    .iter()
                    .chain(&self.in_adj[i])
                    .all(|&(nb, _)| self.pod_of.get(&self.nodes[nb]) == Some(&pod))
            })
            .map(|(_, &id)| id)
            .collect()
    }

    /// Smallest capacity among links touching an edge switch; with no pods,
    /// the smallest capacity overall.
    pub fn min_edge_link_capacity(&self) -> Option<Bandwidth> {
        let edges: Vec<SwitchId> = self.edge_switches();
        self.links
            .iter()
            .filter(|l| {
                !self.has_pods() || edges.contains(&l.src) || edges.contains(&l.dst)
            })
            .map(|l| l.capacity)
            .min()
    }

    pub fn total_capacity(&self) -> Bandwidth {
        self.links.iter().map(|l| l.capacity).sum()
    }

    /// Hop distances from `src` (by node index); `None` when unreachable.
    pub fn bfs_distances(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[src] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &(v, _) in &self.out_adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_strongly_connected(&self) -> bool {
        (0..self.node_count()).all(|s| self.bfs_distances(s).iter().all(Option::is_some))
    }

    /// Renders the plain-text topology format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for id in &self.nodes {
            writeln!(out, "node {id}").unwrap();
        }
        for l in &self.links {
            writeln!(out, "edge {} {} {}", l.src, l.dst, l.capacity).unwrap();
        }
        for (id, pod) in &self.pod_of {
            writeln!(out, "pod {id} {pod}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        let mut nodes = Vec::new();
        let mut links = Vec::new();
        let mut pods = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TopologyError::Parse { line: line_no, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| -> Result<u64, TopologyError> {
                s.parse::<u64>()
                    .map_err(|_| err(format!("expected a non-negative integer, got `{s}`")))
            };
            let id = |s: &str| -> Result<SwitchId, TopologyError> {
                s.parse::<SwitchId>()
                    .map_err(|_| err(format!("invalid switch id `{s}`")))
            };
            match fields.as_slice() {
                ["node", a] => nodes.push(id(a)?),
                ["edge", s, d, c] => {
                    if c.starts_with('-') {
                        return Err(err(format!("non-positive capacity `{c}`")));
                    }
                    let link = Link {
                        src: id(s)?,
                        dst: id(d)?,
                        capacity: num(c)?,
                    };
                    if link.src == link.dst {
                        return Err(err(format!("self-loop edge on switch {}", link.src)));
                    }
                    if link.capacity == 0 {
                        return Err(err(format!(
                            "edge {} -> {} has non-positive capacity",
                            link.src, link.dst
                        )));
                    }
                    links.push(link);
                }
                ["pod", a, p] => {
                    if pods.insert(id(a)?, num(p)? as usize).is_some() {
                        return Err(err(format!("switch {a} assigned to more than one pod")));
                    }
                }
                _ => return Err(err(format!("unrecognized record `{line}`"))),
            }
        }
        Self::new(nodes, links, pods)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TopologyError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Per-tier link capacities of a fat-tree fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FatTreeCapacities {
    /// Edge <-> aggregation links.
    pub edge_agg: Bandwidth,
    /// Aggregation <-> core links.
    pub agg_core: Bandwidth,
}

impl FatTreeCapacities {
    pub fn uniform(capacity: Bandwidth) -> Self {
        Self {
            edge_agg: capacity,
            agg_core: capacity,
        }
    }
}

/// Builds the switch fabric of a k-ary fat-tree.
///
/// Switch ids: cores `1..=(k/2)^2`, then the aggregation switches of every
/// pod (pod-major), then the edge switches of every pod.
pub fn make_fat_tree(k: i64, caps: FatTreeCapacities) -> Result<Topology, TopologyError> {
    if k < 2 || k % 2 != 0 {
        return Err(TopologyError::InvalidArity(k));
    }
    if caps.edge_agg == 0 || caps.agg_core == 0 {
        return Err(TopologyError::NonPositiveCapacity(0, 0));
    }
    let k = k as u32;
    let half = k / 2;
    let n_core = half * half;
    let core = |i: u32| 1 + i;
    let agg = |pod: u32, j: u32| 1 + n_core + pod * half + j;
    let edge = |pod: u32, j: u32| 1 + n_core + k * half + pod * half + j;

    let mut nodes: Vec<SwitchId> = (0..n_core).map(core).collect();
    let mut pods = BTreeMap::new();
    for pod in 0..k {
        for j in 0..half {
            nodes.push(agg(pod, j));
            pods.insert(agg(pod, j), pod as usize);
        }
    }
    for pod in 0..k {
        for j in 0..half {
            nodes.push(edge(pod, j));
            pods.insert(edge(pod, j), pod as usize);
        }
    }

    let mut links = Vec::new();
    let mut both = |a: SwitchId, b: SwitchId, capacity: Bandwidth| {
        links.push(Link { src: a, dst: b, capacity });
        links.push(Link { src: b, dst: a, capacity });
    };
    for pod in 0..k {
        for e in 0..half {
            for a in 0..half {
                both(edge(pod, e), agg(pod, a), caps.edge_agg);
            }
        }
        for a in 0..half {
            for c in 0..half {
                both(agg(pod, a), core(a * half + c), caps.agg_core);
            }
        }
    }
    Topology::new(nodes, links, pods)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleTopology {
    /// Three switches: 1<->2, 3->1, 3->2.
    Fig2a,
    /// Four switches: 1<->2, 1->3, 3->2, 3->4, 4->1, 4->3.
    Fig2b,
}

impl std::str::FromStr for SampleTopology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig2a" => Ok(Self::Fig2a),
            "fig2b" => Ok(Self::Fig2b),
            _ => Err(format!("unknown sample topology `{s}` (expected fig2a or fig2b)")),
        }
    }
}

pub fn make_sample_topology(
    which: SampleTopology,
    capacity: Bandwidth,
) -> Result<Topology, TopologyError> {
    let (nodes, edges): (&[SwitchId], &[(SwitchId, SwitchId)]) = match which {
        SampleTopology::Fig2a => (&[1, 2, 3], &[(1, 2), (2, 1), (3, 1), (3, 2)]),
        SampleTopology::Fig2b => (
            &[1, 2, 3, 4],
            &[(1, 2), (2, 1), (1, 3), (3, 2), (3, 4), (4, 1), (4, 3)],
        ),
    };
    Topology::new(
        nodes.iter().copied(),
        edges.iter().map(|&(src, dst)| Link { src, dst, capacity }),
        BTreeMap::new(),
    )
}
