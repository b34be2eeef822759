//! Flow workloads: synthetic generation by size class, the flow file format,
//! and same-pair small-flow compression.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::topology::{Bandwidth, SwitchId, Topology};

pub type FlowId = u32;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("flow {0}: source equals destination")]
    SelfFlow(FlowId),
    #[error("flow {0}: demand must be positive")]
    ZeroDemand(FlowId),
    #[error("flow ids must be dense 1..=N in order; position {position} holds id {id}")]
    NonDenseIds { position: usize, id: FlowId },
    #[error("class fractions sum to {0}, expected 1")]
    MixSum(f64),
    #[error("invalid class mix: {0}")]
    BadMix(String),
    #[error("plr must lie in [0, 1], got {0}")]
    BadPlr(f64),
    #[error("plr > 0 requires a topology with pod labels")]
    PlrWithoutPods,
    #[error("topology has fewer than two edge switches")]
    TooFewEdgeSwitches,
    #[error("lower bound {lower} exceeds upper bound {upper}")]
    BadBounds { lower: Bandwidth, upper: Bandwidth },
    #[error("no metric for merged flow {0}")]
    MissingMetric(FlowId),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowClass {
    Micro,
    Small,
    Medium,
    Big,
    Custom,
}

impl FlowClass {
    pub const SIZED: [FlowClass; 4] = [Self::Micro, Self::Small, Self::Medium, Self::Big];

    /// Demand as a fraction of link bandwidth.
    pub fn bandwidth_fraction(self) -> Option<f64> {
        match self {
            Self::Micro => Some(0.005),
            Self::Small => Some(0.02),
            Self::Medium => Some(0.2),
            Self::Big => Some(0.5),
            Self::Custom => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Micro => "micro",
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Big => "big",
            Self::Custom => "custom",
        }
    }
}

impl fmt::Display for FlowClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FlowClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "micro" => Ok(Self::Micro),
            "small" => Ok(Self::Small),
            "medium" => Ok(Self::Medium),
            "big" => Ok(Self::Big),
            "custom" => Ok(Self::Custom),
            _ => Err(format!("unknown flow class `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub id: FlowId,
    pub src: SwitchId,
    pub dst: SwitchId,
    pub demand: Bandwidth,
    pub class: FlowClass,
}

/// Ordered flows with dense ids `1..=N`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FlowSet {
    flows: Vec<Flow>,
}

impl FlowSet {
    pub fn new(flows: Vec<Flow>) -> Result<Self, TrafficError> {
        for (i, f) in flows.iter().enumerate() {
            if f.id as usize != i + 1 {
                return Err(TrafficError::NonDenseIds {
                    position: i,
                    id: f.id,
                });
            }
            if f.src == f.dst {
                return Err(TrafficError::SelfFlow(f.id));
            }
            if f.demand == 0 {
                return Err(TrafficError::ZeroDemand(f.id));
            }
        }
        Ok(Self { flows })
    }

    /// Builds a flow set from `(src, dst, demand)` triples, numbering from 1.
    pub fn from_triples(
        triples: impl IntoIterator<Item = (SwitchId, SwitchId, Bandwidth)>,
    ) -> Result<Self, TrafficError> {
        Self::new(
            triples
                .into_iter()
                .enumerate()
                .map(|(i, (src, dst, demand))| Flow {
                    id: i as FlowId + 1,
                    src,
                    dst,
                    demand,
                    class: FlowClass::Custom,
                })
                .collect(),
        )
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn get(&self, id: FlowId) -> Option<&Flow> {
        (id as usize).checked_sub(1).and_then(|i| self.flows.get(i))
    }

    pub fn total_demand(&self) -> Bandwidth {
        self.flows.iter().map(|f| f.demand).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for f in &self.flows {
            writeln!(out, "flow {} {} {} {} {}", f.id, f.src, f.dst, f.demand, f.class).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, TrafficError> {
        let mut flows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| TrafficError::Parse { line: i + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let ["flow", id, src, dst, demand, class] = fields.as_slice() else {
                return Err(err(format!("expected `flow <id> <src> <dst> <demand> <class>`, got `{line}`")));
            };
            let int = |s: &str| s.parse::<u64>().map_err(|_| err(format!("invalid integer `{s}`")));
            flows.push(Flow {
                id: int(id)? as FlowId,
                src: int(src)? as SwitchId,
                dst: int(dst)? as SwitchId,
                demand: int(demand)?,
                class: class.parse().map_err(err)?,
            });
        }
        Self::new(flows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrafficError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrafficError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Fractions of generated flows per size class.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
#[serde(try_from = "String")]
pub struct ClassMix(Vec<(FlowClass, f64)>);

impl ClassMix {
    pub fn new(entries: Vec<(FlowClass, f64)>) -> Result<Self, TrafficError> {
        if entries.is_empty() {
            return Err(TrafficError::BadMix("empty mix".into()));
        }
        for &(class, frac) in &entries {
            if class == FlowClass::Custom {
                return Err(TrafficError::BadMix("custom flows have no size".into()));
            }
            if !(frac.is_finite() && frac >= 0.0) {
                return Err(TrafficError::BadMix(format!("fraction for {class} is {frac}")));
            }
        }
        let sum: f64 = entries.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(TrafficError::MixSum(sum));
        }
        Ok(Self(entries))
    }

    pub fn only(class: FlowClass) -> Self {
        Self(vec![(class, 1.0)])
    }

    pub fn entries(&self) -> &[(FlowClass, f64)] {
        &self.0
    }

    pub fn fraction(&self, class: FlowClass) -> f64 {
        self.0.iter().filter(|e| e.0 == class).map(|e| e.1).sum()
    }
}

impl FromStr for ClassMix {
    type Err = TrafficError;

    /// Parses `micro=0.4,small=0.3,...`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut entries = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, frac) = part
                .split_once('=')
                .ok_or_else(|| TrafficError::BadMix(format!("expected class=fraction, got `{part}`")))?;
            let class = name.trim().parse().map_err(TrafficError::BadMix)?;
            let frac = frac
                .trim()
                .parse::<f64>()
                .map_err(|_| TrafficError::BadMix(format!("invalid fraction `{frac}`")))?;
            entries.push((class, frac));
        }
        Self::new(entries)
    }
}

impl TryFrom<String> for ClassMix {
    type Error = TrafficError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl fmt::Display for ClassMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(c, x)| format!("{c}={x}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Demand of a sized class on a fabric whose narrowest edge link is `base`.
pub fn class_demand(class: FlowClass, base: Bandwidth) -> Bandwidth {
    let frac = class.bandwidth_fraction().unwrap_or(1.0);
    ((frac * base as f64).round() as Bandwidth).max(1)
}

/// Draws `n_flows` flows between edge switches.
///
/// Sources are uniform over edge switches. With probability `1 - plr` the
/// destination is another edge switch of the source's pod, otherwise an edge
/// switch of a different pod. When the preferred side has no candidate the
/// other side is used.
pub fn generate_flows(
    topology: &Topology,
    n_flows: usize,
    mix: &ClassMix,
    plr: f64,
    seed: u64,
) -> Result<FlowSet, TrafficError> {
    if !(0.0..=1.0).contains(&plr) {
        return Err(TrafficError::BadPlr(plr));
    }
    if plr > 0.0 && !topology.has_pods() {
        return Err(TrafficError::PlrWithoutPods);
    }
    let edges = topology.edge_switches();
    if edges.len() < 2 {
        return Err(TrafficError::TooFewEdgeSwitches);
    }
    let base = topology
        .min_edge_link_capacity()
        .ok_or(TrafficError::TooFewEdgeSwitches)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = mix.entries().iter().map(|e| e.1).collect();
    let class_dist =
        WeightedIndex::new(&weights).map_err(|e| TrafficError::BadMix(e.to_string()))?;

    let mut flows = Vec::with_capacity(n_flows);
    for i in 0..n_flows {
        let class = mix.entries()[class_dist.sample(&mut rng)].0;
        let src = edges[rng.gen_range(0..edges.len())];
        let pod = topology.pod_of(src);
        let (same, other): (Vec<SwitchId>, Vec<SwitchId>) = edges
            .iter()
            .copied()
            .filter(|&e| e != src)
            .partition(|&e| topology.pod_of(e) == pod);
        let stay = rng.gen::<f64>() >= plr;
        let pool = match (stay, same.is_empty(), other.is_empty()) {
            (true, false, _) | (false, false, true) => &same,
            _ => &other,
        };
        let dst = pool[rng.gen_range(0..pool.len())];
        flows.push(Flow {
            id: i as FlowId + 1,
            src,
            dst,
            demand: class_demand(class, base),
            class,
        });
    }
    FlowSet::new(flows)
}

/// Record of which original flows were merged into which output flows.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CompressionMap {
    pub lower_bound: Bandwidth,
    pub upper_bound: Bandwidth,
    /// Output flow id -> original `(id, demand)` members.
    pub merged: BTreeMap<FlowId, Vec<(FlowId, Bandwidth)>>,
    /// Output flow id -> original flow id, for flows left untouched.
    pub passthrough: BTreeMap<FlowId, FlowId>,
}

impl CompressionMap {
    pub fn is_identity(&self) -> bool {
        self.merged.is_empty()
    }
}

/// Packs same-pair flows below `lower_bound` into merged flows of at most
/// `upper_bound` (first-fit decreasing). Larger flows pass through.
///
/// Output flows are ordered by their smallest original member id and
/// renumbered densely.
pub fn compress_flows(
    flows: &FlowSet,
    lower_bound: Bandwidth,
    upper_bound: Bandwidth,
) -> Result<(FlowSet, CompressionMap), TrafficError> {
    if lower_bound > upper_bound {
        return Err(TrafficError::BadBounds {
            lower: lower_bound,
            upper: upper_bound,
        });
    }

    let mut small: BTreeMap<(SwitchId, SwitchId), Vec<&Flow>> = BTreeMap::new();
    // (first original id, members); a pass-through flow is a group of one with
    // `merged = false`
    let mut groups: Vec<(FlowId, Vec<&Flow>, bool)> = Vec::new();
    for f in flows.flows() {
        if f.demand < lower_bound {
            small.entry((f.src, f.dst)).or_default().push(f);
        } else {
            groups.push((f.id, vec![f], false));
        }
    }

    for (_, mut members) in small {
        members.sort_by(|a, b| b.demand.cmp(&a.demand).then(a.id.cmp(&b.id)));
        let mut bins: Vec<(Bandwidth, Vec<&Flow>)> = Vec::new();
        for f in members {
            match bins.iter_mut().find(|(sum, _)| sum + f.demand <= upper_bound) {
                Some((sum, bin)) => {
                    *sum += f.demand;
                    bin.push(f);
                }
                None => bins.push((f.demand, vec![f])),
            }
        }
        for (_, mut bin) in bins {
            bin.sort_by_key(|f| f.id);
            groups.push((bin[0].id, bin, true));
        }
    }
    groups.sort_by_key(|g| g.0);

    let mut map = CompressionMap {
        lower_bound,
        upper_bound,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(groups.len());
    for (i, (_, members, merged)) in groups.into_iter().enumerate() {
        let id = i as FlowId + 1;
        let first = members[0];
        let class = if members.iter().all(|m| m.class == first.class) {
            first.class
        } else {
            FlowClass::Custom
        };
        out.push(Flow {
            id,
            src: first.src,
            dst: first.dst,
            demand: members.iter().map(|m| m.demand).sum(),
            class,
        });
        if merged {
            map.merged
                .insert(id, members.iter().map(|m| (m.id, m.demand)).collect());
        } else {
            map.passthrough.insert(id, first.id);
        }
    }
    Ok((FlowSet::new(out)?, map))
}

/// Spreads per-output-flow metrics back over the original flows, in
/// proportion to each member's demand.
pub fn expand_metrics(
    metrics: &BTreeMap<FlowId, f64>,
    map: &CompressionMap,
) -> Result<BTreeMap<FlowId, f64>, TrafficError> {
    let mut out = BTreeMap::new();
    for (&new_id, members) in &map.merged {
        let value = *metrics
            .get(&new_id)
            .ok_or(TrafficError::MissingMetric(new_id))?;
        let total: Bandwidth = members.iter().map(|m| m.1).sum();
        for &(orig, demand) in members {
            out.insert(orig, value * demand as f64 / total as f64);
        }
    }
    for (&new_id, &orig) in &map.passthrough {
        let value = *metrics
            .get(&new_id)
            .ok_or(TrafficError::MissingMetric(new_id))?;
        out.insert(orig, value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{make_fat_tree, make_sample_topology, FatTreeCapacities, SampleTopology};

    fn k4(cap: Bandwidth) -> Topology {
        make_fat_tree(4, FatTreeCapacities::uniform(cap)).unwrap()
    }

    fn one_pair(demands: &[Bandwidth]) -> FlowSet {
        FlowSet::from_triples(demands.iter().map(|&d| (1, 2, d))).unwrap()
    }

    #[test]
    fn class_demands() {
        assert_eq!(class_demand(FlowClass::Big, 100), 50);
        assert_eq!(class_demand(FlowClass::Medium, 100), 20);
        assert_eq!(class_demand(FlowClass::Small, 100_000), 2_000);
        assert_eq!(class_demand(FlowClass::Micro, 100_000), 500);
        // never rounds to zero
        assert_eq!(class_demand(FlowClass::Micro, 10), 1);
    }

    #[test]
    fn big_flow_on_capacity_100() {
        let fs = generate_flows(&k4(100), 10, &ClassMix::only(FlowClass::Big), 0.5, 1).unwrap();
        assert!(fs.flows().iter().all(|f| f.demand == 50));
    }

    #[test]
    fn plr_zero_stays_in_pod() {
        let topo = k4(100);
        let mix: ClassMix = "micro=0.5,big=0.5".parse().unwrap();
        let fs = generate_flows(&topo, 500, &mix, 0.0, 3).unwrap();
        for f in fs.flows() {
            assert_eq!(topo.pod_of(f.src), topo.pod_of(f.dst));
            assert_ne!(f.src, f.dst);
        }
        let fs = generate_flows(&topo, 500, &mix, 1.0, 3).unwrap();
        for f in fs.flows() {
            assert_ne!(topo.pod_of(f.src), topo.pod_of(f.dst));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let topo = k4(1000);
        let mix: ClassMix = "micro=0.4,small=0.3,medium=0.2,big=0.1".parse().unwrap();
        let a = generate_flows(&topo, 2000, &mix, 0.3, 99).unwrap();
        let b = generate_flows(&topo, 2000, &mix, 0.3, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_flows(&topo, 2000, &mix, 0.3, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generation_errors() {
        let plain = make_sample_topology(SampleTopology::Fig2a, 10).unwrap();
        let mix = ClassMix::only(FlowClass::Small);
        assert!(matches!(
            generate_flows(&plain, 5, &mix, 0.2, 0),
            Err(TrafficError::PlrWithoutPods)
        ));
        assert!(generate_flows(&plain, 5, &mix, 0.0, 0).is_ok());
        assert!(matches!(
            generate_flows(&k4(10), 5, &mix, 1.5, 0),
            Err(TrafficError::BadPlr(_))
        ));
    }

    #[test]
    fn mix_parsing() {
        assert!(matches!(
            "micro=0.5,small=0.4".parse::<ClassMix>(),
            Err(TrafficError::MixSum(_))
        ));
        assert!("micro=0.5,tiny=0.5".parse::<ClassMix>().is_err());
        let m: ClassMix = "micro=0.25, big=0.75".parse().unwrap();
        assert_eq!(m.fraction(FlowClass::Big), 0.75);
        assert_eq!(m.to_string().parse::<ClassMix>().unwrap(), m);
    }

    #[test]
    fn flow_file_round_trip_and_errors() {
        let fs = generate_flows(&k4(100), 20, &ClassMix::only(FlowClass::Medium), 0.5, 4).unwrap();
        assert_eq!(FlowSet::parse(&fs.to_text()).unwrap(), fs);
        assert!(matches!(
            FlowSet::parse("flow 1 1 2 5 small\nflow 3 1 2 5 small\n"),
            Err(TrafficError::NonDenseIds { position: 1, id: 3 })
        ));
        assert!(matches!(
            FlowSet::parse("flow 1 1 2 5 small\nflow 2 1 2 x small\n"),
            Err(TrafficError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            FlowSet::parse("flow 1 4 4 5 small\n"),
            Err(TrafficError::SelfFlow(1))
        ));
    }

    #[test]
    fn compress_all_small_into_one() {
        let (out, map) = compress_flows(&one_pair(&[3, 3, 3]), 10, 100).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out.flows()[0].demand, 9);
        assert_eq!(map.merged[&1], vec![(1, 3), (2, 3), (3, 3)]);
    }

    #[test]
    fn compress_no_two_fit_under_cap() {
        let (out, map) = compress_flows(&one_pair(&[6, 6, 6]), 10, 10).unwrap();
        let demands: Vec<_> = out.flows().iter().map(|f| f.demand).collect();
        assert_eq!(demands, vec![6, 6, 6]);
        assert_eq!(map.merged.len(), 3);
    }

    #[test]
    fn compress_with_zero_lower_bound_is_identity() {
        let fs = FlowSet::from_triples([(1, 2, 4), (2, 1, 7), (1, 2, 1)]).unwrap();
        let (out, map) = compress_flows(&fs, 0, 0).unwrap();
        assert_eq!(out, fs);
        assert!(map.is_identity());
    }

    #[test]
    fn compress_keeps_large_flows_in_place() {
        let fs = FlowSet::from_triples([(1, 2, 50), (1, 2, 2), (2, 1, 60), (1, 2, 3)]).unwrap();
        let (out, map) = compress_flows(&fs, 10, 20).unwrap();
        let got: Vec<_> = out.flows().iter().map(|f| (f.src, f.dst, f.demand)).collect();
        assert_eq!(got, vec![(1, 2, 50), (1, 2, 5), (2, 1, 60)]);
        assert_eq!(map.passthrough, BTreeMap::from([(1, 1), (3, 3)]));
        assert_eq!(map.merged[&2], vec![(2, 2), (4, 3)]);
    }

    #[test]
    fn compress_rejects_inverted_bounds() {
        assert!(matches!(
            compress_flows(&one_pair(&[1]), 5, 4),
            Err(TrafficError::BadBounds { .. })
        ));
    }

    #[test]
    fn expand_proportional() {
        let (_, map) = compress_flows(&one_pair(&[3, 3, 3]), 10, 100).unwrap();
        let out = expand_metrics(&BTreeMap::from([(1, 6.0)]), &map).unwrap();
        assert_eq!(out, BTreeMap::from([(1, 2.0), (2, 2.0), (3, 2.0)]));

        let fs = FlowSet::from_triples([(1, 2, 50), (1, 2, 2), (1, 2, 6)]).unwrap();
        let (_, map) = compress_flows(&fs, 10, 20).unwrap();
        let out = expand_metrics(&BTreeMap::from([(1, 40.0), (2, 4.0)]), &map).unwrap();
        assert_eq!(out[&1], 40.0);
        assert_eq!(out[&2], 1.0);
        assert_eq!(out[&3], 3.0);

        assert!(matches!(
            expand_metrics(&BTreeMap::from([(1, 40.0)]), &map),
            Err(TrafficError::MissingMetric(2))
        ));
    }
}
