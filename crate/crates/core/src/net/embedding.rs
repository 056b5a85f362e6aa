use std::collections::{BTreeMap, BTreeSet};

use super::{LinkId, NodeId, SubstrateNetwork};
use crate::error::{Result, VneError};

/// One substrate path carrying part (or all) of a virtual link's demand.
#[derive(Clone, Debug, PartialEq)]
pub struct PathFlow {
    pub path: Vec<NodeId>,
    pub bw: f64,
}

impl PathFlow {
    pub fn hops(&self) -> usize {
        self.path.len().saturating_sub(1)
    }
}

/// Mapping of one virtual link, possibly split over several paths.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkMapping {
    /// Virtual endpoints `(a, b)`; the first path node hosts `a`.
    pub endpoints: (usize, usize),
    pub demand: f64,
    pub flows: Vec<PathFlow>,
}

impl LinkMapping {
    pub fn hops(&self) -> usize {
        self.flows.iter().map(PathFlow::hops).sum()
    }
}

/// A complete placement of one request: virtual node `i` sits on
/// `node_map[i]` and consumes `node_demand[i]` CPU.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub vnr_id: u64,
    pub node_map: Vec<NodeId>,
    pub node_demand: Vec<f64>,
    pub link_map: Vec<LinkMapping>,
}

impl Embedding {
    /// Total substrate hops over all flows.
    pub fn total_hops(&self) -> usize {
        self.link_map.iter().map(LinkMapping::hops).sum()
    }

    pub fn all_single_hop(&self) -> bool {
        self.link_map
            .iter()
            .all(|lm| lm.flows.iter().all(|f| f.hops() == 1))
    }

    /// Bandwidth this embedding puts on each substrate link it touches.
    pub fn link_usage(&self, net: &SubstrateNetwork) -> BTreeMap<LinkId, f64> {
        let mut usage = BTreeMap::new();
        for lm in &self.link_map {
            for flow in &lm.flows {
                for hop in flow.path.windows(2) {
                    if let Some(link) = net.link_between(hop[0], hop[1]) {
                        *usage.entry(link).or_insert(0.0) += flow.bw;
                    }
                }
            }
        }
        usage
    }

    /// Structural checks against the substrate topology: injective node map,
    /// simple paths over existing links between the right endpoints, and
    /// flows that add up to each link's demand.
    pub fn validate(&self, net: &SubstrateNetwork) -> Result<()> {
        let bad = |reason: String| VneError::InvalidEmbedding {
            vnr: self.vnr_id,
            reason,
        };
        if self.node_map.len() != self.node_demand.len() {
            return Err(bad("node map and demand lengths differ".into()));
        }
        let mut used = BTreeSet::new();
        for (v, &sn) in self.node_map.iter().enumerate() {
            net.node(sn)?;
            if !used.insert(sn) {
                return Err(bad(format!(
                    "substrate node {sn} hosts more than one virtual node (second is {v})"
                )));
            }
        }
        for (v, &d) in self.node_demand.iter().enumerate() {
            if !d.is_finite() || d < 0.0 {
                return Err(bad(format!("virtual node {v} has demand {d}")));
            }
        }
        for lm in &self.link_map {
            let (a, b) = lm.endpoints;
            let (&sa, &sb) = match (self.node_map.get(a), self.node_map.get(b)) {
                (Some(sa), Some(sb)) => (sa, sb),
                _ => return Err(bad(format!("virtual link {a}-{b} has an unmapped endpoint"))),
            };
            if lm.flows.is_empty() {
                return Err(bad(format!("virtual link {a}-{b} has no path")));
            }
            let mut carried = 0.0;
            for flow in &lm.flows {
                if !(flow.bw > 0.0) || !flow.bw.is_finite() {
                    return Err(bad(format!("flow on {a}-{b} carries {}", flow.bw)));
                }
                let path = &flow.path;
                if path.len() < 2 || path[0] != sa || path[path.len() - 1] != sb {
                    return Err(bad(format!(
                        "path {path:?} does not join {sa} and {sb} for virtual link {a}-{b}"
                    )));
                }
                let distinct: BTreeSet<_> = path.iter().collect();
                if distinct.len() != path.len() {
                    return Err(bad(format!("path {path:?} repeats a node")));
                }
                for hop in path.windows(2) {
                    if net.link_between(hop[0], hop[1]).is_none() {
                        return Err(bad(format!("no substrate link {}-{}", hop[0], hop[1])));
                    }
                }
                carried += flow.bw;
            }
            if (carried - lm.demand).abs() > 1e-9 * lm.demand.max(1.0) {
                return Err(bad(format!(
                    "virtual link {a}-{b} demands {} but its paths carry {carried}",
                    lm.demand
                )));
            }
        }
        Ok(())
    }
}
