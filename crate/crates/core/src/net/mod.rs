//! Substrate and virtual network model.
//!
//! Resource accounting keeps, for every substrate node and link, the load
//! contributed by each live request. Residuals are always recomputed as
//! `capacity - sum(loads)` in request-id order, so releasing a request puts
//! back the exact bits that were there before it was allocated, no matter
//! how allocations and releases interleave.

mod embedding;
mod format;
mod request;

use std::collections::{BTreeMap, VecDeque};
use std::hash::{Hash, Hasher};

pub use embedding::{Embedding, LinkMapping, PathFlow};
pub use format::{
    parse_requests, parse_substrate, read_requests, read_substrate, write_requests,
    write_substrate,
};
pub use request::{VirtualLink, VirtualNetworkRequest};

use crate::error::{Result, VneError};

pub type NodeId = usize;
pub type LinkId = usize;

/// Slack tolerated when one embedding routes several split flows over the
/// same substrate link; the per-flow amounts are floating-point remainders.
const AGGREGATE_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SubstrateNode {
    pub id: NodeId,
    pub cpu_capacity: f64,
    pub cpu_available: f64,
    pub position: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubstrateLink {
    /// Stored with the smaller id first.
    pub endpoints: (NodeId, NodeId),
    pub bw_capacity: f64,
    pub bw_available: f64,
}

impl SubstrateLink {
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.endpoints.0 == node {
            self.endpoints.1
        } else {
            self.endpoints.0
        }
    }
}

/// Undirected capacitated substrate graph plus the ledger of live embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstrateNetwork {
    nodes: Vec<SubstrateNode>,
    links: Vec<SubstrateLink>,
    adjacency: Vec<Vec<(NodeId, LinkId)>>,
    link_index: BTreeMap<(NodeId, NodeId), LinkId>,
    node_load: Vec<BTreeMap<u64, f64>>,
    link_load: Vec<BTreeMap<u64, f64>>,
    live: BTreeMap<u64, Embedding>,
}

fn ordered(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

fn check_resource(what: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value < 0.0 {
        return Err(VneError::InvalidNetwork(format!(
            "{what} must be a finite non-negative number, got {value}"
        )));
    }
    Ok(())
}

impl SubstrateNetwork {
    /// Builds a fresh substrate (all resources available). Node ids are the
    /// indices of `node_cpu`.
    pub fn new(node_cpu: &[f64], links: &[(NodeId, NodeId, f64)]) -> Result<Self> {
        let n = node_cpu.len();
        let mut nodes = Vec::with_capacity(n);
        for (id, &cpu) in node_cpu.iter().enumerate() {
            check_resource(&format!("cpu of node {id}"), cpu)?;
            nodes.push(SubstrateNode {
                id,
                cpu_capacity: cpu,
                cpu_available: cpu,
                position: None,
            });
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut link_index = BTreeMap::new();
        let mut stored = Vec::with_capacity(links.len());
        for &(u, v, bw) in links {
            if u >= n || v >= n {
                return Err(VneError::InvalidNetwork(format!(
                    "link {u}-{v} references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(VneError::InvalidNetwork(format!("self-loop on node {u}")));
            }
            check_resource(&format!("bandwidth of link {u}-{v}"), bw)?;
            let key = ordered(u, v);
            if link_index.contains_key(&key) {
                return Err(VneError::InvalidNetwork(format!(
                    "parallel link between {} and {}",
                    key.0, key.1
                )));
            }
            let id = stored.len();
            link_index.insert(key, id);
            adjacency[u].push((v, id));
            adjacency[v].push((u, id));
            stored.push(SubstrateLink {
                endpoints: key,
                bw_capacity: bw,
                bw_available: bw,
            });
        }
        for neighbours in &mut adjacency {
            neighbours.sort_unstable();
        }
        Ok(SubstrateNetwork {
            node_load: vec![BTreeMap::new(); n],
            link_load: vec![BTreeMap::new(); stored.len()],
            nodes,
            links: stored,
            adjacency,
            link_index,
            live: BTreeMap::new(),
        })
    }

    pub fn with_positions(mut self, positions: &[(f64, f64)]) -> Result<Self> {
        if positions.len() != self.nodes.len() {
            return Err(VneError::InvalidNetwork(format!(
                "{} positions for {} nodes",
                positions.len(),
                self.nodes.len()
            )));
        }
        for (node, &pos) in self.nodes.iter_mut().zip(positions) {
            node.position = Some(pos);
        }
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> &[SubstrateNode] {
        &self.nodes
    }

    pub fn links(&self) -> &[SubstrateLink] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> Result<&SubstrateNode> {
        self.nodes.get(id).ok_or(VneError::UnknownNode(id))
    }

    pub fn link(&self, id: LinkId) -> &SubstrateLink {
        &self.links[id]
    }

    pub fn link_between(&self, u: NodeId, v: NodeId) -> Option<LinkId> {
        self.link_index.get(&ordered(u, v)).copied()
    }

    /// Neighbours of `u` with the connecting link, sorted by neighbour id.
    pub fn neighbors(&self, u: NodeId) -> &[(NodeId, LinkId)] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: NodeId) -> usize {
        self.adjacency[u].len()
    }

    /// Residual bandwidth of every link, indexed by [`LinkId`].
    pub fn bw_available(&self) -> Vec<f64> {
        self.links.iter().map(|l| l.bw_available).collect()
    }

    /// Sum of residual bandwidth over the links incident to `u`.
    pub fn adjacent_bw(&self, u: NodeId) -> f64 {
        self.adjacency[u]
            .iter()
            .map(|&(_, l)| self.links[l].bw_available)
            .sum()
    }

    /// Node-level capacity check: residual CPU at least the demand.
    pub fn node_feasible(&self, sn: NodeId, demand: f64) -> Result<bool> {
        Ok(self.node(sn)?.cpu_available >= demand)
    }

    /// True iff every hop of `path` is an existing link with at least `bw`
    /// residual bandwidth. A missing link makes the path infeasible; a path
    /// with fewer than two nodes is rejected as malformed.
    pub fn path_feasible(&self, path: &[NodeId], bw: f64) -> Result<bool> {
        if path.len() < 2 {
            return Err(VneError::InvalidEmbedding {
                vnr: u64::MAX,
                reason: format!("path needs at least two nodes, got {}", path.len()),
            });
        }
        for &n in path {
            self.node(n)?;
        }
        Ok(path.windows(2).all(|hop| {
            self.link_between(hop[0], hop[1])
                .is_some_and(|l| self.links[l].bw_available >= bw)
        }))
    }

    /// Min-hop distances from `source`; unreachable nodes are `None`.
    pub fn hop_distances(&self, source: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        let mut queue = VecDeque::new();
        dist[source] = Some(0);
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for &(v, _) in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.nodes.is_empty() || self.hop_distances(0).iter().all(Option::is_some)
    }

    pub fn is_allocated(&self, vnr_id: u64) -> bool {
        self.live.contains_key(&vnr_id)
    }

    pub fn live_embeddings(&self) -> impl Iterator<Item = &Embedding> {
        self.live.values()
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    /// Reserves the resources of `emb`. All checks run before any mutation;
    /// on error the network is untouched.
    pub fn allocate(&mut self, emb: &Embedding) -> Result<()> {
        emb.validate(self)?;
        if self.live.contains_key(&emb.vnr_id) {
            return Err(VneError::AlreadyAllocated(emb.vnr_id));
        }
        let reject = |reason: String| VneError::Infeasible {
            vnr: emb.vnr_id,
            reason,
        };
        for (&sn, &demand) in emb.node_map.iter().zip(&emb.node_demand) {
            let node = &self.nodes[sn];
            if node.cpu_available < demand {
                return Err(reject(format!(
                    "node {sn} has {} cpu, needs {demand}",
                    node.cpu_available
                )));
            }
        }
        let usage = emb.link_usage(self);
        for (&link, &used) in &usage {
            let l = &self.links[link];
            if l.bw_available + AGGREGATE_SLACK * l.bw_capacity.max(1.0) < used {
                return Err(reject(format!(
                    "link {}-{} has {} bandwidth, needs {used}",
                    l.endpoints.0, l.endpoints.1, l.bw_available
                )));
            }
        }

        for (&sn, &demand) in emb.node_map.iter().zip(&emb.node_demand) {
            self.node_load[sn].insert(emb.vnr_id, demand);
            self.refresh_node(sn);
        }
        for (&link, &used) in &usage {
            self.link_load[link].insert(emb.vnr_id, used);
            self.refresh_link(link);
        }
        self.live.insert(emb.vnr_id, emb.clone());
        Ok(())
    }

    /// Returns the resources held by `emb`. Fails if it is not the embedding
    /// currently live for its request id.
    pub fn release(&mut self, emb: &Embedding) -> Result<()> {
        match self.live.get(&emb.vnr_id) {
            Some(stored) if stored == emb => {}
            Some(_) => {
                return Err(VneError::InvalidEmbedding {
                    vnr: emb.vnr_id,
                    reason: "differs from the allocated embedding".into(),
                })
            }
            None => return Err(VneError::NotAllocated(emb.vnr_id)),
        }
        self.release_id(emb.vnr_id).map(|_| ())
    }

    /// Releases whatever embedding is live for `vnr_id` and returns it.
    pub fn release_id(&mut self, vnr_id: u64) -> Result<Embedding> {
        let emb = self
            .live
            .remove(&vnr_id)
            .ok_or(VneError::NotAllocated(vnr_id))?;
        for &sn in &emb.node_map {
            self.node_load[sn].remove(&vnr_id);
            self.refresh_node(sn);
        }
        for link in emb.link_usage(self).into_keys() {
            self.link_load[link].remove(&vnr_id);
            self.refresh_link(link);
        }
        Ok(emb)
    }

    /// Drops every live embedding.
    pub fn reset(&mut self) {
        let ids: Vec<u64> = self.live.keys().copied().collect();
        for id in ids {
            // ids come from the live map itself
            let _ = self.release_id(id);
        }
    }

    fn refresh_node(&mut self, sn: NodeId) {
        let used: f64 = self.node_load[sn].values().sum();
        let node = &mut self.nodes[sn];
        node.cpu_available = (node.cpu_capacity - used).max(0.0);
    }

    fn refresh_link(&mut self, link: LinkId) {
        let used: f64 = self.link_load[link].values().sum();
        let l = &mut self.links[link];
        l.bw_available = (l.bw_capacity - used).max(0.0);
    }

    /// Full-scan conservation audit: for every node and link,
    /// `capacity - available` must equal the load recomputed from the live
    /// embeddings, and residuals must lie in `[0, capacity]`.
    pub fn audit(&self) -> Result<()> {
        let mut node_used = vec![0.0; self.nodes.len()];
        let mut link_used = vec![0.0; self.links.len()];
        for emb in self.live.values() {
            for (&sn, &d) in emb.node_map.iter().zip(&emb.node_demand) {
                node_used[sn] += d;
            }
            for (link, used) in emb.link_usage(self) {
                link_used[link] += used;
            }
        }
        let tol = |cap: f64| 1e-9 * cap.max(1.0);
        for (node, used) in self.nodes.iter().zip(node_used) {
            if !(0.0..=node.cpu_capacity).contains(&node.cpu_available)
                || ((node.cpu_capacity - node.cpu_available) - used).abs() > tol(node.cpu_capacity)
            {
                return Err(VneError::InvalidNetwork(format!(
                    "node {} residual {} inconsistent with live load {used}",
                    node.id, node.cpu_available
                )));
            }
        }
        for (l, used) in self.links.iter().zip(link_used) {
            if !(0.0..=l.bw_capacity).contains(&l.bw_available)
                || ((l.bw_capacity - l.bw_available) - used).abs() > tol(l.bw_capacity)
            {
                return Err(VneError::InvalidNetwork(format!(
                    "link {}-{} residual {} inconsistent with live load {used}",
                    l.endpoints.0, l.endpoints.1, l.bw_available
                )));
            }
        }
        Ok(())
    }

    /// Hash of every stored resource value (bitwise) and of the live set.
    pub fn state_fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for n in &self.nodes {
            n.cpu_available.to_bits().hash(&mut h);
            n.cpu_capacity.to_bits().hash(&mut h);
        }
        for l in &self.links {
            l.bw_available.to_bits().hash(&mut h);
            l.bw_capacity.to_bits().hash(&mut h);
        }
        for id in self.live.keys() {
            id.hash(&mut h);
        }
        h.finish()
    }

    pub fn total_bw_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.bw_capacity).sum()
    }

    pub fn total_bw_available(&self) -> f64 {
        self.links.iter().map(|l| l.bw_available).sum()
    }
}
