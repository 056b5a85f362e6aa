use std::collections::{BTreeSet, VecDeque};

use crate::error::{Result, VneError};

#[derive(Clone, Debug, PartialEq)]
pub struct VirtualLink {
    pub endpoints: (usize, usize),
    pub bw_demand: f64,
}

/// A virtual network request: a connected demand graph with an arrival time
/// and a lifetime. Virtual node ids are indices into `cpu_demand`.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualNetworkRequest {
    pub id: u64,
    pub arrival_time: f64,
    pub lifetime: f64,
    pub cpu_demand: Vec<f64>,
    pub links: Vec<VirtualLink>,
}

impl VirtualNetworkRequest {
    pub fn new(
        id: u64,
        arrival_time: f64,
        lifetime: f64,
        cpu_demand: Vec<f64>,
        links: Vec<VirtualLink>,
    ) -> Result<Self> {
        let vnr = VirtualNetworkRequest {
            id,
            arrival_time,
            lifetime,
            cpu_demand,
            links,
        };
        vnr.validate()?;
        Ok(vnr)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| VneError::InvalidRequest {
            id: self.id,
            reason,
        };
        if !(self.arrival_time >= 0.0) || !self.arrival_time.is_finite() {
            return Err(bad(format!("arrival time {}", self.arrival_time)));
        }
        if !(self.lifetime > 0.0) || !self.lifetime.is_finite() {
            return Err(bad(format!("lifetime {}", self.lifetime)));
        }
        let n = self.cpu_demand.len();
        if n == 0 {
            return Err(bad("no virtual nodes".into()));
        }
        for (v, &d) in self.cpu_demand.iter().enumerate() {
            if !(d > 0.0) || !d.is_finite() {
                return Err(bad(format!("node {v} demand {d}")));
            }
        }
        let mut seen = BTreeSet::new();
        for l in &self.links {
            let (a, b) = l.endpoints;
            if a >= n || b >= n {
                return Err(bad(format!("link {a}-{b} references a missing node")));
            }
            if a == b {
                return Err(bad(format!("self-loop on node {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(bad(format!("parallel links between {a} and {b}")));
            }
            if !(l.bw_demand > 0.0) || !l.bw_demand.is_finite() {
                return Err(bad(format!("link {a}-{b} demand {}", l.bw_demand)));
            }
        }
        if !self.is_connected() {
            return Err(bad("demand graph is disconnected".into()));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.cpu_demand.len()
    }

    pub fn departure_time(&self) -> f64 {
        self.arrival_time + self.lifetime
    }

    /// Neighbour lists (sorted) of the demand graph.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for l in &self.links {
            adj[l.endpoints.0].push(l.endpoints.1);
            adj[l.endpoints.1].push(l.endpoints.0);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }

    /// Sum of bandwidth demand of links incident to each virtual node.
    pub fn adjacent_bw(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.node_count()];
        for l in &self.links {
            sums[l.endpoints.0] += l.bw_demand;
            sums[l.endpoints.1] += l.bw_demand;
        }
        sums
    }

    /// Virtual nodes by descending CPU demand, ties by ascending id.
    pub fn processing_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.node_count()).collect();
        order.sort_by(|&a, &b| {
            self.cpu_demand[b]
                .total_cmp(&self.cpu_demand[a])
                .then(a.cmp(&b))
        });
        order
    }

    pub fn is_connected(&self) -> bool {
        let adj = self.adjacency();
        let mut seen = vec![false; adj.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
