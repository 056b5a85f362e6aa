//! Bandwidth-constrained path finding for virtual-link mapping.
//!
//! Every search takes an explicit residual-bandwidth vector (indexed by
//! [`LinkId`]) so embedders can route several virtual links of one request
//! against provisional residuals. The `*_feasible_path`/`split_flow`
//! wrappers read the residuals stored on the network.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::net::{LinkId, NodeId, PathFlow, SubstrateNetwork};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathQuery {
    pub source: NodeId,
    pub target: NodeId,
    pub bw_demand: f64,
}

impl PathQuery {
    pub fn new(source: NodeId, target: NodeId, bw_demand: f64) -> Self {
        PathQuery {
            source,
            target,
            bw_demand,
        }
    }
}

/// Relative amount below which a residual or a remaining demand counts as
/// exhausted while splitting.
const SPLIT_EPS: f64 = 1e-12;

fn in_range(net: &SubstrateNetwork, q: &PathQuery) -> bool {
    q.source < net.node_count() && q.target < net.node_count()
}

/// Minimum-hop path using only links with residual `>= bw_demand`; among
/// equal-hop paths the lexicographically smallest node sequence wins.
pub fn shortest_feasible_path(net: &SubstrateNetwork, q: &PathQuery) -> Option<Vec<NodeId>> {
    shortest_feasible_path_in(net, &net.bw_available(), q)
}

/// Label-setting search ordered by `(hops, node sequence)`.
pub fn shortest_feasible_path_in(
    net: &SubstrateNetwork,
    residual: &[f64],
    q: &PathQuery,
) -> Option<Vec<NodeId>> {
    if !in_range(net, q) {
        return None;
    }
    if q.source == q.target {
        return Some(vec![q.source]);
    }
    let mut settled = vec![false; net.node_count()];
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0usize, vec![q.source])));
    while let Some(Reverse((hops, path))) = heap.pop() {
        let u = *path.last().expect("paths are never empty");
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if u == q.target {
            return Some(path);
        }
        for &(v, link) in net.neighbors(u) {
            if !settled[v] && residual[link] >= q.bw_demand {
                let mut next = path.clone();
                next.push(v);
                heap.push(Reverse((hops + 1, next)));
            }
        }
    }
    None
}

/// Breadth-first link mapping. Same contract as [`shortest_feasible_path`]:
/// neighbours are expanded in ascending id order, which makes the first
/// discovered parent of every node the lexicographically smallest one.
pub fn bfs_feasible_path(net: &SubstrateNetwork, q: &PathQuery) -> Option<Vec<NodeId>> {
    bfs_feasible_path_in(net, &net.bw_available(), q)
}

pub fn bfs_feasible_path_in(
    net: &SubstrateNetwork,
    residual: &[f64],
    q: &PathQuery,
) -> Option<Vec<NodeId>> {
    bfs_with(net, q.source, q.target, |link| residual[link] >= q.bw_demand)
}

fn bfs_with(
    net: &SubstrateNetwork,
    source: NodeId,
    target: NodeId,
    usable: impl Fn(LinkId) -> bool,
) -> Option<Vec<NodeId>> {
    let n = net.node_count();
    if source >= n || target >= n {
        return None;
    }
    let mut parent: Vec<Option<NodeId>> = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([source]);
    seen[source] = true;
    while let Some(u) = queue.pop_front() {
        if u == target {
            let mut path = vec![target];
            let mut cur = target;
            while let Some(p) = parent[cur] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &(v, link) in net.neighbors(u) {
            if !seen[v] && usable(link) {
                seen[v] = true;
                parent[v] = Some(u);
                queue.push_back(v);
            }
        }
    }
    None
}

fn bottleneck(net: &SubstrateNetwork, residual: &[f64], path: &[NodeId]) -> f64 {
    path.windows(2)
        .map(|hop| residual[net.link_between(hop[0], hop[1]).expect("path over existing links")])
        .fold(f64::INFINITY, f64::min)
}

/// Splittable routing of `q`. See [`split_flow_in`].
pub fn split_flow(net: &SubstrateNetwork, q: &PathQuery) -> Option<Vec<PathFlow>> {
    split_flow_in(net, &net.bw_available(), q)
}

/// Greedy multipath routing: while demand remains, take the min-hop path
/// that can carry all of it if one exists, otherwise the min-hop path over
/// links with spare capacity at its bottleneck bandwidth. Provisional
/// allocations are subtracted between rounds.
///
/// Greedy path selection can strand capacity that a flow with reroutes would
/// use. When it stalls, the query is re-solved as an exact max-flow and the
/// flow is decomposed into simple paths, so a result exists exactly when
/// the demand fits within the s-t max-flow.
pub fn split_flow_in(
    net: &SubstrateNetwork,
    residual: &[f64],
    q: &PathQuery,
) -> Option<Vec<PathFlow>> {
    if !in_range(net, q) || q.source == q.target || !(q.bw_demand > 0.0) {
        return None;
    }
    let eps = SPLIT_EPS * q.bw_demand.max(1.0);
    let mut provisional = residual.to_vec();
    let mut remaining = q.bw_demand;
    let mut flows = Vec::new();
    while remaining > eps {
        let full = PathQuery::new(q.source, q.target, remaining);
        if let Some(path) = shortest_feasible_path_in(net, &provisional, &full) {
            flows.push(PathFlow { path, bw: remaining });
            return Some(flows);
        }
        let path = match bfs_with(net, q.source, q.target, |l| provisional[l] > eps) {
            Some(p) => p,
            None => return max_flow_split(net, residual, q),
        };
        let bw = bottleneck(net, &provisional, &path).min(remaining);
        for hop in path.windows(2) {
            let l = net.link_between(hop[0], hop[1]).expect("path over existing links");
            provisional[l] = (provisional[l] - bw).max(0.0);
        }
        remaining -= bw;
        flows.push(PathFlow { path, bw });
    }
    Some(flows)
}

/// Edmonds-Karp on the undirected residual graph (each link usable in
/// either direction up to its residual), capped at the demand, then path
/// decomposition with cycle cancelling.
fn max_flow_split(
    net: &SubstrateNetwork,
    residual: &[f64],
    q: &PathQuery,
) -> Option<Vec<PathFlow>> {
    let eps = SPLIT_EPS * q.bw_demand.max(1.0);
    // signed flow per link, positive in the endpoints.0 -> endpoints.1 direction
    let mut flow = vec![0.0f64; net.link_count()];
    let spare = |flow: &[f64], from: NodeId, link: LinkId| -> f64 {
        let l = net.link(link);
        if l.endpoints.0 == from {
            residual[link] - flow[link]
        } else {
            residual[link] + flow[link]
        }
    };
    let mut pushed = 0.0;
    while q.bw_demand - pushed > eps {
        let n = net.node_count();
        let mut parent: Vec<Option<(NodeId, LinkId)>> = vec![None; n];
        let mut seen = vec![false; n];
        seen[q.source] = true;
        let mut queue = VecDeque::from([q.source]);
        while let Some(u) = queue.pop_front() {
            if u == q.target {
                break;
            }
            for &(v, link) in net.neighbors(u) {
                if !seen[v] && spare(&flow, u, link) > eps {
                    seen[v] = true;
                    parent[v] = Some((u, link));
                    queue.push_back(v);
                }
            }
        }
        if !seen[q.target] {
            return None;
        }
        let mut amount = q.bw_demand - pushed;
        let mut cur = q.target;
        while let Some((p, link)) = parent[cur] {
            amount = amount.min(spare(&flow, p, link));
            cur = p;
        }
        let mut cur = q.target;
        while let Some((p, link)) = parent[cur] {
            if net.link(link).endpoints.0 == p {
                flow[link] += amount;
            } else {
                flow[link] -= amount;
            }
            cur = p;
        }
        pushed += amount;
    }
    Some(decompose(net, &mut flow, q, eps))
}

fn decompose(net: &SubstrateNetwork, flow: &mut [f64], q: &PathQuery, eps: f64) -> Vec<PathFlow> {
    // outgoing flow from `u` over `link`, positive when it leaves u
    let out = |flow: &[f64], u: NodeId, link: LinkId| -> f64 {
        if net.link(link).endpoints.0 == u {
            flow[link]
        } else {
            -flow[link]
        }
    };
    let mut flows: Vec<PathFlow> = Vec::new();
    loop {
        let mut path = vec![q.source];
        let mut links: Vec<LinkId> = Vec::new();
        let mut position = vec![usize::MAX; net.node_count()];
        position[q.source] = 0;
        let mut cur = q.source;
        let mut stalled = false;
        while cur != q.target {
            let next = net
                .neighbors(cur)
                .iter()
                .find(|&&(_, l)| out(flow, cur, l) > eps)
                .copied();
            let Some((v, link)) = next else {
                stalled = true;
                break;
            };
            if position[v] != usize::MAX {
                // cancel the cycle v -> ... -> cur -> v
                let start = position[v];
                let mut cycle: Vec<(NodeId, LinkId)> = (start..links.len())
                    .map(|i| (path[i], links[i]))
                    .collect();
                cycle.push((cur, link));
                let amount = cycle
                    .iter()
                    .map(|&(u, l)| out(flow, u, l))
                    .fold(f64::INFINITY, f64::min);
                for &(u, l) in &cycle {
                    if net.link(l).endpoints.0 == u {
                        flow[l] -= amount;
                    } else {
                        flow[l] += amount;
                    }
                }
                for &node in &path[start + 1..] {
                    position[node] = usize::MAX;
                }
                path.truncate(start + 1);
                links.truncate(start);
                cur = v;
                continue;
            }
            position[v] = path.len();
            path.push(v);
            links.push(link);
            cur = v;
        }
        if stalled {
            break;
        }
        let amount = path
            .windows(2)
            .zip(&links)
            .map(|(hop, &l)| out(flow, hop[0], l))
            .fold(f64::INFINITY, f64::min);
        for (hop, &l) in path.windows(2).zip(&links) {
            if net.link(l).endpoints.0 == hop[0] {
                flow[l] -= amount;
            } else {
                flow[l] += amount;
            }
        }
        match flows.iter_mut().find(|f| f.path == path) {
            Some(f) => f.bw += amount,
            None => flows.push(PathFlow { path, bw: amount }),
        }
    }
    // fold rounding leftovers into the last path so the flows sum to the demand
    let carried: f64 = flows.iter().map(|f| f.bw).sum();
    if let Some(last) = flows.last_mut() {
        last.bw += q.bw_demand - carried;
    }
    flows
}
