//! Ranking heuristics: the resource-product greedy and random-walk ranking.

use super::{complete_embedding, Embedder, LinkStrategy};
use crate::error::{Result, VneError};
use crate::net::{Embedding, NodeId, SubstrateNetwork, VirtualNetworkRequest};

const DAMPING: f64 = 0.85;
const WALK_TOL: f64 = 1e-6;
const WALK_CAP: usize = 1000;

/// `H(u) = residual cpu(u) * sum of residual bandwidth on adjacent links`.
pub fn baseline_scores(net: &SubstrateNetwork) -> Vec<f64> {
    (0..net.node_count())
        .map(|u| net.nodes()[u].cpu_available * net.adjacent_bw(u))
        .collect()
}

/// Indices sorted by descending score, ties by ascending index.
fn rank_by(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn baseline_rank(net: &SubstrateNetwork) -> Vec<NodeId> {
    rank_by(&baseline_scores(net))
}

/// Maps virtual nodes (in `vnode_order`) greedily to the first feasible,
/// unused substrate node of `substrate_order`.
fn greedy_map(
    net: &SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    vnode_order: &[usize],
    substrate_order: &[NodeId],
    link: LinkStrategy,
) -> Option<Embedding> {
    let mut used = vec![false; net.node_count()];
    let mut node_map = vec![usize::MAX; vnr.node_count()];
    for &v in vnode_order {
        let demand = vnr.cpu_demand[v];
        let host = substrate_order
            .iter()
            .copied()
            .find(|&s| !used[s] && net.nodes()[s].cpu_available >= demand)?;
        used[host] = true;
        node_map[v] = host;
    }
    complete_embedding(net, vnr, node_map, link)
}

pub fn baseline_embed(
    net: &SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    link: LinkStrategy,
) -> Option<Embedding> {
    greedy_map(net, vnr, &vnr.processing_order(), &baseline_rank(net), link)
}

/// Damped random-walk ranking on a graph given by adjacency lists and
/// per-node resource scores. The walk moves from `u` to `v` in
/// `N(u) + {u}` with probability proportional to `h[v]` (uniformly when
/// the whole neighbourhood scores zero).
pub fn noderank_scores_on(adjacency: &[Vec<usize>], h: &[f64]) -> Result<Vec<f64>> {
    let n = adjacency.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let hood = |u: usize| adjacency[u].iter().copied().chain(std::iter::once(u));
    let totals: Vec<f64> = (0..n).map(|u| hood(u).map(|v| h[v]).sum()).collect();
    let mut score = vec![1.0 / n as f64; n];
    for _ in 0..WALK_CAP {
        let mut next = vec![(1.0 - DAMPING) / n as f64; n];
        for u in 0..n {
            let size = adjacency[u].len() + 1;
            for v in hood(u) {
                let p = if totals[u] > 0.0 {
                    h[v] / totals[u]
                } else {
                    1.0 / size as f64
                };
                next[v] += DAMPING * p * score[u];
            }
        }
        let change: f64 = next.iter().zip(&score).map(|(a, b)| (a - b).abs()).sum();
        score = next;
        if change < WALK_TOL {
            return Ok(score);
        }
    }
    let residual = score.iter().sum::<f64>() - 1.0;
    Err(VneError::NoConvergence {
        iterations: WALK_CAP,
        residual,
    })
}

pub fn noderank_scores(net: &SubstrateNetwork) -> Result<Vec<f64>> {
    let adjacency: Vec<Vec<usize>> = (0..net.node_count())
        .map(|u| net.neighbors(u).iter().map(|&(v, _)| v).collect())
        .collect();
    noderank_scores_on(&adjacency, &baseline_scores(net))
}

/// Random-walk scores of the request graph, demands standing in for
/// resources.
fn virtual_scores(vnr: &VirtualNetworkRequest) -> Result<Vec<f64>> {
    let bw = vnr.adjacent_bw();
    let h: Vec<f64> = vnr.cpu_demand.iter().zip(&bw).map(|(c, b)| c * b).collect();
    noderank_scores_on(&vnr.adjacency(), &h)
}

pub fn noderank_embed(
    net: &SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    link: LinkStrategy,
) -> Result<Option<Embedding>> {
    let substrate_order = rank_by(&noderank_scores(net)?);
    let vnode_order = rank_by(&virtual_scores(vnr)?);
    Ok(greedy_map(net, vnr, &vnode_order, &substrate_order, link))
}

#[derive(Clone, Debug)]
pub struct BaselineEmbedder {
    pub link: LinkStrategy,
}

impl Embedder for BaselineEmbedder {
    fn name(&self) -> String {
        "baseline".into()
    }

    fn embed(&mut self, net: &SubstrateNetwork, vnr: &VirtualNetworkRequest) -> Result<Option<Embedding>> {
        Ok(baseline_embed(net, vnr, self.link))
    }
}

#[derive(Clone, Debug)]
pub struct NodeRankEmbedder {
    pub link: LinkStrategy,
}

impl Embedder for NodeRankEmbedder {
    fn name(&self) -> String {
        "noderank".into()
    }

    fn embed(&mut self, net: &SubstrateNetwork, vnr: &VirtualNetworkRequest) -> Result<Option<Embedding>> {
        noderank_embed(net, vnr, self.link)
    }
}
