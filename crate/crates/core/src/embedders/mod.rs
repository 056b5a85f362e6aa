//! Embedding algorithms: two ranking heuristics and two learning agents.
//!
//! Every algorithm proposes an [`Embedding`] against the current residuals
//! without touching the substrate; the caller allocates it.

mod features;
mod heuristic;
mod pointer;
mod policy;
mod trace;
mod train;

use std::str::FromStr;

use rand::Rng;

use crate::error::{Result, VneError};
use crate::learn::CellKind;
use crate::net::{Embedding, LinkMapping, NodeId, PathFlow, SubstrateNetwork, VirtualNetworkRequest};
use crate::routing::{bfs_feasible_path_in, shortest_feasible_path_in, split_flow_in, PathQuery};

pub use features::{FeatureProvider, RAW_FEATURES};
pub use heuristic::{
    baseline_embed, baseline_rank, baseline_scores, noderank_embed, noderank_scores,
    noderank_scores_on, BaselineEmbedder, NodeRankEmbedder,
};
pub use pointer::{
    active_search, pointer_episode, EpisodeSettings, PointerAgent, PointerEpisode, PointerNet, PointerStep,
    SearchOutcome, DEMAND_FEATURES,
};
pub use policy::{PolicyAgent, PolicyEpisode, PolicyNet, PolicyStep};
pub use trace::{Decision, EpisodeTrace};
pub use train::{train_agent, TrainOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Baseline,
    NodeRank,
    /// Single-stage policy-gradient agent over substrate features.
    Policy,
    /// Two-stage pointer-network agent with hop rewards.
    Pointer,
}

impl FromStr for Algorithm {
    type Err = VneError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Algorithm::Baseline),
            "noderank" => Ok(Algorithm::NodeRank),
            "rl" => Ok(Algorithm::Policy),
            "pointer" => Ok(Algorithm::Pointer),
            other => Err(VneError::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl Algorithm {
    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Baseline => "baseline",
            Algorithm::NodeRank => "noderank",
            Algorithm::Policy => "rl",
            Algorithm::Pointer => "pointer",
        }
    }

    /// Link strategy used when none is configured.
    pub fn default_link(self) -> LinkStrategy {
        match self {
            Algorithm::Policy => LinkStrategy::Bfs,
            _ => LinkStrategy::Shortest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkStrategy {
    Shortest,
    Bfs,
    Split,
}

impl FromStr for LinkStrategy {
    type Err = VneError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shortest" => Ok(LinkStrategy::Shortest),
            "bfs" => Ok(LinkStrategy::Bfs),
            "split" => Ok(LinkStrategy::Split),
            other => Err(VneError::Config(format!("unknown link strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    /// Normalized attribute matrix only.
    Raw,
    /// Attributes plus spectral features rebuilt for every request.
    Fam,
    /// Attributes plus spectral features carried by perturbation updates.
    Mpt,
}

impl FromStr for FeatureSource {
    type Err = VneError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(FeatureSource::Raw),
            "fam" => Ok(FeatureSource::Fam),
            "mpt" => Ok(FeatureSource::Mpt),
            other => Err(VneError::Config(format!("unknown feature source `{other}`"))),
        }
    }
}

impl FeatureSource {
    pub fn tag(self) -> &'static str {
        match self {
            FeatureSource::Raw => "raw",
            FeatureSource::Fam => "fam",
            FeatureSource::Mpt => "mpt",
        }
    }
}

/// Hyperparameters shared by the learning agents.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub hidden_size: usize,
    /// `None` picks the per-agent default, see [`AgentConfig::learning_rate_for`].
    pub learning_rate: Option<f64>,
    pub epochs: usize,
    /// Sampled refinement episodes per request at evaluation (pointer agent).
    pub active_search_iters: usize,
    /// Keep the parameters refined by active search across requests.
    pub online_active_search: bool,
    /// Failure penalty of the pointer agent; `None` means twice the
    /// substrate node count.
    pub fail_penalty: Option<f64>,
    pub cell: CellKind,
    pub spectral_k: usize,
    pub baseline_decay: f64,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden_size: 16,
            learning_rate: None,
            epochs: 60,
            active_search_iters: 16,
            online_active_search: false,
            fail_penalty: None,
            cell: CellKind::Gru,
            spectral_k: crate::spectral::DEFAULT_K,
            baseline_decay: 0.9,
            init_scale: 0.1,
        }
    }
}

impl AgentConfig {
    /// The configured step size, or 0.05 for the policy agent and 0.001
    /// for the pointer agent, whose hop rewards are an order of magnitude
    /// larger.
    pub fn learning_rate_for(&self, algorithm: Algorithm) -> f64 {
        self.learning_rate.unwrap_or(match algorithm {
            Algorithm::Pointer => 0.001,
            _ => 0.05,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedderConfig {
    pub algorithm: Algorithm,
    pub link: LinkStrategy,
    pub features: FeatureSource,
    pub agent: AgentConfig,
    pub seed: u64,
}

impl EmbedderConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        EmbedderConfig {
            algorithm,
            link: algorithm.default_link(),
            features: FeatureSource::Raw,
            agent: AgentConfig::default(),
            seed: 0,
        }
    }
}

/// An embedding algorithm driven by the simulator.
pub trait Embedder {
    fn name(&self) -> String;

    /// Proposes an embedding of `vnr` on the current residuals, or `None`
    /// when the request is rejected. Must not change `net`.
    fn embed(&mut self, net: &SubstrateNetwork, vnr: &VirtualNetworkRequest) -> Result<Option<Embedding>>;
}

/// Builds the embedder described by `cfg`. Learning agents need `params`
/// unless they are to run from their untrained initialization.
pub fn build_embedder(
    cfg: &EmbedderConfig,
    params: Option<crate::learn::ParamSet>,
) -> Result<Box<dyn Embedder>> {
    Ok(match cfg.algorithm {
        Algorithm::Baseline => Box::new(BaselineEmbedder { link: cfg.link }),
        Algorithm::NodeRank => Box::new(NodeRankEmbedder { link: cfg.link }),
        Algorithm::Policy => Box::new(PolicyAgent::new(cfg, params)?),
        Algorithm::Pointer => Box::new(PointerAgent::new(cfg, params)?),
    })
}

/// Routes every virtual link of `vnr` between the hosts in `node_map`,
/// reserving bandwidth provisionally so later links see earlier ones.
pub fn map_links(
    net: &SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    node_map: &[NodeId],
    strategy: LinkStrategy,
) -> Option<Vec<LinkMapping>> {
    let mut residual = net.bw_available();
    let mut out = Vec::with_capacity(vnr.links.len());
    for vl in &vnr.links {
        let (a, b) = vl.endpoints;
        let q = PathQuery::new(node_map[a], node_map[b], vl.bw_demand);
        let flows = match strategy {
            LinkStrategy::Shortest => shortest_feasible_path_in(net, &residual, &q).map(|path| {
                vec![PathFlow {
                    path,
                    bw: vl.bw_demand,
                }]
            }),
            LinkStrategy::Bfs => bfs_feasible_path_in(net, &residual, &q).map(|path| {
                vec![PathFlow {
                    path,
                    bw: vl.bw_demand,
                }]
            }),
            LinkStrategy::Split => split_flow_in(net, &residual, &q),
        }?;
        for flow in &flows {
            for w in flow.path.windows(2) {
                let link = net.link_between(w[0], w[1]).expect("routed over existing links");
                residual[link] -= flow.bw;
            }
        }
        out.push(LinkMapping {
            endpoints: (a, b),
            demand: vl.bw_demand,
            flows,
        });
    }
    Some(out)
}

/// Completes a node mapping into an embedding, or `None` when a link cannot
/// be routed.
pub fn complete_embedding(
    net: &SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    node_map: Vec<NodeId>,
    strategy: LinkStrategy,
) -> Option<Embedding> {
    let link_map = map_links(net, vnr, &node_map, strategy)?;
    Some(Embedding {
        vnr_id: vnr.id,
        node_map,
        node_demand: vnr.cpu_demand.clone(),
        link_map,
    })
}

/// Substrate nodes that can host `demand` and are not yet used.
pub fn candidate_mask(net: &SubstrateNetwork, demand: f64, used: &[bool]) -> Vec<bool> {
    net.nodes()
        .iter()
        .zip(used)
        .map(|(n, &u)| !u && n.cpu_available >= demand)
        .collect()
}

/// Samples an index from `probs`; zero-probability entries are never drawn.
pub(crate) fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// First index of the largest probability.
pub(crate) fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Per-candidate closeness to the hosts of already placed virtual
/// neighbours of `vnode`: mean of `1 / (1 + hops)`, zero when no neighbour
/// is placed yet. `hops` is the all-pairs hop table of the substrate.
pub(crate) fn proximity(
    hops: &[Vec<Option<usize>>],
    vnr_adjacency: &[Vec<usize>],
    vnode: usize,
    placement: &[Option<NodeId>],
) -> Vec<f64> {
    let n = hops.len();
    let hosts: Vec<NodeId> = vnr_adjacency[vnode]
        .iter()
        .filter_map(|&nb| placement[nb])
        .collect();
    if hosts.is_empty() {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            hosts
                .iter()
                .map(|&h| 1.0 / (1.0 + hops[h][i].unwrap_or(n) as f64))
                .sum::<f64>()
                / hosts.len() as f64
        })
        .collect()
}

pub(crate) fn hop_table(net: &SubstrateNetwork) -> Vec<Vec<Option<usize>>> {
    (0..net.node_count()).map(|u| net.hop_distances(u)).collect()
}
