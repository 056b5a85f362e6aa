//! Single-stage policy-gradient agent: a two-layer scorer rates every
//! substrate node for the current virtual node and a masked softmax turns
//! the scores into a placement distribution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::FeatureProvider;
use super::trace::{Decision, EpisodeTrace};
use super::{argmax, candidate_mask, complete_embedding, hop_table, proximity, sample_index};
use super::{AgentConfig, Algorithm, Embedder, EmbedderConfig, LinkStrategy};
use crate::error::{Result, VneError};
use crate::learn::{
    log_softmax_grad, masked_softmax, reinforce_update, DenseMatrix, ParamSet, ParamSpec, PolicyModel,
    RewardBaseline,
};
use crate::metrics;
use crate::net::{Embedding, SubstrateNetwork, VirtualNetworkRequest};

/// Inputs and choice of one placement step.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyStep {
    /// One input row per substrate node.
    pub inputs: DenseMatrix,
    pub mask: Vec<bool>,
    pub action: usize,
    pub prob: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyEpisode {
    pub steps: Vec<PolicyStep>,
}

/// The scorer `w2 . tanh(W1 x + b1) + b2`, stateless apart from its shape.
#[derive(Clone, Copy, Debug)]
pub struct PolicyNet {
    pub input: usize,
    pub hidden: usize,
}

impl PolicyNet {
    pub fn specs(&self) -> Vec<ParamSpec<'static>> {
        vec![
            ParamSpec::weight("pol.w1", self.hidden, self.input),
            ParamSpec::bias("pol.b1", self.hidden),
            ParamSpec::weight("pol.w2", 1, self.hidden),
            ParamSpec::bias("pol.b2", 1),
        ]
    }

    fn check(&self, params: &ParamSet) -> Result<()> {
        let ok = params.len() == 4
            && self
                .specs()
                .iter()
                .enumerate()
                .all(|(i, s)| params.names()[i] == s.name && params[i].shape() == (s.rows, s.cols));
        if ok {
            Ok(())
        } else {
            Err(VneError::Shape(format!(
                "policy parameters do not match input {} / hidden {}",
                self.input, self.hidden
            )))
        }
    }

    /// Scores and hidden activations for every input row.
    fn forward(&self, params: &ParamSet, inputs: &DenseMatrix) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (w1, b1, w2, b2) = (&params[0], params[1].as_slice(), params[2].as_slice(), params[3][(0, 0)]);
        let mut scores = Vec::with_capacity(inputs.rows());
        let mut acts = Vec::with_capacity(inputs.rows());
        for i in 0..inputs.rows() {
            let mut a = w1.matvec(inputs.row(i));
            for (x, b) in a.iter_mut().zip(b1) {
                *x = (*x + b).tanh();
            }
            scores.push(crate::learn::dot(w2, &a) + b2);
            acts.push(a);
        }
        (scores, acts)
    }

    pub fn scores(&self, params: &ParamSet, inputs: &DenseMatrix) -> Vec<f64> {
        self.forward(params, inputs).0
    }
}

impl PolicyModel for PolicyNet {
    type Episode = PolicyEpisode;

    fn chosen_probabilities(&self, episode: &PolicyEpisode) -> Vec<f64> {
        episode.steps.iter().map(|s| s.prob).collect()
    }

    fn log_likelihood(&self, params: &ParamSet, episode: &PolicyEpisode) -> Result<f64> {
        let mut total = 0.0;
        for step in &episode.steps {
            let probs = masked_softmax(&self.scores(params, &step.inputs), &step.mask)?;
            total += probs[step.action].ln();
        }
        Ok(total)
    }

    fn log_likelihood_gradient(&self, params: &ParamSet, episode: &PolicyEpisode) -> Result<ParamSet> {
        self.check(params)?;
        let mut grads = params.zeros_like();
        let w2 = params[2].as_slice().to_vec();
        for step in &episode.steps {
            let (scores, acts) = self.forward(params, &step.inputs);
            let probs = masked_softmax(&scores, &step.mask)?;
            let g = log_softmax_grad(&probs, &step.mask, step.action);
            for (i, &gi) in g.iter().enumerate() {
                if gi == 0.0 {
                    continue;
                }
                let a = &acts[i];
                crate::learn::axpy(grads[2].as_mut_slice(), gi, a);
                grads[3].as_mut_slice()[0] += gi;
                let da: Vec<f64> = (0..self.hidden).map(|h| gi * w2[h] * (1.0 - a[h] * a[h])).collect();
                grads[0].add_outer(1.0, &da, step.inputs.row(i));
                crate::learn::axpy(grads[1].as_mut_slice(), 1.0, &da);
            }
        }
        Ok(grads)
    }
}

/// Policy agent over raw, FAM or MPT substrate features.
#[derive(Clone, Debug)]
pub struct PolicyAgent {
    net: PolicyNet,
    params: ParamSet,
    features: FeatureProvider,
    link: LinkStrategy,
    cfg: AgentConfig,
    rng: ChaCha8Rng,
    baseline: RewardBaseline,
    training: bool,
}

impl PolicyAgent {
    pub fn new(cfg: &EmbedderConfig, params: Option<ParamSet>) -> Result<Self> {
        let features = FeatureProvider::new(cfg.features, cfg.agent.spectral_k);
        // node features, normalized demand, proximity to placed neighbours
        let net = PolicyNet {
            input: features.dim() + 2,
            hidden: cfg.agent.hidden_size,
        };
        let params = match params {
            Some(p) => p,
            None => ParamSet::init(&net.specs(), cfg.agent.init_scale, cfg.seed),
        };
        net.check(&params)?;
        Ok(PolicyAgent {
            net,
            params,
            features,
            link: cfg.link,
            cfg: cfg.agent.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
            baseline: RewardBaseline::new(cfg.agent.baseline_decay),
            training: false,
        })
    }

    pub fn model(&self) -> PolicyNet {
        self.net
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn features_mut(&mut self) -> &mut FeatureProvider {
        &mut self.features
    }

    /// Sampling (training) or argmax (evaluation) decisions.
    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    /// Runs one episode on `vnr`. The reward is `R/C` on success and `-1`
    /// on failure.
    pub fn episode(
        &mut self,
        net: &SubstrateNetwork,
        vnr: &VirtualNetworkRequest,
    ) -> Result<(EpisodeTrace, PolicyEpisode)> {
        let feats = self.features.features(net)?;
        let n = net.node_count();
        let max_cpu = net
            .nodes()
            .iter()
            .map(|s| s.cpu_capacity)
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let hops = hop_table(net);
        let vadj = vnr.adjacency();
        let mut used = vec![false; n];
        let mut placement = vec![None; vnr.node_count()];
        let mut episode = PolicyEpisode::default();
        let mut trace = EpisodeTrace {
            vnr_id: vnr.id,
            decisions: Vec::new(),
            embedding: None,
            failure: None,
            total_hops: 0,
            reward: -1.0,
        };
        for v in vnr.processing_order() {
            let demand = vnr.cpu_demand[v];
            let mask = candidate_mask(net, demand, &used);
            if !mask.iter().any(|&m| m) {
                trace.failure = Some(format!("no substrate node can host virtual node {v}"));
                return Ok((trace, episode));
            }
            let prox = proximity(&hops, &vadj, v, &placement);
            let mut inputs = DenseMatrix::zeros(n, self.net.input);
            for i in 0..n {
                let row = inputs.row_mut(i);
                row[..feats.cols()].copy_from_slice(feats.row(i));
                row[feats.cols()] = demand / max_cpu;
                row[feats.cols() + 1] = prox[i];
            }
            let probs = masked_softmax(&self.net.scores(&self.params, &inputs), &mask)?;
            let action = if self.training {
                sample_index(&mut self.rng, &probs)
            } else {
                argmax(&probs)
            };
            used[action] = true;
            placement[v] = Some(action);
            trace.decisions.push(Decision {
                virtual_node: v,
                mask: mask.clone(),
                chosen: action,
                probabilities: probs.clone(),
            });
            episode.steps.push(PolicyStep {
                inputs,
                mask,
                action,
                prob: probs[action],
            });
        }
        let node_map: Vec<usize> = placement.iter().map(|p| p.expect("all placed")).collect();
        match complete_embedding(net, vnr, node_map, self.link) {
            Some(emb) => {
                trace.total_hops = emb.total_hops();
                trace.reward = metrics::revenue(vnr) / metrics::cost(vnr, &emb)?;
                trace.embedding = Some(emb);
            }
            None => trace.failure = Some("link mapping failed".into()),
        }
        Ok((trace, episode))
    }

    /// Policy-gradient step on a finished episode against the running
    /// reward baseline.
    pub fn learn(&mut self, episode: &PolicyEpisode, reward: f64) -> Result<()> {
        let b = self.baseline.value_or(reward);
        reinforce_update(&self.net, &mut self.params, episode, reward, b, self.cfg.learning_rate_for(Algorithm::Policy))?;
        self.baseline.update(reward);
        Ok(())
    }
}

impl Embedder for PolicyAgent {
    fn name(&self) -> String {
        format!("rl-{}", self.features.source().tag())
    }

    fn embed(&mut self, net: &SubstrateNetwork, vnr: &VirtualNetworkRequest) -> Result<Option<Embedding>> {
        Ok(self.episode(net, vnr)?.0.embedding)
    }
}
