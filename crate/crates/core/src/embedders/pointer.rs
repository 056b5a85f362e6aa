//! Two-stage pointer-network agent.
//!
//! An encoder cell reads the substrate attribute rows in node-id order; a
//! decoder cell, started from the encoder's final state, reads one demand
//! vector per virtual node (descending CPU demand). At each decoder step
//! the attention logits `u_i = v . tanh(W1 enc_i + W2 dec + wl * prox_i)`
//! over unused feasible substrate nodes pick the host. Links are routed
//! afterwards and the episode reward is minus the total hop count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trace::{Decision, EpisodeTrace};
use super::{argmax, candidate_mask, complete_embedding, hop_table, proximity, sample_index};
use super::{AgentConfig, Algorithm, Embedder, EmbedderConfig, LinkStrategy, RAW_FEATURES};
use crate::error::{Result, VneError};
use crate::learn::{
    axpy, cell_param_specs, dot, log_softmax_grad, masked_softmax, reinforce_update, CellCache, CellKind,
    DenseMatrix, ParamSet, PolicyModel, RecurrentCell, RewardBaseline,
};
use crate::net::{Embedding, SubstrateNetwork, VirtualNetworkRequest};
use crate::spectral::build_attribute_matrix;

/// Size of a virtual-node demand vector: normalized CPU, normalized
/// adjacent bandwidth, normalized degree.
pub const DEMAND_FEATURES: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct PointerStep {
    pub demand: Vec<f64>,
    pub prox: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointerEpisode {
    /// Encoder inputs, one row per substrate node.
    pub nodes: DenseMatrix,
    pub steps: Vec<PointerStep>,
}

/// Architecture of the pointer network; parameters live in a [`ParamSet`].
#[derive(Clone, Copy, Debug)]
pub struct PointerNet {
    pub cell: CellKind,
    pub hidden: usize,
}

struct Bound {
    enc: RecurrentCell,
    dec: RecurrentCell,
    w1: usize,
    w2: usize,
    wl: usize,
    v: usize,
}

/// Forward values kept for backpropagation.
struct Encoded {
    enc_caches: Vec<CellCache>,
    enc_out: Vec<Vec<f64>>,
    /// `W1 enc_i` per node.
    keys: Vec<Vec<f64>>,
    final_state: Vec<f64>,
}

impl PointerNet {
    fn layout(&self) -> Vec<(String, usize, usize, bool)> {
        let h = self.hidden;
        let mut names = RecurrentCell::specs("enc", self.cell, RAW_FEATURES, h);
        names.extend(RecurrentCell::specs("dec", self.cell, DEMAND_FEATURES, h));
        names.push(("att.w1".into(), h, h, false));
        names.push(("att.w2".into(), h, h, false));
        names.push(("att.wl".into(), h, 1, false));
        names.push(("att.v".into(), 1, h, false));
        names
    }

    pub fn init_params(&self, scale: f64, seed: u64) -> ParamSet {
        let layout = self.layout();
        ParamSet::init(&cell_param_specs(&layout), scale, seed)
    }

    fn bind(&self, params: &ParamSet) -> Result<Bound> {
        let h = self.hidden;
        let layout = self.layout();
        if params.len() != layout.len()
            || layout
                .iter()
                .zip(params.iter())
                .any(|((name, r, c, _), (pn, m))| name != pn || m.shape() != (*r, *c))
        {
            return Err(VneError::Shape(format!(
                "pointer parameters do not match a {:?} network with hidden size {h}",
                self.cell
            )));
        }
        let idx = |name: &str| params.index_of(name).expect("layout checked");
        Ok(Bound {
            enc: RecurrentCell::bind(params, "enc", self.cell, RAW_FEATURES, h)?,
            dec: RecurrentCell::bind(params, "dec", self.cell, DEMAND_FEATURES, h)?,
            w1: idx("att.w1"),
            w2: idx("att.w2"),
            wl: idx("att.wl"),
            v: idx("att.v"),
        })
    }

    fn encode(&self, b: &Bound, params: &ParamSet, nodes: &DenseMatrix) -> Result<Encoded> {
        let mut state = b.enc.zero_state();
        let mut enc_caches = Vec::with_capacity(nodes.rows());
        let mut enc_out = Vec::with_capacity(nodes.rows());
        let mut keys = Vec::with_capacity(nodes.rows());
        for i in 0..nodes.rows() {
            let (next, cache) = b.enc.forward(params, nodes.row(i), &state)?;
            let out = b.enc.output(&next).to_vec();
            keys.push(params[b.w1].matvec(&out));
            enc_out.push(out);
            enc_caches.push(cache);
            state = next;
        }
        Ok(Encoded {
            enc_caches,
            enc_out,
            keys,
            final_state: state,
        })
    }

    /// Attention logits and the tanh activations behind them.
    fn attend(&self, b: &Bound, params: &ParamSet, enc: &Encoded, dec_out: &[f64], prox: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let q = params[b.w2].matvec(dec_out);
        let wl = params[b.wl].as_slice();
        let v = params[b.v].as_slice();
        let mut logits = Vec::with_capacity(enc.keys.len());
        let mut acts = Vec::with_capacity(enc.keys.len());
        for (i, key) in enc.keys.iter().enumerate() {
            let a: Vec<f64> = (0..self.hidden).map(|h| (key[h] + q[h] + wl[h] * prox[i]).tanh()).collect();
            logits.push(dot(v, &a));
            acts.push(a);
        }
        (logits, acts)
    }
}

impl PolicyModel for PointerNet {
    type Episode = PointerEpisode;

    fn chosen_probabilities(&self, episode: &PointerEpisode) -> Vec<f64> {
        episode.steps.iter().map(|s| s.prob).collect()
    }

    fn log_likelihood(&self, params: &ParamSet, episode: &PointerEpisode) -> Result<f64> {
        let b = self.bind(params)?;
        let enc = self.encode(&b, params, &episode.nodes)?;
        let mut state = enc.final_state.clone();
        let mut total = 0.0;
        for step in &episode.steps {
            state = b.dec.step(params, &step.demand, &state)?;
            let (logits, _) = self.attend(&b, params, &enc, b.dec.output(&state), &step.prox);
            total += masked_softmax(&logits, &step.mask)?[step.action].ln();
        }
        Ok(total)
    }

    fn log_likelihood_gradient(&self, params: &ParamSet, episode: &PointerEpisode) -> Result<ParamSet> {
        let b = self.bind(params)?;
        let h = self.hidden;
        let enc = self.encode(&b, params, &episode.nodes)?;
        let mut grads = params.zeros_like();
        // decoder forward with caches
        let mut state = enc.final_state.clone();
        let mut dec_caches = Vec::with_capacity(episode.steps.len());
        let mut dec_states = Vec::with_capacity(episode.steps.len());
        for step in &episode.steps {
            let (next, cache) = b.dec.forward(params, &step.demand, &state)?;
            dec_caches.push(cache);
            dec_states.push(next.clone());
            state = next;
        }
        let n = enc.keys.len();
        let mut d_enc_out = vec![vec![0.0; h]; n];
        let mut d_state = vec![0.0; b.dec.state_size()];
        let v = params[b.v].as_slice().to_vec();
        for (t, step) in episode.steps.iter().enumerate().rev() {
            let dec_out = b.dec.output(&dec_states[t]).to_vec();
            let (logits, acts) = self.attend(&b, params, &enc, &dec_out, &step.prox);
            let probs = masked_softmax(&logits, &step.mask)?;
            let g = log_softmax_grad(&probs, &step.mask, step.action);
            let mut dq = vec![0.0; h];
            for (i, &gi) in g.iter().enumerate() {
                if gi == 0.0 {
                    continue;
                }
                let a = &acts[i];
                axpy(grads[b.v].as_mut_slice(), gi, a);
                let da: Vec<f64> = (0..h).map(|k| gi * v[k] * (1.0 - a[k] * a[k])).collect();
                axpy(&mut dq, 1.0, &da);
                axpy(grads[b.wl].as_mut_slice(), step.prox[i], &da);
                grads[b.w1].add_outer(1.0, &da, &enc.enc_out[i]);
                let back = params[b.w1].t_matvec(&da);
                axpy(&mut d_enc_out[i], 1.0, &back);
            }
            grads[b.w2].add_outer(1.0, &dq, &dec_out);
            let d_dec_out = params[b.w2].t_matvec(&dq);
            axpy(&mut d_state[..h], 1.0, &d_dec_out);
            let (_, d_prev) = b.dec.backward(params, &dec_caches[t], &d_state, &mut grads);
            d_state = d_prev;
        }
        // the decoder started from the encoder's final state
        let mut d_enc_state = d_state;
        for i in (0..n).rev() {
            axpy(&mut d_enc_state[..h], 1.0, &d_enc_out[i]);
            let (_, d_prev) = b.enc.backward(params, &enc.enc_caches[i], &d_enc_state, &mut grads);
            d_enc_state = d_prev;
        }
        Ok(grads)
    }
}

/// Demand vector of virtual node `v`.
fn demand_vector(net: &SubstrateNetwork, vnr: &VirtualNetworkRequest, v: usize, adj_bw: &[f64], degree: usize) -> Vec<f64> {
    let max_cpu = net.nodes().iter().map(|s| s.cpu_capacity).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let max_bw = net.links().iter().map(|l| l.bw_capacity).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let span = (vnr.node_count().max(2) - 1) as f64;
    vec![vnr.cpu_demand[v] / max_cpu, adj_bw[v] / max_bw, degree as f64 / span]
}

/// Settings of one pointer episode.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeSettings {
    pub link: LinkStrategy,
    pub fail_penalty: f64,
    pub sample: bool,
}

/// Runs the pointer network once on `vnr`.
pub fn pointer_episode(
    model: &PointerNet,
    params: &ParamSet,
    net: &SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    settings: EpisodeSettings,
    rng: &mut ChaCha8Rng,
) -> Result<(EpisodeTrace, PointerEpisode)> {
    let b = model.bind(params)?;
    let nodes = build_attribute_matrix(net).0;
    let enc = model.encode(&b, params, &nodes)?;
    let n = net.node_count();
    let hops = hop_table(net);
    let vadj = vnr.adjacency();
    let adj_bw = vnr.adjacent_bw();
    let mut used = vec![false; n];
    let mut placement = vec![None; vnr.node_count()];
    let mut state = enc.final_state.clone();
    let mut episode = PointerEpisode {
        nodes,
        steps: Vec::new(),
    };
    let mut trace = EpisodeTrace {
        vnr_id: vnr.id,
        decisions: Vec::new(),
        embedding: None,
        failure: None,
        total_hops: 0,
        reward: -settings.fail_penalty,
    };
    for v in vnr.processing_order() {
        let demand = demand_vector(net, vnr, v, &adj_bw, vadj[v].len());
        state = b.dec.step(params, &demand, &state)?;
        let mask = candidate_mask(net, vnr.cpu_demand[v], &used);
        if !mask.iter().any(|&m| m) {
            trace.failure = Some(format!("no substrate node can host virtual node {v}"));
            return Ok((trace, episode));
        }
        let prox = proximity(&hops, &vadj, v, &placement);
        let (logits, _) = model.attend(&b, params, &enc, b.dec.output(&state), &prox);
        let probs = masked_softmax(&logits, &mask)?;
        let action = if settings.sample {
            sample_index(rng, &probs)
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
        episode.steps.push(PointerStep {
            demand,
            prox,
            mask,
            action,
            prob: probs[action],
        });
    }
    let node_map: Vec<usize> = placement.iter().map(|p| p.expect("all placed")).collect();
    match complete_embedding(net, vnr, node_map, settings.link) {
        Some(emb) => {
            trace.total_hops = emb.total_hops();
            trace.reward = -(trace.total_hops as f64);
            trace.embedding = Some(emb);
        }
        None => trace.failure = Some("link mapping failed".into()),
    }
    Ok((trace, episode))
}

/// Result of refining the parameters on a single request.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub embedding: Option<Embedding>,
    pub best_reward: f64,
    /// Best reward after each sampled episode (running maximum, starting
    /// from the greedy episode).
    pub history: Vec<f64>,
    pub params: ParamSet,
}

/// Active search: starting from a greedy episode, runs `iterations`
/// sampled episodes on `vnr` with a policy-gradient step after each, on a
/// copy of `params`, and keeps the best feasible embedding seen.
pub fn active_search(
    model: &PointerNet,
    params: &ParamSet,
    net: &SubstrateNetwork,
    vnr: &VirtualNetworkRequest,
    iterations: usize,
    learning_rate: f64,
    settings: EpisodeSettings,
    rng: &mut ChaCha8Rng,
) -> Result<SearchOutcome> {
    let mut local = params.clone();
    let greedy = EpisodeSettings {
        sample: false,
        ..settings
    };
    let (first, _) = pointer_episode(model, &local, net, vnr, greedy, rng)?;
    let mut best_reward = first.reward;
    let mut embedding = first.embedding;
    let mut baseline = RewardBaseline::default();
    baseline.update(first.reward);
    let mut history = Vec::with_capacity(iterations + 1);
    history.push(best_reward);
    let sampled = EpisodeSettings {
        sample: true,
        ..settings
    };
    for _ in 0..iterations {
        let (trace, ep) = pointer_episode(model, &local, net, vnr, sampled, rng)?;
        if trace.embedding.is_some() && (embedding.is_none() || trace.reward > best_reward) {
            best_reward = trace.reward;
            embedding = trace.embedding.clone();
        }
        let b = baseline.value_or(trace.reward);
        reinforce_update(model, &mut local, &ep, trace.reward, b, learning_rate)?;
        baseline.update(trace.reward);
        history.push(best_reward);
    }
    Ok(SearchOutcome {
        embedding,
        best_reward,
        history,
        params: local,
    })
}

#[derive(Clone, Debug)]
pub struct PointerAgent {
    model: PointerNet,
    params: ParamSet,
    link: LinkStrategy,
    cfg: AgentConfig,
    rng: ChaCha8Rng,
    baseline: RewardBaseline,
    training: bool,
}

impl PointerAgent {
    pub fn new(cfg: &EmbedderConfig, params: Option<ParamSet>) -> Result<Self> {
        let model = PointerNet {
            cell: cfg.agent.cell,
            hidden: cfg.agent.hidden_size,
        };
        let params = match params {
            Some(p) => p,
            None => model.init_params(cfg.agent.init_scale, cfg.seed),
        };
        model.bind(&params)?;
        Ok(PointerAgent {
            model,
            params,
            link: cfg.link,
            cfg: cfg.agent.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51ed_270b_2a4c_1f3d),
            baseline: RewardBaseline::new(cfg.agent.baseline_decay),
            training: false,
        })
    }

    pub fn model(&self) -> PointerNet {
        self.model
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    fn settings(&self, net: &SubstrateNetwork, sample: bool) -> EpisodeSettings {
        EpisodeSettings {
            link: self.link,
            fail_penalty: self.cfg.fail_penalty.unwrap_or(2.0 * net.node_count() as f64),
            sample,
        }
    }

    /// One episode with the persistent parameters; sampled in training
    /// mode, greedy otherwise.
    pub fn episode(
        &mut self,
        net: &SubstrateNetwork,
        vnr: &VirtualNetworkRequest,
    ) -> Result<(EpisodeTrace, PointerEpisode)> {
        let settings = self.settings(net, self.training);
        pointer_episode(&self.model, &self.params, net, vnr, settings, &mut self.rng)
    }

    pub fn learn(&mut self, episode: &PointerEpisode, reward: f64) -> Result<()> {
        let b = self.baseline.value_or(reward);
        reinforce_update(&self.model, &mut self.params, episode, reward, b, self.cfg.learning_rate_for(Algorithm::Pointer))?;
        self.baseline.update(reward);
        Ok(())
    }

    /// Active search with the configured iteration count.
    pub fn search(&mut self, net: &SubstrateNetwork, vnr: &VirtualNetworkRequest) -> Result<SearchOutcome> {
        let settings = self.settings(net, true);
        let out = active_search(
            &self.model,
            &self.params,
            net,
            vnr,
            self.cfg.active_search_iters,
            self.cfg.learning_rate_for(Algorithm::Pointer),
            settings,
            &mut self.rng,
        )?;
        if self.cfg.online_active_search {
            self.params = out.params.clone();
        }
        Ok(out)
    }
}

impl Embedder for PointerAgent {
    fn name(&self) -> String {
        "pointer".into()
    }

    fn embed(&mut self, net: &SubstrateNetwork, vnr: &VirtualNetworkRequest) -> Result<Option<Embedding>> {
        if self.training {
            return Ok(self.episode(net, vnr)?.0.embedding);
        }
        Ok(self.search(net, vnr)?.embedding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedders::Algorithm;
    use crate::learn::{finite_difference_gradient, relative_error};
    use crate::net::VirtualLink;

    fn grid() -> SubstrateNetwork {
        // 3x3 grid
        let mut links = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                let u = r * 3 + c;
                if c < 2 {
                    links.push((u, u + 1, 70.0 + u as f64));
                }
                if r < 2 {
                    links.push((u, u + 3, 60.0 + 2.0 * u as f64));
                }
            }
        }
        let cpu: Vec<f64> = (0..9).map(|i| 50.0 + 5.0 * i as f64).collect();
        SubstrateNetwork::new(&cpu, &links).unwrap()
    }

    fn request() -> VirtualNetworkRequest {
        VirtualNetworkRequest::new(
            3,
            0.0,
            10.0,
            vec![10.0, 20.0, 5.0, 12.0],
            vec![
                VirtualLink { endpoints: (0, 1), bw_demand: 5.0 },
                VirtualLink { endpoints: (1, 2), bw_demand: 8.0 },
                VirtualLink { endpoints: (2, 3), bw_demand: 3.0 },
            ],
        )
        .unwrap()
    }

    fn agent(cell: CellKind, seed: u64, iters: usize) -> PointerAgent {
        let mut cfg = EmbedderConfig::new(Algorithm::Pointer);
        cfg.seed = seed;
        cfg.agent.cell = cell;
        cfg.agent.hidden_size = 5;
        cfg.agent.init_scale = 0.6;
        cfg.agent.active_search_iters = iters;
        PointerAgent::new(&cfg, None).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for cell in [CellKind::Gru, CellKind::Lstm] {
            let mut a = agent(cell, 4, 0);
            a.set_training(true);
            let (_, ep) = a.episode(&grid(), &request()).unwrap();
            let model = a.model();
            let analytic = model.log_likelihood_gradient(a.params(), &ep).unwrap();
            let numeric =
                finite_difference_gradient(a.params(), 1e-6, |p| model.log_likelihood(p, &ep).unwrap());
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-6, "{cell:?}: {err}");
        }
    }

    #[test]
    fn single_hop_reward_counts_links() {
        let mut a = agent(CellKind::Gru, 1, 0);
        let complete = SubstrateNetwork::new(
            &[100.0; 5],
            &[
                (0, 1, 100.0),
                (0, 2, 100.0),
                (0, 3, 100.0),
                (0, 4, 100.0),
                (1, 2, 100.0),
                (1, 3, 100.0),
                (1, 4, 100.0),
                (2, 3, 100.0),
                (2, 4, 100.0),
                (3, 4, 100.0),
            ],
        )
        .unwrap();
        let (trace, _) = a.episode(&complete, &request()).unwrap();
        assert_eq!(trace.reward, -3.0);
    }

    #[test]
    fn failure_reward_is_the_penalty() {
        let mut a = agent(CellKind::Gru, 1, 0);
        let tiny = SubstrateNetwork::new(&[8.0; 9], &[(0, 1, 10.0)]).unwrap();
        let (trace, _) = a.episode(&tiny, &request()).unwrap();
        assert!(trace.embedding.is_none());
        assert_eq!(trace.reward, -18.0);
    }

    #[test]
    fn masked_nodes_get_zero_probability() {
        let mut a = agent(CellKind::Lstm, 2, 0);
        a.set_training(true);
        let (trace, _) = a.episode(&grid(), &request()).unwrap();
        for d in &trace.decisions {
            for (p, m) in d.probabilities.iter().zip(&d.mask) {
                if !m {
                    assert_eq!(*p, 0.0);
                }
            }
            assert!(d.mask[d.chosen]);
        }
    }

    #[test]
    fn zero_iterations_is_greedy() {
        let mut a = agent(CellKind::Gru, 9, 0);
        let greedy = a.episode(&grid(), &request()).unwrap().0.embedding;
        assert_eq!(a.embed(&grid(), &request()).unwrap(), greedy);
    }

    #[test]
    fn search_history_never_decreases() {
        let mut a = agent(CellKind::Gru, 9, 12);
        let out = a.search(&grid(), &request()).unwrap();
        assert_eq!(out.history.len(), 13);
        assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
    }
}
