use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use super::ScenarioConfig;
use crate::error::{Result, VneError};
use crate::net::{SubstrateNetwork, VirtualLink, VirtualNetworkRequest};

const SUBSTRATE_RETRIES: usize = 100;
const REQUEST_RETRIES: usize = 10_000;
/// Separates the request stream from the substrate stream of one seed.
const REQUEST_STREAM: u64 = 0x7265_7175_6573_7473;

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Waxman graph on uniform positions in the unit square: nodes `u`, `v`
/// are linked with probability `beta * exp(-d(u, v) / (alpha * L))`, `L`
/// the largest pairwise distance. Redrawn until connected.
pub fn generate_substrate(cfg: &ScenarioConfig) -> Result<SubstrateNetwork> {
    cfg.validate()?;
    let n = cfg.substrate_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..SUBSTRATE_RETRIES {
        let positions: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let dist = |a: usize, b: usize| {
            let (dx, dy) = (positions[a].0 - positions[b].0, positions[a].1 - positions[b].1);
            (dx * dx + dy * dy).sqrt()
        };
        let mut pairs = Vec::new();
        if n == 2 {
            pairs.push((0, 1));
        } else {
            let mut max_d = 0.0_f64;
            for u in 0..n {
                for v in u + 1..n {
                    max_d = max_d.max(dist(u, v));
                }
            }
            let scale = cfg.waxman_alpha * max_d.max(f64::MIN_POSITIVE);
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random::<f64>() < cfg.waxman_beta * (-dist(u, v) / scale).exp() {
                        pairs.push((u, v));
                    }
                }
            }
        }
        let cpu: Vec<f64> = (0..n).map(|_| uniform(&mut rng, cfg.cpu_capacity)).collect();
        let links: Vec<_> = pairs
            .iter()
            .map(|&(u, v)| (u, v, uniform(&mut rng, cfg.bw_capacity)))
            .collect();
        let net = SubstrateNetwork::new(&cpu, &links)?.with_positions(&positions)?;
        if net.is_connected() {
            return Ok(net);
        }
    }
    Err(VneError::Generation(format!(
        "no connected Waxman graph with {n} nodes after {SUBSTRATE_RETRIES} draws"
    )))
}

fn random_request(
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
    id: u64,
    arrival: f64,
    lifetime: f64,
) -> Result<VirtualNetworkRequest> {
    let nodes = rng.random_range(cfg.vnr_nodes.0..=cfg.vnr_nodes.1);
    for _ in 0..REQUEST_RETRIES {
        let mut links = Vec::new();
        for a in 0..nodes {
            for b in a + 1..nodes {
                if rng.random::<f64>() < cfg.vnr_link_prob {
                    links.push((a, b));
                }
            }
        }
        let probe = VirtualNetworkRequest {
            id,
            arrival_time: arrival,
            lifetime,
            cpu_demand: vec![1.0; nodes],
            links: links
                .iter()
                .map(|&endpoints| VirtualLink {
                    endpoints,
                    bw_demand: 1.0,
                })
                .collect(),
        };
        if !probe.is_connected() {
            continue;
        }
        let cpu = (0..nodes).map(|_| uniform(rng, cfg.cpu_demand)).collect();
        let vlinks = links
            .into_iter()
            .map(|endpoints| VirtualLink {
                endpoints,
                bw_demand: uniform(rng, cfg.bw_demand),
            })
            .collect();
        return VirtualNetworkRequest::new(id, arrival, lifetime, cpu, vlinks);
    }
    Err(VneError::Generation(format!(
        "no connected request graph with {nodes} nodes after {REQUEST_RETRIES} draws"
    )))
}

/// Poisson arrivals at `arrival_rate`, exponential lifetimes, connected
/// Erdos-Renyi request graphs. Ids count up from 0 in arrival order.
pub fn generate_requests(cfg: &ScenarioConfig) -> Result<Vec<VirtualNetworkRequest>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ REQUEST_STREAM);
    let gap = Exp::new(cfg.arrival_rate).map_err(|e| VneError::Config(e.to_string()))?;
    let life = Exp::new(1.0 / cfg.mean_lifetime).map_err(|e| VneError::Config(e.to_string()))?;
    let mut out = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        let id = out.len() as u64;
        if cfg.horizon > 0.0 {
            if t > cfg.horizon {
                break;
            }
        } else if out.len() >= cfg.request_count {
            break;
        }
        let lifetime = life.sample(&mut rng);
        out.push(random_request(cfg, &mut rng, id, t, lifetime)?);
    }
    Ok(out)
}
