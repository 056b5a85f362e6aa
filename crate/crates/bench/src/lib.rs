//! Shared fixtures for the benchmark targets.

use vne_core::embedders::{baseline_embed, LinkStrategy};
use vne_core::sim::{generate_requests, generate_substrate, simulate, ScenarioConfig};
use vne_core::{SubstrateNetwork, VirtualNetworkRequest};

pub fn scenario(nodes: usize, requests: usize) -> ScenarioConfig {
    ScenarioConfig {
        substrate_nodes: nodes,
        waxman_alpha: 0.5,
        request_count: requests,
        seed: 42,
        ..ScenarioConfig::default()
    }
}

pub fn instance(nodes: usize, requests: usize) -> (SubstrateNetwork, Vec<VirtualNetworkRequest>) {
    let sc = scenario(nodes, requests);
    (generate_substrate(&sc).unwrap(), generate_requests(&sc).unwrap())
}

/// Substrate states seen at successive arrivals of a baseline run.
pub fn snapshots(nodes: usize, requests: usize) -> Vec<SubstrateNetwork> {
    let (mut net, reqs) = instance(nodes, requests);
    let mut out = Vec::with_capacity(reqs.len());
    simulate(&mut net, &reqs, |n, vnr| {
        out.push(n.clone());
        Ok(baseline_embed(n, vnr, LinkStrategy::Shortest))
    })
    .unwrap();
    out
}
