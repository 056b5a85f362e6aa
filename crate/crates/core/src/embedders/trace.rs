use std::fmt::Write as _;

use crate::net::{Embedding, NodeId};

/// One node-placement decision of an agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub virtual_node: usize,
    pub mask: Vec<bool>,
    pub chosen: NodeId,
    pub probabilities: Vec<f64>,
}

/// Record of one agent episode on one request.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeTrace {
    pub vnr_id: u64,
    pub decisions: Vec<Decision>,
    pub embedding: Option<Embedding>,
    /// Why the episode failed, if it did.
    pub failure: Option<String>,
    pub total_hops: usize,
    pub reward: f64,
}

impl EpisodeTrace {
    pub fn succeeded(&self) -> bool {
        self.embedding.is_some()
    }

    /// Line-oriented dump for debugging.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "EPISODE vnr={} reward={} hops={}", self.vnr_id, self.reward, self.total_hops);
        for d in &self.decisions {
            let probs: Vec<String> = d
                .probabilities
                .iter()
                .zip(&d.mask)
                .enumerate()
                .filter(|(_, (_, &m))| m)
                .map(|(i, (p, _))| format!("{i}:{p:.4}"))
                .collect();
            let _ = writeln!(s, "  vnode {} -> {} [{}]", d.virtual_node, d.chosen, probs.join(" "));
        }
        match (&self.embedding, &self.failure) {
            (Some(e), _) => {
                let _ = writeln!(s, "  mapped {:?}", e.node_map);
            }
            (None, Some(reason)) => {
                let _ = writeln!(s, "  failed: {reason}");
            }
            (None, None) => {
                let _ = writeln!(s, "  failed");
            }
        }
        s
    }
}
