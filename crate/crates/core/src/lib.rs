//! Virtual network embedding laboratory.
//!
//! * [`net`]: substrate and request model with transactional allocation.
//! * [`routing`]: bandwidth-constrained min-hop and splittable routing.
//! * [`metrics`]: revenue, cost and long-run ratios.
//! * [`spectral`]: fused attribute matrices, eigen-features and their
//!   incremental perturbation updates.
//! * [`learn`]: the small differentiable kernel behind the agents.
//! * [`embedders`]: heuristic and learning embedding algorithms.
//! * [`sim`]: scenario generation, the event-driven simulator and
//!   experiment plumbing.

pub mod embedders;
pub mod error;
pub mod learn;
pub mod metrics;
pub mod net;
pub mod routing;
pub mod sim;
pub mod spectral;

pub use error::{Result, VneError};
pub use net::{Embedding, NodeId, SubstrateNetwork, VirtualNetworkRequest};
