use super::{Algorithm, EmbedderConfig, PointerAgent, PolicyAgent};
use crate::error::{Result, VneError};
use crate::learn::ParamSet;
use crate::net::{SubstrateNetwork, VirtualNetworkRequest};
use crate::sim::simulate;

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamSet,
    /// Mean episode reward of each epoch.
    pub curve: Vec<f64>,
}

/// Trains a learning agent. Every epoch replays all `requests` through the
/// event simulator on a fresh copy of `substrate`, sampling decisions and
/// applying one policy-gradient step per request.
pub fn train_agent(
    substrate: &SubstrateNetwork,
    requests: &[VirtualNetworkRequest],
    cfg: &EmbedderConfig,
    params: Option<ParamSet>,
) -> Result<TrainOutcome> {
    let mut fresh = substrate.clone();
    fresh.reset();
    let mut curve = Vec::with_capacity(cfg.agent.epochs);
    match cfg.algorithm {
        Algorithm::Policy => {
            let mut agent = PolicyAgent::new(cfg, params)?;
            agent.set_training(true);
            for epoch in 0..cfg.agent.epochs {
                let mut net = fresh.clone();
                agent.features_mut().reset();
                let mut total = 0.0;
                simulate(&mut net, requests, |n, vnr| {
                    let (trace, ep) = agent.episode(n, vnr)?;
                    total += trace.reward;
                    agent.learn(&ep, trace.reward).map_err(|e| at_epoch(e, epoch))?;
                    Ok(trace.embedding)
                })?;
                curve.push(epoch_mean(total, requests.len(), epoch)?);
                log::debug!("epoch {epoch}: mean reward {}", curve[epoch]);
            }
            Ok(TrainOutcome {
                params: agent.into_params(),
                curve,
            })
        }
        Algorithm::Pointer => {
            let mut agent = PointerAgent::new(cfg, params)?;
            agent.set_training(true);
            for epoch in 0..cfg.agent.epochs {
                let mut net = fresh.clone();
                let mut total = 0.0;
                simulate(&mut net, requests, |n, vnr| {
                    let (trace, ep) = agent.episode(n, vnr)?;
                    total += trace.reward;
                    agent.learn(&ep, trace.reward).map_err(|e| at_epoch(e, epoch))?;
                    Ok(trace.embedding)
                })?;
                curve.push(epoch_mean(total, requests.len(), epoch)?);
                log::debug!("epoch {epoch}: mean reward {}", curve[epoch]);
            }
            Ok(TrainOutcome {
                params: agent.into_params(),
                curve,
            })
        }
        other => Err(VneError::Config(format!("{} is not a learning agent", other.tag()))),
    }
}

fn at_epoch(e: VneError, epoch: usize) -> VneError {
    match e {
        VneError::Diverged { detail, .. } => VneError::Diverged { epoch, detail },
        other => other,
    }
}

fn epoch_mean(total: f64, count: usize, epoch: usize) -> Result<f64> {
    let mean = if count == 0 { 0.0 } else { total / count as f64 };
    if mean.is_finite() {
        Ok(mean)
    } else {
        Err(VneError::Diverged {
            epoch,
            detail: format!("mean reward {mean} over {count} episodes"),
        })
    }
}
