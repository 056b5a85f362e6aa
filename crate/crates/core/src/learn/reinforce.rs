use super::params::ParamSet;
use crate::error::{Result, VneError};

/// A stochastic policy whose episodes can be re-scored under any parameter
/// values with the same layout.
pub trait PolicyModel {
    type Episode;

    /// Probability the policy assigned to each chosen action, in order.
    fn chosen_probabilities(&self, episode: &Self::Episode) -> Vec<f64>;

    /// `sum_t log pi(a_t | s_t)` with the episode's actions held fixed.
    fn log_likelihood(&self, params: &ParamSet, episode: &Self::Episode) -> Result<f64>;

    /// Gradient of [`PolicyModel::log_likelihood`] w.r.t. every parameter.
    fn log_likelihood_gradient(&self, params: &ParamSet, episode: &Self::Episode) -> Result<ParamSet>;
}

/// Exponential moving average of observed rewards.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardBaseline {
    value: Option<f64>,
    decay: f64,
}

impl RewardBaseline {
    pub fn new(decay: f64) -> Self {
        RewardBaseline { value: None, decay }
    }

    /// Current estimate; before any reward is seen, `reward` itself so the
    /// first advantage is zero.
    pub fn value_or(&self, reward: f64) -> f64 {
        self.value.unwrap_or(reward)
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn update(&mut self, reward: f64) {
        self.value = Some(match self.value {
            None => reward,
            Some(v) => self.decay * v + (1.0 - self.decay) * reward,
        });
    }
}

impl Default for RewardBaseline {
    fn default() -> Self {
        Self::new(0.9)
    }
}

/// REINFORCE step: `params += lr * (reward - baseline) * grad sum log pi`.
/// Reward is maximized.
pub fn reinforce_update<M: PolicyModel>(
    model: &M,
    params: &mut ParamSet,
    episode: &M::Episode,
    reward: f64,
    baseline: f64,
    learning_rate: f64,
) -> Result<()> {
    for (step, p) in model.chosen_probabilities(episode).into_iter().enumerate() {
        if !(p > 0.0) {
            return Err(VneError::ZeroProbabilityAction { step, action: step });
        }
    }
    let advantage = reward - baseline;
    if advantage == 0.0 || learning_rate == 0.0 {
        return Ok(());
    }
    let grad = model.log_likelihood_gradient(params, episode)?;
    params.add_scaled(learning_rate * advantage, &grad);
    if !params.is_finite() {
        return Err(VneError::Diverged {
            epoch: 0,
            detail: "non-finite parameter after policy-gradient step".into(),
        });
    }
    Ok(())
}

/// Central finite-difference gradient of `f` at `params`.
pub fn finite_difference_gradient(params: &ParamSet, h: f64, f: impl Fn(&ParamSet) -> f64) -> ParamSet {
    let mut grad = params.zeros_like();
    let mut probe = params.clone();
    for k in 0..params.scalar_count() {
        let orig = *probe.scalar_mut(k);
        *probe.scalar_mut(k) = orig + h;
        let plus = f(&probe);
        *probe.scalar_mut(k) = orig - h;
        let minus = f(&probe);
        *probe.scalar_mut(k) = orig;
        *grad.scalar_mut(k) = (plus - minus) / (2.0 * h);
    }
    grad
}

/// `||a - b|| / max(||a||, ||b||)` over all scalars (0 when both vanish).
pub fn relative_error(a: &ParamSet, b: &ParamSet) -> f64 {
    let (fa, fb) = (a.flat(), b.flat());
    let diff: f64 = fa.iter().zip(&fb).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = super::norm(&fa).max(super::norm(&fb));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
