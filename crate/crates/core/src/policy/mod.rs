//! Two-hidden-layer tanh actor-critic with hand-written backpropagation,
//! the clipped-surrogate on-policy update and the behavior-cloning update.

mod bc;
mod network;
mod optim;
mod ppo;

pub use bc::{bc_loss, bc_loss_and_grad, bc_update, BcBatch, BcStats};
pub use network::{
    features, Dims, ForwardCache, PolicyParams, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use optim::{clip_grad_norm, Adam};
pub use ppo::{
    gae_advantages, ppo_loss, ppo_loss_and_grad, ppo_update, PpoBatch, PpoConfig, PpoStats,
};

use crate::error::Result;
use crate::gridworld::Observation;

/// Numerically stable `log softmax`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// What the replay machinery needs to ask of an agent.
pub trait ActorCritic {
    /// `ln pi(action | obs)` under the current policy.
    fn action_log_prob(&self, obs: &Observation, action: usize) -> Result<f64>;
    /// State value `V(obs)`.
    fn value(&self, obs: &Observation) -> Result<f64>;
}

impl ActorCritic for PolicyParams {
    fn action_log_prob(&self, obs: &Observation, action: usize) -> Result<f64> {
        let (logits, _) = self.forward_obs(obs)?;
        Ok(log_softmax(&logits)[action])
    }

    fn value(&self, obs: &Observation) -> Result<f64> {
        Ok(self.forward_obs(obs)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, -3.0, 0.5, 2.0]);
        let s: f64 = p.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|x| x.is_finite()));
        let lp = log_softmax(&[0.0; 7]);
        assert!((lp[3] + 7f64.ln()).abs() < 1e-15);
    }
}
