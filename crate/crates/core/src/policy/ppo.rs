use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::log_softmax;
use super::network::PolicyParams;
use super::optim::{clip_grad_norm, Adam};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_eps: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            lr: 7e-4,
            epochs: 4,
            minibatch_size: 256,
            gamma: 0.99,
            gae_lambda: 0.95,
            max_grad_norm: 0.5,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("ppo: {m}")));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must be in (0, 1)");
        }
        if !(self.value_coef >= 0.0 && self.entropy_coef >= 0.0) {
            return bad("coefficients must be nonnegative");
        }
        if !(self.gamma > 0.0
            && self.gamma <= 1.0
            && self.gae_lambda > 0.0
            && self.gae_lambda <= 1.0)
        {
            return bad("gamma and gae_lambda must be in (0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("lr, epochs and minibatch_size must be positive");
        }
        Ok(())
    }
}

/// Flattened on-policy samples; `inputs` is `len x input_dim` row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PpoBatch {
    pub input_dim: usize,
    pub inputs: Vec<f64>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    fn select(&self, idx: &[usize]) -> PpoBatch {
        let mut b = PpoBatch {
            input_dim: self.input_dim,
            ..PpoBatch::default()
        };
        for &i in idx {
            b.inputs.extend_from_slice(self.input(i));
            b.actions.push(self.actions[i]);
            b.old_log_probs.push(self.old_log_probs[i]);
            b.advantages.push(self.advantages[i]);
            b.returns.push(self.returns[i]);
        }
        b
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
}

/// Generalized advantage estimation. `dones[t]` marks that the episode ended
/// at step `t`; `last_value` bootstraps a rollout cut mid-episode.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 == n {
            last_value
        } else {
            values[t + 1]
        };
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * mask - values[t];
        gae = delta + gamma * lambda * mask * gae;
        adv[t] = gae;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

struct Terms {
    policy: f64,
    value: f64,
    entropy: f64,
    ratio: f64,
    clipped: f64,
    kl: f64,
}

/// Per-sample loss pieces and, when requested, the logit/value partials of
/// the batch-mean loss.
#[allow(clippy::too_many_arguments)]
fn sample_terms(
    logits: &[f64],
    value: f64,
    action: usize,
    old_log_prob: f64,
    advantage: f64,
    ret: f64,
    cfg: &PpoConfig,
    scale: f64,
    partials: Option<(&mut [f64], &mut f64)>,
) -> Terms {
    let logp = log_softmax(logits);
    let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    let entropy = -probs.iter().zip(&logp).map(|(p, l)| p * l).sum::<f64>();
    let ratio = (logp[action] - old_log_prob).exp();
    let clipped_ratio = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let unclipped = ratio * advantage;
    let clipped = clipped_ratio * advantage;
    // min(rA, clip(r)A) follows the unclipped branch unless that is larger.
    let active = unclipped <= clipped;
    let surrogate = if active { unclipped } else { clipped };
    let err = value - ret;

    if let Some((d_logits, d_value)) = partials {
        let g_ratio = if active {
            -advantage * ratio * scale
        } else {
            0.0
        };
        for k in 0..logits.len() {
            let onehot = if k == action { 1.0 } else { 0.0 };
            let mut g = g_ratio * (onehot - probs[k]);
            // d(-c_e H)/dz_k = c_e p_k (ln p_k + H)
            g += cfg.entropy_coef * scale * probs[k] * (logp[k] + entropy);
            d_logits[k] = g;
        }
        *d_value = 2.0 * cfg.value_coef * err * scale;
    }
    Terms {
        policy: -surrogate,
        value: err * err,
        entropy,
        ratio,
        clipped: if (ratio - 1.0).abs() > cfg.clip_eps {
            1.0
        } else {
            0.0
        },
        kl: old_log_prob - logp[action],
    }
}

fn accumulate(
    params: &PolicyParams,
    batch: &PpoBatch,
    cfg: &PpoConfig,
    mut grad: Option<&mut [f64]>,
) -> (f64, PpoStats) {
    let n = batch.len();
    let scale = 1.0 / n as f64;
    let a = params.dims().actions;
    let mut stats = PpoStats::default();
    let mut d_logits = vec![0.0; a];
    for i in 0..n {
        let x = batch.input(i);
        let cache = params.forward_cached(x);
        let mut d_value = 0.0;
        let partials = grad.as_ref().map(|_| (&mut d_logits[..], &mut d_value));
        let t = sample_terms(
            &cache.logits,
            cache.value,
            batch.actions[i],
            batch.old_log_probs[i],
            batch.advantages[i],
            batch.returns[i],
            cfg,
            scale,
            partials,
        );
        if let Some(g) = grad.as_deref_mut() {
            params.backward(x, &cache, &d_logits, d_value, g);
        }
        stats.policy_loss += t.policy * scale;
        stats.value_loss += t.value * scale;
        stats.entropy += t.entropy * scale;
        stats.mean_ratio += t.ratio * scale;
        stats.clip_fraction += t.clipped * scale;
        stats.approx_kl += t.kl * scale;
    }
    let loss =
        stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    (loss, stats)
}

/// Total loss `-surrogate + c_v * mse - c_e * entropy`, batch mean.
pub fn ppo_loss(params: &PolicyParams, batch: &PpoBatch, cfg: &PpoConfig) -> f64 {
    accumulate(params, batch, cfg, None).0
}

/// Loss and its gradient with respect to the flat parameter vector.
pub fn ppo_loss_and_grad(
    params: &PolicyParams,
    batch: &PpoBatch,
    cfg: &PpoConfig,
) -> (f64, Vec<f64>, PpoStats) {
    let mut grad = vec![0.0; params.as_slice().len()];
    let (loss, stats) = accumulate(params, batch, cfg, Some(&mut grad));
    (loss, grad, stats)
}

/// `cfg.epochs` passes of shuffled minibatch Adam steps on the clipped
/// surrogate. Advantages are standardized over the whole rollout first when
/// `cfg.normalize_advantages` is set. Returns stats averaged over minibatches.
pub fn ppo_update<R: Rng>(
    params: &mut PolicyParams,
    opt: &mut Adam,
    rollout: &PpoBatch,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    if rollout.is_empty() {
        return Ok(PpoStats::default());
    }
    let mut data = rollout.clone();
    if cfg.normalize_advantages && data.len() > 1 {
        let n = data.len() as f64;
        let mean = data.advantages.iter().sum::<f64>() / n;
        let var = data
            .advantages
            .iter()
            .map(|a| (a - mean).powi(2))
            .sum::<f64>()
            / n;
        let std = var.sqrt() + 1e-8;
        data.advantages
            .iter_mut()
            .for_each(|a| *a = (*a - mean) / std);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut total = PpoStats::default();
    let mut count = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let mb = data.select(chunk);
            let (loss, mut grad, stats) = ppo_loss_and_grad(params, &mb, cfg);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "ppo loss (policy {:.4e}, value {:.4e}, entropy {:.4e}, ratio {:.4e})",
                    stats.policy_loss, stats.value_loss, stats.entropy, stats.mean_ratio
                )));
            }
            let norm = clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.step(params.as_mut_slice(), &grad, cfg.lr);
            total.policy_loss += stats.policy_loss;
            total.value_loss += stats.value_loss;
            total.entropy += stats.entropy;
            total.mean_ratio += stats.mean_ratio;
            total.clip_fraction += stats.clip_fraction;
            total.approx_kl += stats.approx_kl;
            total.grad_norm += norm;
            count += 1;
        }
    }
    let c = count as f64;
    Ok(PpoStats {
        policy_loss: total.policy_loss / c,
        value_loss: total.value_loss / c,
        entropy: total.entropy / c,
        mean_ratio: total.mean_ratio / c,
        clip_fraction: total.clip_fraction / c,
        approx_kl: total.approx_kl / c,
        grad_norm: total.grad_norm / c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::network::Dims;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gae_reduces_to_reward_to_go() {
        let r = [0.0, 1.0, 0.0, 2.0];
        let (adv, ret) = gae_advantages(&r, &[0.0; 4], &[false, false, false, true], 5.0, 1.0, 1.0);
        assert_eq!(adv, vec![3.0, 3.0, 2.0, 2.0]);
        assert_eq!(ret, adv);
        let (adv, _) = gae_advantages(&[0.0; 4], &[0.0; 4], &[false; 4], 0.0, 0.99, 0.95);
        assert!(adv.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn zero_advantage_has_no_policy_gradient() {
        let tiny = Dims {
            input: 4,
            hidden: 8,
            actions: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = PolicyParams::init(tiny, &mut rng);
        let inputs: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let batch = PpoBatch {
            input_dim: 4,
            inputs,
            actions: vec![0, 1, 2, 1, 0],
            old_log_probs: vec![-1.0; 5],
            advantages: vec![0.0; 5],
            returns: vec![0.5; 5],
        };
        let cfg = PpoConfig {
            value_coef: 0.0,
            entropy_coef: 0.0,
            ..PpoConfig::default()
        };
        let (_, grad, _) = ppo_loss_and_grad(&p, &batch, &cfg);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ratio_is_one_at_behavior_params() {
        let tiny = Dims {
            input: 4,
            hidden: 8,
            actions: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = PolicyParams::init(tiny, &mut rng);
        let inputs: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let actions = vec![2, 0, 1];
        let old: Vec<f64> = (0..3)
            .map(|i| log_softmax(&p.forward(&inputs[i * 4..i * 4 + 4]).unwrap().0)[actions[i]])
            .collect();
        let batch = PpoBatch {
            input_dim: 4,
            inputs,
            actions,
            old_log_probs: old,
            advantages: vec![1.0, -1.0, 0.5],
            returns: vec![0.0; 3],
        };
        let (_, _, stats) = ppo_loss_and_grad(&p, &batch, &PpoConfig::default());
        assert!((stats.mean_ratio - 1.0).abs() < 1e-15);
        assert_eq!(stats.clip_fraction, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        let bad = PpoConfig {
            clip_eps: 1.5,
            ..PpoConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
