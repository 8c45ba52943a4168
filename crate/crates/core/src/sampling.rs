//! Priority proxies, proportional sampling `P(i) = p_i^a / sum_k p_k^a`, and
//! the replay filters that decide which stored transitions are eligible.

use fnv::FnvHashSet;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::intrinsic::CountTable;
use crate::policy::ActorCritic;
use crate::replay::{BufferView, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorityProxy {
    Uniform,
    TdError,
    LogLikelihood,
    Novelty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorityConfig {
    pub proxy: PriorityProxy,
    pub alpha: f64,
    pub td_epsilon: f64,
    /// Attach normalized importance weights to sampled batches.
    pub importance_sampling: bool,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        PriorityConfig {
            proxy: PriorityProxy::Uniform,
            alpha: 0.0,
            td_epsilon: 1e-6,
            importance_sampling: false,
        }
    }
}

impl PriorityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if !(self.td_epsilon > 0.0 && self.td_epsilon.is_finite()) {
            return Err(Error::InvalidConfig("td_epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayFilter {
    #[default]
    None,
    NonZeroReturn,
    PositiveAdvantage,
    UniqueStates,
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Raw priority `p_i >= 0` of one stored transition.
///
/// * `Uniform`: 1
/// * `TdError`: `|r + gamma V(s') (1 - done) - V(s)| + td_epsilon`
/// * `LogLikelihood`: `pi(a|s)` under the current policy
/// * `Novelty`: `1 / sqrt(N(s))` from lifelong counts
pub fn priority(
    t: &Transition,
    cfg: &PriorityConfig,
    agent: &dyn ActorCritic,
    counts: &CountTable,
    gamma: f64,
) -> Result<f64> {
    match cfg.proxy {
        PriorityProxy::Uniform => Ok(1.0),
        PriorityProxy::TdError => {
            let v = finite(agent.value(&t.obs)?, "value estimate")?;
            let v_next = if t.done {
                0.0
            } else {
                finite(agent.value(&t.next_obs)?, "value estimate")?
            };
            Ok((t.reward + gamma * v_next - v).abs() + cfg.td_epsilon)
        }
        PriorityProxy::LogLikelihood => {
            let lp = finite(
                agent.action_log_prob(&t.obs, t.action as usize)?,
                "log-likelihood",
            )?;
            Ok(lp.exp())
        }
        PriorityProxy::Novelty => match counts.lifelong(&t.obs) {
            0 => Err(Error::ZeroCount),
            n => Ok(1.0 / (n as f64).sqrt()),
        },
    }
}

/// Priorities of every entry in `view`, in view order.
pub fn view_priorities(
    view: &BufferView<'_>,
    cfg: &PriorityConfig,
    agent: &dyn ActorCritic,
    counts: &CountTable,
    gamma: f64,
) -> Result<Vec<f64>> {
    view.iter()
        .map(|t| priority(t, cfg, agent, counts, gamma))
        .collect()
}

/// Sampling distribution `p_i^alpha / sum_k p_k^alpha`. With `alpha = 0`
/// every entry gets the same mass. If every priority is zero the
/// distribution falls back to uniform and a warning is logged.
pub fn probabilities(priorities: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if priorities.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(p) = priorities.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::NonFinite(format!("priority {p}")));
    }
    let n = priorities.len();
    let w: Vec<f64> = priorities
        .iter()
        .map(|&p| if alpha == 0.0 { 1.0 } else { p.powf(alpha) })
        .collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        log::warn!("all {n} priorities are zero; sampling uniformly");
        return Ok(vec![1.0 / n as f64; n]);
    }
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Shannon entropy (nats) of a distribution.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// `n` draws with replacement from `probs`, stratified: the unit interval
/// is cut into `n` equal slices and one inverse-CDF draw is taken inside
/// each. Every index `i` is expected `n * probs[i]` times, with much less
/// spread than independent draws. Indices come back in CDF order.
pub fn sample_indices<R: Rng>(probs: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    if probs.is_empty() {
        return Vec::new();
    }
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cdf.push(acc);
    }
    let last = probs.len() - 1;
    let slice = acc / n as f64;
    (0..n)
        .map(|k| {
            let u = (k as f64 + rng.gen::<f64>()) * slice;
            cdf.partition_point(|&c| c <= u).min(last)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    /// Indices into the sampled view.
    pub indices: Vec<usize>,
    /// Importance weights scaled to a maximum of 1; empty unless enabled.
    pub weights: Vec<f64>,
    pub entropy: f64,
    /// Entropy divided by `ln(view length)`; 1 for uniform.
    pub normalized_entropy: f64,
}

/// Draws `batch_size` entries of `view` with the configured priorities.
pub fn sample<R: Rng>(
    view: &BufferView<'_>,
    batch_size: usize,
    cfg: &PriorityConfig,
    agent: &dyn ActorCritic,
    counts: &CountTable,
    gamma: f64,
    rng: &mut R,
) -> Result<SampledBatch> {
    if view.is_empty() || batch_size == 0 {
        return Ok(SampledBatch {
            indices: Vec::new(),
            weights: Vec::new(),
            entropy: 0.0,
            normalized_entropy: 0.0,
        });
    }
    let probs = if cfg.proxy == PriorityProxy::Uniform || cfg.alpha == 0.0 {
        vec![1.0 / view.len() as f64; view.len()]
    } else {
        probabilities(
            &view_priorities(view, cfg, agent, counts, gamma)?,
            cfg.alpha,
        )?
    };
    let indices = sample_indices(&probs, batch_size, rng);
    let weights = if cfg.importance_sampling {
        let n = probs.len() as f64;
        let raw: Vec<f64> = indices.iter().map(|&i| 1.0 / (n * probs[i])).collect();
        let max = raw.iter().copied().fold(0.0, f64::max);
        raw.into_iter().map(|w| w / max).collect()
    } else {
        Vec::new()
    };
    let h = entropy(&probs);
    let norm = if probs.len() > 1 {
        h / (probs.len() as f64).ln()
    } else {
        1.0
    };
    Ok(SampledBatch {
        indices,
        weights,
        entropy: h,
        normalized_entropy: norm,
    })
}

/// Restricts `view` to the transitions the filter admits. Every filter is
/// idempotent.
///
/// * `NonZeroReturn`: transitions of successful episodes, or the whole view
///   when it holds none.
/// * `PositiveAdvantage`: transitions with `G_t - V(s_t) > 0`; may be empty.
/// * `UniqueStates`: per episode, the first transition leading to each
///   distinct next observation.
pub fn apply_filter<'a>(
    view: BufferView<'a>,
    filter: ReplayFilter,
    agent: &dyn ActorCritic,
) -> Result<BufferView<'a>> {
    match filter {
        ReplayFilter::None => Ok(view),
        ReplayFilter::NonZeroReturn => {
            let fallback = view.clone();
            let kept = view.retain(|v, i| v.episode_of(i).is_success());
            Ok(if kept.is_empty() { fallback } else { kept })
        }
        ReplayFilter::PositiveAdvantage => {
            let mut keep = Vec::with_capacity(view.len());
            for (i, t) in view.iter().enumerate() {
                let v = finite(agent.value(&t.obs)?, "value estimate")?;
                if t.mc_return - v > 0.0 {
                    keep.push(i);
                }
            }
            Ok(view.subset(&keep))
        }
        ReplayFilter::UniqueStates => {
            let mut seen: FnvHashSet<(u32, Observation)> = FnvHashSet::default();
            Ok(view.retain(|v, i| seen.insert((v.refs()[i].episode, v.get(i).next_obs))))
        }
    }
}
