//! Episode-level ranking score: a weighted sum of the extrinsic return, the
//! within-episode state diversity, and lifelong novelty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::intrinsic::CountTable;
use crate::replay::Transition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreWeights {
    pub w_ext: f64,
    pub w_local: f64,
    pub w_global: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            w_ext: 1.0,
            w_local: 0.1,
            w_global: 0.001,
        }
    }
}

impl ScoreWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_ext", self.w_ext),
            ("w_local", self.w_local),
            ("w_global", self.w_global),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidConfig(format!("score weight {name} = {w}")));
            }
        }
        Ok(())
    }
}

/// How the extrinsic return enters the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Raw return.
    #[default]
    Default,
    /// Return divided by what an optimal solver would earn on the level.
    Normalized,
    /// As `Normalized`, but any success within 20 extra steps scores 1.
    NormalizedFlex,
}

/// Extra steps over the shortest solution still counted as optimal by
/// [`NormalizationMode::NormalizedFlex`].
pub const FLEX_SLACK_STEPS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub s_ext: f64,
    pub s_local: f64,
    pub s_global: f64,
    pub total: f64,
    pub mode: NormalizationMode,
}

/// Level facts needed to normalize returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelInfo {
    pub optimal_steps: u32,
    pub max_steps: u32,
}

/// Discounted return from the first step, `sum_k gamma^k r_k`.
pub fn s_ext(episode: &[Transition], gamma: f64) -> f64 {
    let mut g = 0.0;
    for t in episode.iter().rev() {
        g = t.reward + gamma * g;
    }
    g
}

/// Fraction of distinct observations among the episode's steps.
pub fn s_local(episode: &[Transition]) -> f64 {
    if episode.is_empty() {
        return 0.0;
    }
    let mut seen: Vec<&Observation> = episode.iter().map(|t| &t.obs).collect();
    seen.sort_unstable_by_key(|a| a.0);
    seen.dedup();
    seen.len() as f64 / episode.len() as f64
}

/// Mean of `1 / sqrt(N(s_t))` over the episode, with lifelong counts.
pub fn s_global(episode: &[Transition], counts: &CountTable) -> Result<f64> {
    if episode.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for t in episode {
        let n = counts.lifelong(&t.obs);
        if n == 0 {
            return Err(Error::ZeroCount);
        }
        sum += 1.0 / (n as f64).sqrt();
    }
    Ok(sum / episode.len() as f64)
}

/// Return an optimal solver earns: `1 - 0.9 * optimal / max_steps`.
pub fn optimal_return(level: LevelInfo) -> f64 {
    crate::gridworld::success_return(level.optimal_steps, level.max_steps)
}

pub fn normalize_return(
    g: f64,
    episode_steps: u32,
    level: LevelInfo,
    mode: NormalizationMode,
) -> f64 {
    let ratio = || (g / optimal_return(level)).clamp(0.0, 1.0);
    match mode {
        NormalizationMode::Default => g,
        NormalizationMode::Normalized => ratio(),
        NormalizationMode::NormalizedFlex => {
            let within = episode_steps >= level.optimal_steps
                && episode_steps - level.optimal_steps <= FLEX_SLACK_STEPS;
            if g > 0.0 && within {
                1.0
            } else {
                ratio()
            }
        }
    }
}

/// Scores one episode; `gamma` discounts the extrinsic term.
pub fn score_episode(
    episode: &[Transition],
    weights: &ScoreWeights,
    counts: &CountTable,
    gamma: f64,
    mode: NormalizationMode,
    level: LevelInfo,
) -> Result<EpisodeScore> {
    if episode.is_empty() {
        return Err(Error::InvalidEpisode("empty episode".into()));
    }
    let raw = s_ext(episode, gamma);
    let ext = normalize_return(raw, episode.len() as u32, level, mode);
    let local = s_local(episode);
    let global = s_global(episode, counts)?;
    let total = weights.w_ext * ext + weights.w_local * local + weights.w_global * global;
    if !total.is_finite() {
        return Err(Error::NonFinite("episode score".into()));
    }
    Ok(EpisodeScore {
        s_ext: ext,
        s_local: local,
        s_global: global,
        total,
        mode,
    })
}
