use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::Task;
use crate::policy::PpoConfig;
use crate::sampling::{PriorityConfig, ReplayFilter};
use crate::scoring::{NormalizationMode, ScoreWeights};

/// Which levels episodes are played on.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LevelRegime {
    /// A fresh level seed for every episode.
    #[default]
    Procedural,
    /// Each episode picks uniformly among these seeds.
    Fixed { seeds: Vec<u64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    pub weights: ScoreWeights,
    pub normalization: NormalizationMode,
    /// Discount for the extrinsic term of the ranking score.
    pub gamma: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            weights: ScoreWeights::default(),
            normalization: NormalizationMode::Default,
            gamma: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BufferConfig {
    /// Capacity in transitions.
    pub capacity: usize,
    /// Maximum stored episodes per level.
    pub quota: Option<usize>,
}

impl Default for BufferConfig {
    fn default() -> Self {
        BufferConfig {
            capacity: 10_000,
            quota: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImitationConfig {
    pub batch_size: usize,
    /// Imitation updates per iteration; 0 disables self-imitation.
    pub updates_per_iteration: usize,
    /// Learning rate; the PPO rate when unset.
    pub lr: Option<f64>,
    /// Also regress the value head onto Monte Carlo returns.
    pub value_regression: bool,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        ImitationConfig {
            batch_size: 256,
            updates_per_iteration: 5,
            lr: None,
            value_regression: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrinsicConfig {
    pub enabled: bool,
    pub beta: f64,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        IntrinsicConfig {
            enabled: false,
            beta: 0.005,
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub task: Task,
    pub levels: LevelRegime,
    pub total_steps: u64,
    pub rollout_len: usize,
    pub ppo: PpoConfig,
    pub score: ScoreConfig,
    pub priority: PriorityConfig,
    pub filter: ReplayFilter,
    pub buffer: BufferConfig,
    pub imitation: ImitationConfig,
    pub intrinsic: IntrinsicConfig,
    pub seed: u64,
    /// Episodes in the moving return window.
    pub return_window: usize,
    /// Stop once the windowed mean return reaches this value (full window).
    pub stop_at_return: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "run".into(),
            task: Task::MultiRoom {
                n_rooms: 2,
                max_room_size: 4,
            },
            levels: LevelRegime::Procedural,
            total_steps: 100_000,
            rollout_len: 2048,
            ppo: PpoConfig::default(),
            score: ScoreConfig::default(),
            priority: PriorityConfig::default(),
            filter: ReplayFilter::None,
            buffer: BufferConfig::default(),
            imitation: ImitationConfig::default(),
            intrinsic: IntrinsicConfig::default(),
            seed: 0,
            return_window: 100,
            stop_at_return: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.task.validate()?;
        self.ppo.validate()?;
        self.priority.validate()?;
        self.score.weights.validate()?;
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!(
                "run name {:?} must be a plain non-empty file name",
                self.name
            ));
        }
        if let LevelRegime::Fixed { seeds } = &self.levels {
            if seeds.is_empty() {
                return bad("fixed level regime needs at least one seed".into());
            }
        }
        if self.rollout_len == 0 {
            return bad("rollout_len must be positive".into());
        }
        if !(self.score.gamma > 0.0 && self.score.gamma <= 1.0) {
            return bad(format!("score.gamma {} outside (0, 1]", self.score.gamma));
        }
        if self.buffer.capacity == 0 || self.buffer.quota == Some(0) {
            return bad("buffer capacity and quota must be positive".into());
        }
        if self.imitation.batch_size == 0 {
            return bad("imitation.batch_size must be positive".into());
        }
        if let Some(lr) = self.imitation.lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(format!("imitation.lr {lr} must be positive"));
            }
        }
        if !(self.intrinsic.beta >= 0.0 && self.intrinsic.beta.is_finite()) {
            return bad(format!(
                "intrinsic.beta {} must be nonnegative",
                self.intrinsic.beta
            ));
        }
        if self.return_window == 0 {
            return bad("return_window must be positive".into());
        }
        if self.stop_at_return.is_some_and(|r| !r.is_finite()) {
            return bad("stop_at_return must be finite".into());
        }
        Ok(())
    }

    pub fn imitation_lr(&self) -> f64 {
        self.imitation.lr.unwrap_or(self.ppo.lr)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_json(&text).map_err(|e| Error::Data {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
