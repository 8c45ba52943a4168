//! The training loop: collect a rollout, take an on-policy step, rank the
//! finished episodes into the replay buffer, then imitate filtered and
//! prioritized samples from it.

mod config;
mod metrics;

pub use config::{
    BufferConfig, ImitationConfig, IntrinsicConfig, LevelRegime, RunConfig, ScoreConfig,
};
pub use metrics::{
    read_episodes, read_metrics, EpisodeRecord, EpisodeWriter, MetricsRow, MetricsWriter,
    EPISODE_COLUMNS, METRICS_COLUMNS,
};

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use fnv::FnvHashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{generate_level, EnvState, Level, Observation};
use crate::intrinsic::{bebold_reward, CountTable};
use crate::policy::{
    bc_update, features, gae_advantages, log_softmax, ppo_update, Adam, BcBatch, Dims,
    PolicyParams, PpoBatch, PpoStats,
};
use crate::replay::{fill_mc_returns, Episode, RankedBuffer, Transition};
use crate::sampling::{apply_filter, sample};
use crate::scoring::{score_episode, LevelInfo};

/// Sub-stream ids carved out of the run seed.
const STREAM_ENV: u64 = 0;
const STREAM_INIT: u64 = 1;
const STREAM_ACTIONS: u64 = 2;
const STREAM_SAMPLER: u64 = 3;
const STREAM_MINIBATCH: u64 = 4;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws an index from a probability vector.
fn draw<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

struct Finished {
    transitions: Vec<Transition>,
    info: LevelInfo,
}

pub struct Trainer {
    cfg: RunConfig,
    params: PolicyParams,
    ppo_opt: Adam,
    bc_opt: Adam,
    buffer: RankedBuffer,
    counts: CountTable,
    env_rng: ChaCha8Rng,
    action_rng: ChaCha8Rng,
    sampler_rng: ChaCha8Rng,
    minibatch_rng: ChaCha8Rng,
    fixed_levels: FnvHashMap<u64, Arc<Level>>,
    env: EnvState,
    obs: Observation,
    current: Vec<Transition>,
    next_episode_id: u64,
    env_steps: u64,
    episodes: u64,
    iteration: u64,
    window: VecDeque<(f64, u32)>,
    levels_played: Vec<u64>,
    stopped_early: bool,
    episode_log: Vec<EpisodeRecord>,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let max_steps = cfg.task.max_steps() as usize;
        if cfg.buffer.capacity < max_steps {
            return Err(Error::InvalidConfig(format!(
                "buffer capacity {} is below the {max_steps}-step episode limit",
                cfg.buffer.capacity
            )));
        }
        let mut fixed_levels = FnvHashMap::default();
        if let LevelRegime::Fixed { seeds } = &cfg.levels {
            for &s in seeds {
                fixed_levels.insert(s, Arc::new(generate_level(cfg.task, s)?));
            }
        }
        let params = PolicyParams::init(Dims::GRID, &mut substream(cfg.seed, STREAM_INIT));
        let n = params.as_slice().len();
        let buffer = RankedBuffer::new(cfg.buffer.capacity, cfg.buffer.quota)?;
        let mut env_rng = substream(cfg.seed, STREAM_ENV);
        let first = Self::pick_level(&cfg, &fixed_levels, &mut env_rng)?;
        let mut t = Trainer {
            params,
            ppo_opt: Adam::new(n),
            bc_opt: Adam::new(n),
            buffer,
            counts: CountTable::new(),
            env_rng,
            action_rng: substream(cfg.seed, STREAM_ACTIONS),
            sampler_rng: substream(cfg.seed, STREAM_SAMPLER),
            minibatch_rng: substream(cfg.seed, STREAM_MINIBATCH),
            fixed_levels,
            env: EnvState::new(first.clone()),
            obs: Observation::default(),
            current: Vec::new(),
            next_episode_id: 0,
            env_steps: 0,
            episodes: 0,
            iteration: 0,
            window: VecDeque::with_capacity(cfg.return_window),
            levels_played: Vec::new(),
            stopped_early: false,
            episode_log: Vec::new(),
            cfg,
        };
        t.begin_episode(first);
        Ok(t)
    }

    fn pick_level(
        cfg: &RunConfig,
        fixed: &FnvHashMap<u64, Arc<Level>>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Arc<Level>> {
        match &cfg.levels {
            LevelRegime::Fixed { seeds } => {
                Ok(fixed[&seeds[rng.gen_range(0..seeds.len())]].clone())
            }
            LevelRegime::Procedural => loop {
                let id = rng.gen::<u32>() as u64;
                match generate_level(cfg.task, id) {
                    Ok(level) => return Ok(Arc::new(level)),
                    Err(Error::GenerationFailed { .. }) => {
                        log::debug!("skipping level seed {id}: generation failed");
                    }
                    Err(e) => return Err(e),
                }
            },
        }
    }

    fn begin_episode(&mut self, level: Arc<Level>) {
        self.levels_played.push(level.level_id);
        self.env = EnvState::new(level);
        self.counts.start_episode();
        self.obs = self.env.observe();
        self.counts.record(&self.obs);
        self.current.clear();
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn buffer(&self) -> &RankedBuffer {
        &self.buffer
    }

    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Level id of every episode started so far, in order.
    pub fn levels_played(&self) -> &[u64] {
        &self.levels_played
    }

    /// Mean extrinsic return over the last `return_window` episodes, once
    /// that many have finished.
    pub fn windowed_return(&self) -> Option<f64> {
        if self.window.len() < self.cfg.return_window {
            return None;
        }
        Some(self.window.iter().map(|w| w.0).sum::<f64>() / self.window.len() as f64)
    }

    /// Takes the records of episodes finished since the last call.
    pub fn drain_episode_log(&mut self) -> Vec<EpisodeRecord> {
        std::mem::take(&mut self.episode_log)
    }

    pub fn stopped_early(&self) -> bool {
        self.stopped_early
    }

    /// True once the step budget is spent or the early-stop target is met.
    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.cfg.total_steps || self.stopped_early
    }

    /// Steps the environment, returning the PPO batch and finished episodes.
    fn collect(&mut self, steps: usize) -> Result<(PpoBatch, Vec<Finished>, f64)> {
        let mut batch = PpoBatch {
            input_dim: Dims::GRID.input,
            ..PpoBatch::default()
        };
        let mut rewards = Vec::with_capacity(steps);
        let mut values = Vec::with_capacity(steps);
        let mut dones = Vec::with_capacity(steps);
        let mut finished = Vec::new();
        let mut intrinsic_sum = 0.0;
        let intrinsic = self.cfg.intrinsic;

        for _ in 0..steps {
            let obs = self.obs;
            let x = features(&obs);
            let (logits, value) = self.params.forward(&x)?;
            let logp = log_softmax(&logits);
            let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
            let action = draw(&probs, &mut self.action_rng);
            let res = self.env.step(action)?;
            self.env_steps += 1;
            self.counts.record(&res.obs);
            let r_int = if intrinsic.enabled {
                bebold_reward(&self.counts, &obs, &res.obs, intrinsic.beta)
            } else {
                0.0
            };
            intrinsic_sum += r_int;

            batch.inputs.extend_from_slice(&x);
            batch.actions.push(action);
            batch.old_log_probs.push(logp[action]);
            rewards.push(res.reward + r_int);
            values.push(value);
            dones.push(res.done);

            self.current.push(Transition {
                obs,
                action: action as u8,
                log_prob_behavior: logp[action],
                reward: res.reward,
                next_obs: res.obs,
                done: res.done,
                mc_return: 0.0,
                episode_id: self.next_episode_id,
                level_id: res.info.level_id,
                step_index: res.info.step_count - 1,
            });

            if res.done {
                let level = self.env.level();
                let info = LevelInfo {
                    optimal_steps: level.optimal_steps,
                    max_steps: level.max_steps,
                };
                let ret: f64 = self.current.iter().map(|t| t.reward).sum();
                if self.window.len() == self.cfg.return_window {
                    self.window.pop_front();
                }
                self.window.push_back((ret, self.current.len() as u32));
                self.episodes += 1;
                self.episode_log.push(EpisodeRecord {
                    episode: self.episodes,
                    env_steps: self.env_steps,
                    level_id: res.info.level_id,
                    length: self.current.len() as u32,
                    ext_return: ret,
                });
                self.next_episode_id += 1;
                finished.push(Finished {
                    transitions: std::mem::take(&mut self.current),
                    info,
                });
                let next = Self::pick_level(&self.cfg, &self.fixed_levels, &mut self.env_rng)?;
                self.begin_episode(next);
            } else {
                self.obs = res.obs;
            }
        }

        let last_value = if dones.last() == Some(&false) {
            self.params.forward_obs(&self.obs)?.1
        } else {
            0.0
        };
        let (adv, ret) = gae_advantages(
            &rewards,
            &values,
            &dones,
            last_value,
            self.cfg.ppo.gamma,
            self.cfg.ppo.gae_lambda,
        );
        batch.advantages = adv;
        batch.returns = ret;
        Ok((batch, finished, intrinsic_sum / steps.max(1) as f64))
    }

    fn store(&mut self, finished: Vec<Finished>) -> Result<()> {
        let sc = self.cfg.score;
        for f in finished {
            let mut ts = f.transitions;
            fill_mc_returns(&mut ts, self.cfg.ppo.gamma);
            let score = score_episode(
                &ts,
                &sc.weights,
                &self.counts,
                sc.gamma,
                sc.normalization,
                f.info,
            )?;
            self.buffer.insert(Episode::new(ts, score)?)?;
        }
        Ok(())
    }

    /// Runs the imitation phase; returns (steps taken, mean loss, mean pass
    /// rate, mean sampling entropy).
    fn imitate(&mut self) -> Result<(u64, f64, f64, f64)> {
        let m = self.cfg.imitation.updates_per_iteration;
        let (mut steps, mut loss, mut pass, mut ent) = (0u64, 0.0, 0.0, 0.0);
        let lr = self.cfg.imitation_lr();
        for _ in 0..m {
            let total = self.buffer.len_transitions();
            if total == 0 {
                continue;
            }
            let batch = {
                let view =
                    apply_filter(self.buffer.all_transitions(), self.cfg.filter, &self.params)?;
                pass += view.len() as f64 / total as f64;
                if view.is_empty() {
                    continue;
                }
                let drawn = sample(
                    &view,
                    self.cfg.imitation.batch_size,
                    &self.cfg.priority,
                    &self.params,
                    &self.counts,
                    self.cfg.ppo.gamma,
                    &mut self.sampler_rng,
                )?;
                ent += drawn.entropy;
                let mut b = BcBatch {
                    inputs: Vec::with_capacity(drawn.indices.len() * Dims::GRID.input),
                    actions: Vec::with_capacity(drawn.indices.len()),
                    returns: self.cfg.imitation.value_regression.then(Vec::new),
                    weights: (!drawn.weights.is_empty()).then(|| drawn.weights.clone()),
                };
                for &i in &drawn.indices {
                    let t = view.get(i);
                    b.inputs.extend(features(&t.obs));
                    b.actions.push(t.action as usize);
                    if let Some(r) = b.returns.as_mut() {
                        r.push(t.mc_return);
                    }
                }
                b
            };
            let stats = bc_update(&mut self.params, &mut self.bc_opt, &batch, lr)?;
            loss += stats.loss;
            steps += 1;
        }
        let k = |n: f64, d: f64| if d > 0.0 { n / d } else { 0.0 };
        let tried = if self.buffer.is_empty() {
            0.0
        } else {
            m as f64
        };
        Ok((
            steps,
            k(loss, steps as f64),
            k(pass, tried),
            k(ent, steps as f64),
        ))
    }

    /// One rollout, one on-policy update, buffer insertion and the
    /// imitation updates.
    pub fn run_iteration(&mut self) -> Result<MetricsRow> {
        let remaining = self.cfg.total_steps.saturating_sub(self.env_steps);
        let steps = (self.cfg.rollout_len as u64).min(remaining) as usize;
        let (batch, finished, intrinsic_mean) = self.collect(steps)?;
        let ppo: PpoStats = ppo_update(
            &mut self.params,
            &mut self.ppo_opt,
            &batch,
            &self.cfg.ppo,
            &mut self.minibatch_rng,
        )?;
        self.store(finished)?;
        let (bc_steps, bc_loss, pass, entropy) = self.imitate()?;
        self.iteration += 1;

        let returns: Vec<f64> = self.window.iter().map(|w| w.0).collect();
        let (mean_return, std_return) = mean_std(&returns);
        let n = returns.len().max(1) as f64;
        let success_rate = returns.iter().filter(|&&r| r > 0.0).count() as f64 / n;
        let mean_len = self.window.iter().map(|w| w.1 as f64).sum::<f64>() / n;
        let mut scores: Vec<f64> = self.buffer.episodes().map(|e| e.score.total).collect();
        scores.sort_by(f64::total_cmp);
        let cs = self.counts.stats();

        if let (Some(target), Some(r)) = (self.cfg.stop_at_return, self.windowed_return()) {
            if r >= target {
                self.stopped_early = true;
            }
        }

        Ok(MetricsRow {
            iteration: self.iteration,
            env_steps: self.env_steps,
            episodes: self.episodes,
            mean_return,
            std_return,
            success_rate: if returns.is_empty() {
                0.0
            } else {
                success_rate
            },
            mean_episode_len: if returns.is_empty() { 0.0 } else { mean_len },
            intrinsic_mean,
            ppo_policy_loss: ppo.policy_loss,
            ppo_value_loss: ppo.value_loss,
            ppo_entropy: ppo.entropy,
            ppo_mean_ratio: ppo.mean_ratio,
            ppo_clip_fraction: ppo.clip_fraction,
            ppo_approx_kl: ppo.approx_kl,
            bc_steps,
            bc_loss,
            buffer_episodes: self.buffer.len_episodes() as u64,
            buffer_transitions: self.buffer.len_transitions() as u64,
            score_min: scores.first().copied().unwrap_or(0.0),
            score_median: median(&scores),
            score_max: scores.last().copied().unwrap_or(0.0),
            distinct_levels: self.buffer.level_counts().len() as u64,
            filter_pass_rate: pass,
            sample_entropy: entropy,
            distinct_states: cs.distinct_states as u64,
            max_count: cs.max_count,
        })
    }
}

/// Mean and population standard deviation; zeros for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    // exact for constant input, where rounding would otherwise leave a tiny std
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Files written into a run directory.
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const BUFFER_FILE: &str = "buffer.json";
pub const ERROR_FILE: &str = "error.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub iterations: u64,
    pub env_steps: u64,
    pub episodes: u64,
    pub final_mean_return: Option<f64>,
    pub stopped_early: bool,
}

#[derive(Serialize)]
struct Abort<'a> {
    iteration: u64,
    env_steps: u64,
    error: &'a str,
}

/// Trains until the step budget (or early-stop target) is reached, writing
/// the config echo, per-iteration metrics, the final checkpoint and a buffer
/// snapshot into `out_dir`. On failure the metrics written so far are kept
/// and `error.json` records where the run stopped.
pub fn train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(CONFIG_FILE), cfg.to_json()?)?;
    let mut writer = MetricsWriter::create(&out_dir.join(METRICS_FILE))?;
    let mut episode_writer = EpisodeWriter::create(&out_dir.join(EPISODES_FILE))?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut iterations = 0;
    while !trainer.is_finished() {
        match trainer.run_iteration() {
            Ok(row) => {
                writer.append(&row)?;
                episode_writer.append(&trainer.drain_episode_log())?;
                iterations += 1;
                log::info!(
                    "{} iter {} steps {} return {:.3}",
                    cfg.name,
                    row.iteration,
                    row.env_steps,
                    row.mean_return
                );
            }
            Err(e) => {
                let msg = e.to_string();
                let abort = Abort {
                    iteration: iterations + 1,
                    env_steps: trainer.env_steps(),
                    error: &msg,
                };
                std::fs::write(
                    out_dir.join(ERROR_FILE),
                    serde_json::to_string_pretty(&abort)?,
                )?;
                return Err(e);
            }
        }
    }
    trainer.params().save_json(&out_dir.join(CHECKPOINT_FILE))?;
    std::fs::write(
        out_dir.join(BUFFER_FILE),
        serde_json::to_string_pretty(&trainer.buffer().snapshot())?,
    )?;
    Ok(TrainOutcome {
        iterations,
        env_steps: trainer.env_steps(),
        episodes: trainer.episodes(),
        final_mean_return: trainer.windowed_return(),
        stopped_early: trainer.stopped_early(),
    })
}
