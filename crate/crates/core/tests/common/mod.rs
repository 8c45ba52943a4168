#![allow(dead_code)]

use rand::Rng;

use selfil::gridworld::Observation;
use selfil::intrinsic::CountTable;
use selfil::policy::ActorCritic;
use selfil::replay::{fill_mc_returns, Episode, RankedBuffer, Transition};
use selfil::scoring::{EpisodeScore, NormalizationMode};
use selfil::Result;

/// Observation identified by a small tag.
pub fn obs(tag: u16) -> Observation {
    let mut o = Observation([0; 147]);
    o.0[0] = (tag & 0xff) as u8;
    o.0[1] = (tag >> 8) as u8;
    o
}

pub fn tag_of(o: &Observation) -> u16 {
    o.0[0] as u16 | (o.0[1] as u16) << 8
}

pub fn score(total: f64) -> EpisodeScore {
    EpisodeScore {
        s_ext: total,
        s_local: 0.0,
        s_global: 0.0,
        total,
        mode: NormalizationMode::Default,
    }
}

/// Episode with the given next-observation tags; a positive `reward` lands
/// on the last step.
pub fn episode_with(id: u64, level: u64, next_tags: &[u16], reward: f64, total: f64) -> Episode {
    let n = next_tags.len();
    let mut ts: Vec<Transition> = next_tags
        .iter()
        .enumerate()
        .map(|(i, &tag)| Transition {
            obs: obs(if i == 0 { 0 } else { next_tags[i - 1] }),
            action: (i % 7) as u8,
            log_prob_behavior: -1.0,
            reward: if i + 1 == n { reward } else { 0.0 },
            next_obs: obs(tag),
            done: i + 1 == n,
            mc_return: 0.0,
            episode_id: id,
            level_id: level,
            step_index: i as u32,
        })
        .collect();
    fill_mc_returns(&mut ts, 0.99);
    Episode::new(ts, score(total)).unwrap()
}

pub fn plain_episode(id: u64, level: u64, len: usize, total: f64) -> Episode {
    let tags: Vec<u16> = (0..len as u16).collect();
    episode_with(id, level, &tags, 0.0, total)
}

/// Random episode: length 1..=max_len, next-observation tags drawn from a
/// small alphabet so repeats happen, success with probability `p_success`.
pub fn random_episode<R: Rng>(
    rng: &mut R,
    id: u64,
    levels: u64,
    max_len: usize,
    p_success: f64,
) -> Episode {
    let len = rng.gen_range(1..=max_len);
    let tags: Vec<u16> = (0..len).map(|_| rng.gen_range(0..12)).collect();
    let reward = if rng.gen_bool(p_success) {
        rng.gen_range(0.1..1.0)
    } else {
        0.0
    };
    episode_with(
        id,
        rng.gen_range(0..levels),
        &tags,
        reward,
        rng.gen::<f64>(),
    )
}

pub fn random_buffer<R: Rng>(rng: &mut R, episodes: usize, p_success: f64) -> RankedBuffer {
    let mut b = RankedBuffer::new(100_000, None).unwrap();
    for id in 0..episodes as u64 {
        b.insert(random_episode(rng, id, 5, 12, p_success)).unwrap();
    }
    b
}

/// Agent whose value is a fixed function of the observation tag.
pub struct TagValue;

impl ActorCritic for TagValue {
    fn action_log_prob(&self, o: &Observation, action: usize) -> Result<f64> {
        let w = (tag_of(o) as usize + action) % 3 + 1;
        Ok((w as f64 / 6.0).ln())
    }

    fn value(&self, o: &Observation) -> Result<f64> {
        Ok((tag_of(o) % 5) as f64 * 0.1)
    }
}

/// Count table where observation tag `i` has been seen `counts[i]` times.
pub fn counts_table(counts: &[u64]) -> CountTable {
    let mut t = CountTable::new();
    for (i, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            t.record(&obs(i as u16));
        }
    }
    t
}

/// Episode ids a greedy whole-episode store would keep from `stream` of
/// `(id, score, len)`: rank by score (newer first on ties) and take
/// episodes in that order until the next one would overflow `capacity`.
pub fn greedy_reference(stream: &[(u64, f64, usize)], capacity: usize) -> Vec<u64> {
    let mut order: Vec<usize> = (0..stream.len()).collect();
    order.sort_by(|&a, &b| stream[b].1.total_cmp(&stream[a].1).then(b.cmp(&a)));
    let mut kept = Vec::new();
    let mut used = 0;
    for i in order {
        if used + stream[i].2 > capacity {
            break;
        }
        used += stream[i].2;
        kept.push(stream[i].0);
    }
    kept
}

pub fn stored_ids(b: &RankedBuffer) -> Vec<u64> {
    b.episodes().map(|e| e.episode_id).collect()
}

/// `(episode_id, step_index)` of every entry, in order.
pub fn view_keys(view: &selfil::replay::BufferView<'_>) -> Vec<(u64, u32)> {
    view.iter().map(|t| (t.episode_id, t.step_index)).collect()
}

pub fn all_keys(b: &RankedBuffer) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    for e in b.episodes() {
        for t in &e.transitions {
            out.push((e.episode_id, t.step_index));
        }
    }
    out
}

pub fn nonzero_return_scan(b: &RankedBuffer) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    for e in b.episodes() {
        let ret: f64 = e.transitions.iter().map(|t| t.reward).sum();
        if ret != 0.0 {
            for t in &e.transitions {
                out.push((e.episode_id, t.step_index));
            }
        }
    }
    if out.is_empty() {
        all_keys(b)
    } else {
        out
    }
}

pub fn positive_advantage_scan(b: &RankedBuffer, agent: &dyn ActorCritic) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    for e in b.episodes() {
        for t in &e.transitions {
            if t.mc_return > agent.value(&t.obs).unwrap() {
                out.push((e.episode_id, t.step_index));
            }
        }
    }
    out
}

pub fn unique_states_scan(b: &RankedBuffer) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    for e in b.episodes() {
        let mut seen: Vec<Observation> = Vec::new();
        for t in &e.transitions {
            if !seen.contains(&t.next_obs) {
                seen.push(t.next_obs);
                out.push((e.episode_id, t.step_index));
            }
        }
    }
    out
}

pub mod gradcheck {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use selfil::policy::{
        bc_loss, bc_loss_and_grad, log_softmax, ppo_loss, ppo_loss_and_grad, BcBatch, Dims,
        PolicyParams, PpoBatch, PpoConfig,
    };

    pub const H: f64 = 1e-5;
    /// Denominator floor: entries whose true gradient is (near) zero are
    /// compared absolutely at this scale.
    pub const FLOOR: f64 = 1e-6;
    pub const TINY: Dims = Dims {
        input: 4,
        hidden: 8,
        actions: 3,
    };

    pub fn random_params(rng: &mut ChaCha8Rng, dims: Dims) -> PolicyParams {
        let data = (0..dims.num_params())
            .map(|_| rng.gen_range(-0.8..0.8))
            .collect();
        PolicyParams::from_flat(dims, data).unwrap()
    }

    /// Central-difference gradient of `f` at `params`.
    pub fn numeric_grad(params: &PolicyParams, f: impl Fn(&PolicyParams) -> f64) -> Vec<f64> {
        let mut p = params.clone();
        (0..params.as_slice().len())
            .map(|i| {
                let x = p.as_slice()[i];
                p.as_mut_slice()[i] = x + H;
                let up = f(&p);
                p.as_mut_slice()[i] = x - H;
                let down = f(&p);
                p.as_mut_slice()[i] = x;
                (up - down) / (2.0 * H)
            })
            .collect()
    }

    pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(FLOOR))
            .fold(0.0, f64::max)
    }

    /// Random PPO batch whose probability ratios avoid the clip edges (so
    /// the loss is smooth at `params`) but land on both sides of them.
    pub fn ppo_batch(rng: &mut ChaCha8Rng, params: &PolicyParams, n: usize, clip: f64) -> PpoBatch {
        let d = params.dims();
        let mut b = PpoBatch {
            input_dim: d.input,
            ..PpoBatch::default()
        };
        for _ in 0..n {
            let x: Vec<f64> = (0..d.input).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = rng.gen_range(0..d.actions);
            let logp = log_softmax(&params.forward(&x).unwrap().0)[a];
            let ratio = match rng.gen_range(0..3) {
                0 => rng.gen_range(0.3..1.0 - clip - 0.05),
                1 => rng.gen_range(1.0 - clip + 0.05..1.0 + clip - 0.05),
                _ => rng.gen_range(1.0 + clip + 0.05..2.0),
            };
            b.inputs.extend(x);
            b.actions.push(a);
            b.old_log_probs.push(logp - ratio.ln());
            b.advantages.push(rng.gen_range(-2.0..2.0));
            b.returns.push(rng.gen_range(-1.0..1.0));
        }
        b
    }

    pub fn bc_batch(
        rng: &mut ChaCha8Rng,
        d: Dims,
        n: usize,
        with_returns: bool,
        with_weights: bool,
    ) -> BcBatch {
        BcBatch {
            inputs: (0..n * d.input).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            actions: (0..n).map(|_| rng.gen_range(0..d.actions)).collect(),
            returns: with_returns.then(|| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            weights: with_weights.then(|| (0..n).map(|_| rng.gen_range(0.1..1.0)).collect()),
        }
    }

    /// Worst relative error of the PPO and BC gradients on one random net.
    pub fn check_seed(seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = random_params(&mut rng, TINY);
        let cfg = PpoConfig::default();
        let batch = ppo_batch(&mut rng, &params, 12, cfg.clip_eps);
        let (_, analytic, _) = ppo_loss_and_grad(&params, &batch, &cfg);
        let numeric = numeric_grad(&params, |p| ppo_loss(p, &batch, &cfg));
        let ppo = max_rel_err(&analytic, &numeric);

        let mut bc = 0.0f64;
        for (r, w) in [(false, false), (true, false), (true, true)] {
            let batch = bc_batch(&mut rng, TINY, 10, r, w);
            let (_, analytic) = bc_loss_and_grad(&params, &batch);
            let numeric = numeric_grad(&params, |p| bc_loss(p, &batch));
            bc = bc.max(max_rel_err(&analytic, &numeric));
        }
        (ppo, bc)
    }
}

/// Replays the observation sequence `tags` (one more entry than steps) as
/// `passes` separate episodes and returns the summed bonus of each pass.
/// Counts are updated the way the trainer does: the start observation at
/// reset, each next observation before its bonus is computed.
pub fn bonus_per_pass(tags: &[u16], passes: usize, beta: f64) -> Vec<f64> {
    let mut counts = CountTable::new();
    (0..passes)
        .map(|_| {
            counts.start_episode();
            counts.record(&obs(tags[0]));
            let mut sum = 0.0;
            for w in tags.windows(2) {
                counts.record(&obs(w[1]));
                sum += selfil::intrinsic::bebold_reward(&counts, &obs(w[0]), &obs(w[1]), beta);
            }
            sum
        })
        .collect()
}

/// 50-step trajectory over 17 states that lingers three steps in each, so
/// every state is seen equally often per pass.
pub fn dwell_trajectory() -> Vec<u16> {
    (0..51).map(|i| (i / 3) as u16).collect()
}
