//! Bounded replay of whole episodes ranked by their score.
//!
//! Capacity is measured in transitions. Episodes are kept in descending
//! order of `(score.total, insertion order)`, so on equal scores the newer
//! episode ranks higher. Without a per-level quota the buffer always holds
//! the longest score-ordered prefix of every episode offered so far that fits
//! the capacity: once an episode has been evicted, nothing ranked below it is
//! admitted again. With a quota `k`, each level keeps at most its `k` best
//! episodes and the capacity rule simply evicts from the bottom.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::scoring::EpisodeScore;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: u8,
    /// `ln pi(a|s)` under the policy that collected the step.
    pub log_prob_behavior: f64,
    /// Extrinsic reward only.
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
    /// Discounted return-to-go `G_t`.
    pub mc_return: f64,
    pub episode_id: u64,
    pub level_id: u64,
    pub step_index: u32,
}

/// Sets `mc_return` on every step: `G_t = r_t + gamma * G_{t+1}`.
pub fn fill_mc_returns(transitions: &mut [Transition], gamma: f64) {
    let mut g = 0.0;
    for t in transitions.iter_mut().rev() {
        g = t.reward + gamma * g;
        t.mc_return = g;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: u64,
    pub level_id: u64,
    pub transitions: Vec<Transition>,
    pub score: EpisodeScore,
    /// Undiscounted extrinsic return.
    pub ext_return: f64,
}

impl Episode {
    pub fn new(transitions: Vec<Transition>, score: EpisodeScore) -> Result<Self> {
        let first = transitions
            .first()
            .ok_or_else(|| Error::InvalidEpisode("no transitions".into()))?;
        let (episode_id, level_id) = (first.episode_id, first.level_id);
        let last = transitions.len() - 1;
        for (i, t) in transitions.iter().enumerate() {
            if t.episode_id != episode_id || t.level_id != level_id {
                return Err(Error::InvalidEpisode(format!(
                    "step {i} belongs to episode {} level {}",
                    t.episode_id, t.level_id
                )));
            }
            if t.done && i != last {
                return Err(Error::InvalidEpisode(format!(
                    "done flag at step {i} of {}",
                    last + 1
                )));
            }
            if t.log_prob_behavior > 0.0 {
                return Err(Error::InvalidEpisode(format!(
                    "positive log-probability at step {i}"
                )));
            }
        }
        if !score.total.is_finite() {
            return Err(Error::NonFinite("episode score".into()));
        }
        let ext_return = transitions.iter().map(|t| t.reward).sum();
        Ok(Episode {
            episode_id,
            level_id,
            transitions,
            score,
            ext_return,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_success(&self) -> bool {
        self.ext_return > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct RankKey {
    score: f64,
    seq: u64,
}

impl RankKey {
    fn cmp(&self, other: &RankKey) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then(self.seq.cmp(&other.seq))
    }
}

#[derive(Debug, Clone)]
struct Stored {
    key: RankKey,
    episode: Episode,
}

/// Result of offering one episode to the buffer.
#[derive(Debug, Default)]
pub struct InsertOutcome {
    pub stored: bool,
    /// The offered episode, when it was not kept.
    pub rejected: Option<Episode>,
    /// Previously stored episodes removed by this insertion.
    pub evicted: Vec<Episode>,
}

#[derive(Debug, Clone)]
pub struct RankedBuffer {
    /// Descending rank order.
    episodes: Vec<Stored>,
    capacity: usize,
    quota: Option<usize>,
    total: usize,
    next_seq: u64,
    /// Highest-ranked key ever evicted for capacity (no-quota mode only).
    frontier: Option<RankKey>,
}

impl RankedBuffer {
    pub fn new(capacity_transitions: usize, diversity_quota: Option<usize>) -> Result<Self> {
        if capacity_transitions == 0 {
            return Err(Error::InvalidConfig(
                "buffer capacity must be positive".into(),
            ));
        }
        if diversity_quota == Some(0) {
            return Err(Error::InvalidConfig(
                "diversity quota must be positive".into(),
            ));
        }
        Ok(RankedBuffer {
            episodes: Vec::new(),
            capacity: capacity_transitions,
            quota: diversity_quota,
            total: 0,
            next_seq: 0,
            frontier: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn quota(&self) -> Option<usize> {
        self.quota
    }

    pub fn len_transitions(&self) -> usize {
        self.total
    }

    pub fn len_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Stored episodes, best first.
    pub fn episodes(&self) -> impl Iterator<Item = &Episode> + '_ {
        self.episodes.iter().map(|s| &s.episode)
    }

    pub fn episode(&self, rank: usize) -> &Episode {
        &self.episodes[rank].episode
    }

    pub fn level_counts(&self) -> BTreeMap<u64, usize> {
        let mut m = BTreeMap::new();
        for s in &self.episodes {
            *m.entry(s.episode.level_id).or_insert(0) += 1;
        }
        m
    }

    pub fn min_score(&self) -> Option<f64> {
        self.episodes.last().map(|s| s.key.score)
    }

    pub fn insert(&mut self, episode: Episode) -> Result<InsertOutcome> {
        if episode.len() > self.capacity {
            return Err(Error::EpisodeTooLong {
                len: episode.len(),
                capacity: self.capacity,
            });
        }
        if episode.is_empty() {
            return Err(Error::InvalidEpisode("no transitions".into()));
        }
        let key = RankKey {
            score: episode.score.total,
            seq: self.next_seq,
        };
        self.next_seq += 1;
        let mut outcome = InsertOutcome::default();

        match self.quota {
            Some(k) => {
                let level = episode.level_id;
                let same_level: Vec<usize> = self
                    .episodes
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.episode.level_id == level)
                    .map(|(i, _)| i)
                    .collect();
                if same_level.len() >= k {
                    let worst = *same_level.last().expect("k >= 1");
                    if key.cmp(&self.episodes[worst].key) == Ordering::Greater {
                        let old = self.remove_at(worst);
                        outcome.evicted.push(old);
                    } else {
                        outcome.rejected = Some(episode);
                        return Ok(outcome);
                    }
                }
            }
            None => {
                if let Some(f) = self.frontier {
                    if key.cmp(&f) == Ordering::Less {
                        outcome.rejected = Some(episode);
                        return Ok(outcome);
                    }
                }
            }
        }

        let pos = self
            .episodes
            .partition_point(|s| s.key.cmp(&key) == Ordering::Greater);
        self.total += episode.len();
        self.episodes.insert(pos, Stored { key, episode });
        outcome.stored = true;

        while self.total > self.capacity {
            let last = self.episodes.len() - 1;
            let popped_key = self.episodes[last].key;
            let popped = self.remove_at(last);
            if self.quota.is_none() {
                self.frontier = match self.frontier {
                    Some(f) if f.cmp(&popped_key) == Ordering::Greater => Some(f),
                    _ => Some(popped_key),
                };
            }
            if popped_key.seq == key.seq {
                outcome.stored = false;
                outcome.rejected = Some(popped);
            } else {
                outcome.evicted.push(popped);
            }
        }
        Ok(outcome)
    }

    fn remove_at(&mut self, i: usize) -> Episode {
        let s = self.episodes.remove(i);
        self.total -= s.episode.len();
        s.episode
    }

    /// Every stored transition, best episode first, steps in order.
    pub fn all_transitions(&self) -> BufferView<'_> {
        let mut refs = Vec::with_capacity(self.total);
        for (e, s) in self.episodes.iter().enumerate() {
            for step in 0..s.episode.len() {
                refs.push(TransitionRef {
                    episode: e as u32,
                    step: step as u32,
                });
            }
        }
        BufferView { buffer: self, refs }
    }

    /// Transitions of episodes with positive undiscounted return.
    pub fn success_subset(&self) -> BufferView<'_> {
        self.all_transitions()
            .retain(|view, i| view.episode_of(i).is_success())
    }

    pub fn snapshot(&self) -> BufferSnapshot {
        BufferSnapshot {
            capacity_transitions: self.capacity,
            diversity_quota: self.quota,
            total_transitions: self.total,
            episodes: self
                .episodes
                .iter()
                .map(|s| EpisodeSummary {
                    episode_id: s.episode.episode_id,
                    level_id: s.episode.level_id,
                    len: s.episode.len(),
                    ext_return: s.episode.ext_return,
                    score: s.episode.score,
                })
                .collect(),
        }
    }
}

/// Position of one transition inside a buffer: episode rank and step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TransitionRef {
    pub episode: u32,
    pub step: u32,
}

/// Indexable subset of a buffer's transitions. Indices stay valid until the
/// buffer is next mutated (the borrow enforces this).
#[derive(Debug, Clone)]
pub struct BufferView<'a> {
    buffer: &'a RankedBuffer,
    refs: Vec<TransitionRef>,
}

impl<'a> BufferView<'a> {
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn get(&self, i: usize) -> &'a Transition {
        let r = self.refs[i];
        &self.buffer.episodes[r.episode as usize].episode.transitions[r.step as usize]
    }

    pub fn episode_of(&self, i: usize) -> &'a Episode {
        &self.buffer.episodes[self.refs[i].episode as usize].episode
    }

    pub fn refs(&self) -> &[TransitionRef] {
        &self.refs
    }

    pub fn buffer(&self) -> &'a RankedBuffer {
        self.buffer
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a Transition> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Keeps the entries for which `keep(self, index)` holds.
    pub fn retain(self, mut keep: impl FnMut(&BufferView<'a>, usize) -> bool) -> BufferView<'a> {
        let refs = (0..self.len())
            .filter(|&i| keep(&self, i))
            .map(|i| self.refs[i])
            .collect();
        BufferView {
            buffer: self.buffer,
            refs,
        }
    }

    pub fn subset(&self, indices: &[usize]) -> BufferView<'a> {
        BufferView {
            buffer: self.buffer,
            refs: indices.iter().map(|&i| self.refs[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: u64,
    pub level_id: u64,
    pub len: usize,
    pub ext_return: f64,
    pub score: EpisodeScore,
}

/// Serializable picture of buffer contents for diversity analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferSnapshot {
    pub capacity_transitions: usize,
    pub diversity_quota: Option<usize>,
    pub total_transitions: usize,
    pub episodes: Vec<EpisodeSummary>,
}

impl BufferSnapshot {
    pub fn level_counts(&self) -> BTreeMap<u64, usize> {
        let mut m = BTreeMap::new();
        for e in &self.episodes {
            *m.entry(e.level_id).or_insert(0) += 1;
        }
        m
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::scoring::NormalizationMode;

    pub(crate) fn make_episode(
        id: u64,
        level: u64,
        len: usize,
        score: f64,
        success: bool,
    ) -> Episode {
        let mut ts: Vec<Transition> = (0..len)
            .map(|i| Transition {
                episode_id: id,
                level_id: level,
                step_index: i as u32,
                done: i + 1 == len,
                log_prob_behavior: -1.0,
                ..Transition::default()
            })
            .collect();
        if success {
            ts[len - 1].reward = 0.5;
        }
        fill_mc_returns(&mut ts, 0.99);
        Episode::new(
            ts,
            EpisodeScore {
                s_ext: score,
                s_local: 0.0,
                s_global: 0.0,
                total: score,
                mode: NormalizationMode::Default,
            },
        )
        .unwrap()
    }

    #[test]
    fn first_insert_is_stored() {
        let mut b = RankedBuffer::new(100, None).unwrap();
        let out = b.insert(make_episode(0, 0, 10, 0.3, false)).unwrap();
        assert!(out.stored && out.evicted.is_empty() && out.rejected.is_none());
        assert_eq!(b.len_transitions(), 10);
        assert_eq!(b.all_transitions().len(), 10);
        let v = b.all_transitions();
        for i in 0..10 {
            assert_eq!(v.get(i).step_index, i as u32);
        }
    }

    #[test]
    fn empty_buffer_views() {
        let b = RankedBuffer::new(10, None).unwrap();
        assert_eq!(b.all_transitions().len(), 0);
        assert!(b.success_subset().is_empty());
    }

    #[test]
    fn oversized_episode_is_refused() {
        let mut b = RankedBuffer::new(5, None).unwrap();
        assert!(matches!(
            b.insert(make_episode(0, 0, 6, 1.0, false)),
            Err(Error::EpisodeTooLong {
                len: 6,
                capacity: 5
            })
        ));
    }

    #[test]
    fn lowest_new_episode_is_rejected() {
        let mut b = RankedBuffer::new(10, None).unwrap();
        b.insert(make_episode(0, 0, 6, 0.9, false)).unwrap();
        let out = b.insert(make_episode(1, 0, 6, 0.1, false)).unwrap();
        assert!(!out.stored);
        assert_eq!(out.rejected.unwrap().episode_id, 1);
        assert!(out.evicted.is_empty());
    }

    #[test]
    fn newer_wins_ties() {
        let mut b = RankedBuffer::new(10, None).unwrap();
        b.insert(make_episode(0, 0, 6, 0.5, false)).unwrap();
        let out = b.insert(make_episode(1, 0, 6, 0.5, false)).unwrap();
        assert!(out.stored);
        assert_eq!(out.evicted[0].episode_id, 0);
    }

    #[test]
    fn quota_replaces_worse_episode_of_same_level() {
        let mut b = RankedBuffer::new(100, Some(1)).unwrap();
        b.insert(make_episode(0, 5, 4, 0.3, false)).unwrap();
        let out = b.insert(make_episode(1, 5, 4, 0.7, false)).unwrap();
        assert!(out.stored);
        assert_eq!(out.evicted.len(), 1);
        assert_eq!(b.len_episodes(), 1);
        assert_eq!(b.episode(0).score.total, 0.7);
        let out = b.insert(make_episode(2, 5, 4, 0.2, false)).unwrap();
        assert!(!out.stored);
        assert_eq!(b.episode(0).episode_id, 1);
    }

    #[test]
    fn success_subset_selects_positive_returns() {
        let mut b = RankedBuffer::new(100, None).unwrap();
        b.insert(make_episode(0, 0, 3, 0.1, false)).unwrap();
        b.insert(make_episode(1, 1, 4, 0.2, true)).unwrap();
        b.insert(make_episode(2, 2, 5, 0.3, false)).unwrap();
        let v = b.success_subset();
        assert_eq!(v.len(), 4);
        assert!(v.iter().all(|t| t.episode_id == 1));
    }

    #[test]
    fn episode_validation() {
        let mut ts = make_episode(0, 0, 3, 0.0, false).transitions;
        ts[0].done = true;
        let score = make_episode(0, 0, 3, 0.0, false).score;
        assert!(Episode::new(ts.clone(), score).is_err());
        ts[0].done = false;
        ts[1].episode_id = 9;
        assert!(Episode::new(ts, score).is_err());
        assert!(Episode::new(Vec::new(), score).is_err());
    }

    #[test]
    fn mc_returns_follow_recursion() {
        let e = make_episode(0, 0, 5, 0.0, true);
        let ts = &e.transitions;
        assert_eq!(ts[4].mc_return, 0.5);
        for t in 0..4 {
            assert!((ts[t].mc_return - (ts[t].reward + 0.99 * ts[t + 1].mc_return)).abs() < 1e-15);
        }
    }

    #[test]
    fn snapshot_round_trips_through_json() {
        let mut b = RankedBuffer::new(100, Some(2)).unwrap();
        for i in 0..5 {
            b.insert(make_episode(i, i % 2, 3, i as f64 * 0.1, i == 3))
                .unwrap();
        }
        let snap = b.snapshot();
        let back: BufferSnapshot =
            serde_json::from_str(&serde_json::to_string(&snap).unwrap()).unwrap();
        assert_eq!(snap, back);
        assert!(back.level_counts().values().all(|&c| c <= 2));
    }
}
