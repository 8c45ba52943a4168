//! Observation visitation counts and the count-difference exploration bonus.

use std::hash::Hasher;

use fnv::{FnvHashMap, FnvHasher};
use serde::{Deserialize, Serialize};

use crate::gridworld::Observation;

/// Stable 64-bit FNV-1a hash of the raw observation bytes.
pub fn obs_hash(obs: &Observation) -> u64 {
    let mut h = FnvHasher::default();
    h.write(obs.as_bytes());
    h.finish()
}

/// Lifelong visit counts `N(s)` plus per-episode counts `N_e(s)`.
#[derive(Debug, Clone, Default)]
pub struct CountTable {
    lifelong: FnvHashMap<u64, u64>,
    episodic: FnvHashMap<u64, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountStats {
    pub distinct_states: usize,
    pub max_count: u64,
}

impl CountTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts one visit of `obs` in both tables.
    pub fn record(&mut self, obs: &Observation) {
        let h = obs_hash(obs);
        *self.lifelong.entry(h).or_insert(0) += 1;
        *self.episodic.entry(h).or_insert(0) += 1;
    }

    /// Clears the episodic table; call at every episode boundary.
    pub fn start_episode(&mut self) {
        self.episodic.clear();
    }

    pub fn lifelong(&self, obs: &Observation) -> u64 {
        self.lifelong.get(&obs_hash(obs)).copied().unwrap_or(0)
    }

    pub fn episodic(&self, obs: &Observation) -> u64 {
        self.episodic.get(&obs_hash(obs)).copied().unwrap_or(0)
    }

    pub fn episodic_len(&self) -> usize {
        self.episodic.len()
    }

    pub fn stats(&self) -> CountStats {
        CountStats {
            distinct_states: self.lifelong.len(),
            max_count: self.lifelong.values().copied().max().unwrap_or(0),
        }
    }
}

/// Count-difference bonus
/// `beta * max(1/N(next) - 1/N(obs), 0) * [N_e(next) == 1]`.
///
/// Expects both observations (and the transition into `next_obs`) to have
/// been recorded already. Unrecorded observations earn nothing.
pub fn bebold_reward(
    counts: &CountTable,
    obs: &Observation,
    next_obs: &Observation,
    beta: f64,
) -> f64 {
    let n_next = counts.lifelong(next_obs);
    let n_obs = counts.lifelong(obs);
    if n_next == 0 || n_obs == 0 || counts.episodic(next_obs) != 1 {
        return 0.0;
    }
    let diff = 1.0 / n_next as f64 - 1.0 / n_obs as f64;
    beta * diff.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(tag: u8) -> Observation {
        let mut o = Observation::default();
        o.0[0] = tag;
        o
    }

    #[test]
    fn record_counts_visits() {
        let mut c = CountTable::new();
        c.record(&obs(1));
        assert_eq!(c.lifelong(&obs(1)), 1);
        assert_eq!(c.episodic(&obs(1)), 1);
        c.record(&obs(1));
        assert_eq!(c.lifelong(&obs(1)), 2);
        assert_eq!(c.episodic_len(), 1);
        c.record(&obs(2));
        assert_eq!(c.lifelong(&obs(2)), 1);
        assert_eq!(c.stats().distinct_states, 2);
        assert_eq!(c.stats().max_count, 2);
    }

    #[test]
    fn bonus_arithmetic() {
        let (a, b) = (obs(1), obs(2));
        let mut c = CountTable::new();
        c.record(&a);
        c.record(&a);
        c.record(&b);
        assert_eq!(bebold_reward(&c, &a, &b, 1.0), 0.5);

        // N(next) = 4, N(obs) = 1: clipped at zero.
        let mut c = CountTable::new();
        for _ in 0..3 {
            c.record(&b);
        }
        c.start_episode();
        c.record(&a);
        c.record(&b);
        assert_eq!(c.lifelong(&b), 4);
        assert_eq!(bebold_reward(&c, &a, &b, 1.0), 0.0);
    }

    #[test]
    fn revisits_within_episode_earn_nothing() {
        let (a, b) = (obs(1), obs(2));
        let mut c = CountTable::new();
        for _ in 0..5 {
            c.record(&a);
        }
        c.record(&b);
        c.record(&b);
        assert_eq!(c.episodic(&b), 2);
        assert_eq!(bebold_reward(&c, &a, &b, 1.0), 0.0);
        // A new episode re-arms the indicator.
        c.start_episode();
        c.record(&a);
        c.record(&b);
        assert!(bebold_reward(&c, &a, &b, 1.0) > 0.0);
    }

    #[test]
    fn hash_depends_only_on_bytes() {
        assert_eq!(obs_hash(&obs(3)), obs_hash(&obs(3)));
        assert_ne!(obs_hash(&obs(3)), obs_hash(&obs(4)));
    }
}
