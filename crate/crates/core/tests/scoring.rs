mod common;

use std::collections::HashSet;

use proptest::prelude::*;

use common::{counts_table, obs};
use selfil::replay::Transition;
use selfil::scoring::{
    normalize_return, s_global, s_local, score_episode, LevelInfo, NormalizationMode, ScoreWeights,
};

fn steps(tags: &[u16], rewards: &[f64]) -> Vec<Transition> {
    tags.iter()
        .zip(rewards)
        .enumerate()
        .map(|(i, (&t, &r))| Transition {
            obs: obs(t),
            next_obs: obs(t + 1),
            reward: r,
            done: i + 1 == tags.len(),
            ..Transition::default()
        })
        .collect()
}

/// Straightforward second implementation of the score.
fn reference_score(
    tags: &[u16],
    rewards: &[f64],
    counts: &[u64],
    w: (f64, f64, f64),
    gamma: f64,
) -> f64 {
    let mut ext = 0.0;
    for (k, r) in rewards.iter().enumerate() {
        ext += gamma.powi(k as i32) * r;
    }
    let distinct: HashSet<u16> = tags.iter().copied().collect();
    let local = distinct.len() as f64 / tags.len() as f64;
    let global = tags
        .iter()
        .map(|&t| 1.0 / (counts[t as usize] as f64).sqrt())
        .sum::<f64>()
        / tags.len() as f64;
    w.0 * ext + w.1 * local + w.2 * global
}

fn episode_strategy() -> impl Strategy<Value = (Vec<u16>, Vec<f64>, Vec<u64>)> {
    (1usize..40).prop_flat_map(|len| {
        (
            prop::collection::vec(0u16..10, len),
            prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], len),
            prop::collection::vec(1u64..50, 10),
        )
    })
}

const LEVEL: LevelInfo = LevelInfo {
    optimal_steps: 12,
    max_steps: 80,
};

proptest! {
    #[test]
    fn score_equals_recomputed_weighted_sum(
        (tags, rewards, counts) in episode_strategy(),
        w in (0.0f64..2.0, 0.0f64..2.0, 0.0f64..2.0),
        gamma in 0.9f64..=1.0,
    ) {
        let ep = steps(&tags, &rewards);
        let table = counts_table(&counts);
        let weights = ScoreWeights { w_ext: w.0, w_local: w.1, w_global: w.2 };
        let s = score_episode(&ep, &weights, &table, gamma, NormalizationMode::Default, LEVEL).unwrap();
        let want = reference_score(&tags, &rewards, &counts, w, gamma);
        prop_assert!((s.total - want).abs() <= 1e-12 * want.abs().max(1.0), "{} vs {}", s.total, want);
    }

    #[test]
    fn scaling_weights_scales_the_score(
        (tags, rewards, counts) in episode_strategy(),
        w in (0.0f64..2.0, 0.0f64..2.0, 0.0f64..2.0),
        a in 0.01f64..100.0,
    ) {
        let ep = steps(&tags, &rewards);
        let table = counts_table(&counts);
        let base = ScoreWeights { w_ext: w.0, w_local: w.1, w_global: w.2 };
        let scaled = ScoreWeights { w_ext: a * w.0, w_local: a * w.1, w_global: a * w.2 };
        for mode in [NormalizationMode::Default, NormalizationMode::Normalized, NormalizationMode::NormalizedFlex] {
            let s0 = score_episode(&ep, &base, &table, 1.0, mode, LEVEL).unwrap().total;
            let s1 = score_episode(&ep, &scaled, &table, 1.0, mode, LEVEL).unwrap().total;
            prop_assert!((s1 - a * s0).abs() <= 1e-12 * (a * s0).abs().max(1.0));
        }
    }

    #[test]
    fn local_diversity_is_bounded(tags in prop::collection::vec(0u16..6, 1..50)) {
        let ep = steps(&tags, &vec![0.0; tags.len()]);
        let s = s_local(&ep);
        prop_assert!(s >= 1.0 / tags.len() as f64 && s <= 1.0);
    }

    #[test]
    fn global_novelty_falls_when_a_count_rises(
        tags in prop::collection::vec(0u16..8, 1..30),
        counts in prop::collection::vec(1u64..20, 8),
        bump in 0usize..30,
    ) {
        let ep = steps(&tags, &vec![0.0; tags.len()]);
        let before = s_global(&ep, &counts_table(&counts)).unwrap();
        let mut more = counts.clone();
        more[tags[bump % tags.len()] as usize] += 1;
        let after = s_global(&ep, &counts_table(&more)).unwrap();
        prop_assert!(after < before);
    }

    #[test]
    fn flex_never_scores_a_success_below_normalized(
        optimal in 1u32..60,
        extra in 0u32..100,
        max in 60u32..300,
    ) {
        let steps_taken = (optimal + extra).min(max);
        let level = LevelInfo { optimal_steps: optimal, max_steps: max };
        let g = 1.0 - 0.9 * steps_taken as f64 / max as f64;
        let norm = normalize_return(g, steps_taken, level, NormalizationMode::Normalized);
        let flex = normalize_return(g, steps_taken, level, NormalizationMode::NormalizedFlex);
        prop_assert!(flex >= norm);
        if steps_taken - optimal <= 20 {
            prop_assert_eq!(flex, 1.0);
        } else {
            prop_assert_eq!(flex, norm);
        }
        prop_assert_eq!(normalize_return(g, steps_taken, level, NormalizationMode::Default), g);
    }
}

#[test]
fn normalized_is_one_at_the_optimum() {
    for (optimal, max) in [(7, 40), (25, 80), (60, 288), (1, 20)] {
        let level = LevelInfo {
            optimal_steps: optimal,
            max_steps: max,
        };
        let g = 1.0 - 0.9 * optimal as f64 / max as f64;
        assert_eq!(
            normalize_return(g, optimal, level, NormalizationMode::Normalized),
            1.0
        );
    }
}

#[test]
fn flex_bracket_edges() {
    let level = LevelInfo {
        optimal_steps: 10,
        max_steps: 100,
    };
    let g = |t: u32| 1.0 - 0.9 * t as f64 / 100.0;
    let flex = |t: u32| normalize_return(g(t), t, level, NormalizationMode::NormalizedFlex);
    let norm = |t: u32| normalize_return(g(t), t, level, NormalizationMode::Normalized);
    assert_eq!(flex(25), 1.0);
    assert_eq!(flex(30), 1.0);
    assert!(flex(31) < 1.0);
    assert_eq!(flex(31), norm(31));
    assert_eq!(
        normalize_return(0.0, 40, level, NormalizationMode::NormalizedFlex),
        0.0
    );
}
