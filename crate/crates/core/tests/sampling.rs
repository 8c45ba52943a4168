mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{
    counts_table, episode_with, nonzero_return_scan, positive_advantage_scan, random_buffer,
    unique_states_scan, view_keys, TagValue,
};
use selfil::intrinsic::CountTable;
use selfil::replay::RankedBuffer;
use selfil::sampling::{
    apply_filter, probabilities, sample, sample_indices, PriorityConfig, PriorityProxy,
    ReplayFilter,
};

const FILTERS: [ReplayFilter; 4] = [
    ReplayFilter::None,
    ReplayFilter::NonZeroReturn,
    ReplayFilter::PositiveAdvantage,
    ReplayFilter::UniqueStates,
];

proptest! {
    #[test]
    fn probabilities_sum_to_one(
        p in prop::collection::vec(1e-6f64..1e3, 1..200),
        alpha in 0.0f64..=1.0,
    ) {
        let probs = probabilities(&p, alpha).unwrap();
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "sum {}", total);
        prop_assert!(probs.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn larger_priority_means_larger_probability(
        p in prop::collection::vec(1e-3f64..10.0, 2..50),
        alpha in 0.05f64..=1.0,
    ) {
        let probs = probabilities(&p, alpha).unwrap();
        let flat = probabilities(&p, 0.0).unwrap();
        for i in 0..p.len() {
            for j in 0..p.len() {
                if p[i] > p[j] {
                    prop_assert!(probs[i] > probs[j]);
                }
                prop_assert_eq!(flat[i], flat[j]);
            }
        }
    }

    #[test]
    fn filters_are_idempotent(seed in any::<u64>(), p_success in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_buffer(&mut rng, 15, p_success);
        for f in FILTERS {
            let once = apply_filter(b.all_transitions(), f, &TagValue).unwrap();
            let keys = view_keys(&once);
            let twice = apply_filter(once, f, &TagValue).unwrap();
            prop_assert_eq!(keys, view_keys(&twice), "{:?}", f);
        }
    }

    #[test]
    fn unique_states_keeps_one_per_distinct_next_obs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_buffer(&mut rng, 20, 0.3);
        let view = apply_filter(b.all_transitions(), ReplayFilter::UniqueStates, &TagValue).unwrap();
        for e in b.episodes() {
            let distinct: HashSet<_> = e.transitions.iter().map(|t| t.next_obs).collect();
            let kept = view.iter().filter(|t| t.episode_id == e.episode_id).count();
            prop_assert_eq!(kept, distinct.len());
        }
        prop_assert_eq!(view_keys(&view), unique_states_scan(&b));
    }

    #[test]
    fn filters_match_direct_scans(seed in any::<u64>(), p_success in 0.0f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_buffer(&mut rng, 12, p_success);
        let nz = apply_filter(b.all_transitions(), ReplayFilter::NonZeroReturn, &TagValue).unwrap();
        prop_assert_eq!(view_keys(&nz), nonzero_return_scan(&b));
        let pa = apply_filter(b.all_transitions(), ReplayFilter::PositiveAdvantage, &TagValue).unwrap();
        prop_assert_eq!(view_keys(&pa), positive_advantage_scan(&b, &TagValue));
    }

    #[test]
    fn nonzero_return_samples_only_successes(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = random_buffer(&mut rng, 15, 0.2);
        b.insert(episode_with(1000, 0, &[1, 2, 3], 0.8, 0.5)).unwrap();
        let mut counts = CountTable::new();
        for t in b.all_transitions().iter() {
            counts.record(&t.obs);
        }
        let view = apply_filter(b.all_transitions(), ReplayFilter::NonZeroReturn, &TagValue).unwrap();
        for proxy in [PriorityProxy::Uniform, PriorityProxy::Novelty, PriorityProxy::TdError, PriorityProxy::LogLikelihood] {
            let cfg = PriorityConfig { proxy, alpha, ..PriorityConfig::default() };
            let batch = sample(&view, 64, &cfg, &TagValue, &counts, 0.99, &mut rng).unwrap();
            for &i in &batch.indices {
                prop_assert!(view.episode_of(i).ext_return > 0.0);
            }
        }
    }
}

#[test]
fn small_worked_examples() {
    assert_eq!(probabilities(&[1.0; 4], 0.37).unwrap(), vec![0.25; 4]);
    let p = probabilities(&[4.0, 1.0], 1.0).unwrap();
    assert!((p[0] - 0.8).abs() < 1e-15 && (p[1] - 0.2).abs() < 1e-15);
    let p = probabilities(&[4.0, 1.0], 0.5).unwrap();
    assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn empirical_frequencies_track_the_distribution() {
    let p = probabilities(&[3.0, 2.0, 1.0], 0.6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 100_000;
    let mut hits = [0usize; 3];
    for i in sample_indices(&p, n, &mut rng) {
        hits[i] += 1;
    }
    let l1: f64 = (0..3)
        .map(|i| (hits[i] as f64 / n as f64 - p[i]).abs())
        .sum();
    assert!(l1 < 0.01, "L1 {l1}");
}

#[test]
fn filter_examples() {
    // next observations a, b, a
    let mut b = RankedBuffer::new(100, None).unwrap();
    b.insert(episode_with(0, 0, &[1, 2, 1], 0.0, 0.5)).unwrap();
    let view = apply_filter(b.all_transitions(), ReplayFilter::UniqueStates, &TagValue).unwrap();
    assert_eq!(view_keys(&view), vec![(0, 0), (0, 1)]);

    // failures only: NonZeroReturn falls back to everything
    let view = apply_filter(b.all_transitions(), ReplayFilter::NonZeroReturn, &TagValue).unwrap();
    assert_eq!(view.len(), 3);

    struct Zero;
    impl selfil::policy::ActorCritic for Zero {
        fn action_log_prob(
            &self,
            _: &selfil::gridworld::Observation,
            _: usize,
        ) -> selfil::Result<f64> {
            Ok(-(7f64.ln()))
        }
        fn value(&self, _: &selfil::gridworld::Observation) -> selfil::Result<f64> {
            Ok(0.0)
        }
    }
    b.insert(episode_with(1, 1, &[4, 5, 6, 7], 0.9, 0.9))
        .unwrap();
    let view = apply_filter(b.all_transitions(), ReplayFilter::PositiveAdvantage, &Zero).unwrap();
    assert_eq!(view_keys(&view), vec![(1, 0), (1, 1), (1, 2), (1, 3)]);
    let view = apply_filter(b.all_transitions(), ReplayFilter::NonZeroReturn, &Zero).unwrap();
    assert_eq!(view.len(), 4);

    let empty = RankedBuffer::new(10, None).unwrap();
    let counts = counts_table(&[]);
    let batch = sample(
        &empty.all_transitions(),
        8,
        &PriorityConfig::default(),
        &Zero,
        &counts,
        0.99,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert!(batch.indices.is_empty());
}
