use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use selfil::gridworld::success_return;
use selfil::policy::{Dims, PolicyParams};
use selfil::sampling::{PriorityProxy, ReplayFilter};
use selfil::trainer::{
    read_episodes, read_metrics, train, LevelRegime, RunConfig, Trainer, CHECKPOINT_FILE,
    METRICS_FILE,
};

fn small() -> RunConfig {
    let mut cfg = RunConfig {
        total_steps: 1024,
        rollout_len: 256,
        ..RunConfig::default()
    };
    cfg.ppo.minibatch_size = 64;
    cfg.buffer.capacity = 600;
    cfg.imitation.batch_size = 32;
    cfg
}

#[test]
fn zero_steps_writes_header_and_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.total_steps = 0;
    cfg.seed = 21;
    let out = train(&cfg, dir.path()).unwrap();
    assert_eq!(out.iterations, 0);
    assert!(read_metrics(&dir.path().join(METRICS_FILE))
        .unwrap()
        .is_empty());
    let saved = PolicyParams::load_json(&dir.path().join(CHECKPOINT_FILE)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    rng.set_stream(1);
    assert_eq!(saved, PolicyParams::init(Dims::GRID, &mut rng));
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = small();
    cfg.priority.proxy = PriorityProxy::Novelty;
    cfg.priority.alpha = 0.6;
    cfg.intrinsic.enabled = true;
    train(&cfg, a.path()).unwrap();
    train(&cfg, b.path()).unwrap();
    for f in [
        "metrics.csv",
        "episodes.csv",
        "checkpoint.json",
        "buffer.json",
    ] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let mut other = cfg.clone();
    other.seed = 1;
    let c = tempfile::tempdir().unwrap();
    train(&other, c.path()).unwrap();
    assert_ne!(
        std::fs::read(a.path().join("metrics.csv")).unwrap(),
        std::fs::read(c.path().join("metrics.csv")).unwrap()
    );
}

#[test]
fn no_imitation_is_plain_on_policy_training() {
    let mut cfg = small();
    cfg.imitation.updates_per_iteration = 0;
    let mut t = Trainer::new(cfg).unwrap();
    let mut rows = Vec::new();
    while !t.is_finished() {
        rows.push(t.run_iteration().unwrap());
    }
    assert!(rows.iter().all(|r| r.bc_steps == 0));
    assert!(t.buffer().len_episodes() > 0);
}

#[test]
fn empty_view_skips_imitation() {
    let mut cfg = small();
    cfg.filter = ReplayFilter::PositiveAdvantage;
    cfg.total_steps = 20;
    cfg.rollout_len = 20;
    let mut t = Trainer::new(cfg).unwrap();
    // Too few steps to finish an episode, so the buffer is still empty.
    let row = t.run_iteration().unwrap();
    assert_eq!(row.buffer_episodes, 0);
    assert_eq!(row.bc_steps, 0);
}

#[test]
fn priority_choice_leaves_level_sequence_alone() {
    let mut a = small();
    a.total_steps = 2048;
    let mut b = a.clone();
    b.priority.proxy = PriorityProxy::Novelty;
    b.priority.alpha = 1.0;
    b.filter = ReplayFilter::UniqueStates;
    let mut ta = Trainer::new(a).unwrap();
    let mut tb = Trainer::new(b).unwrap();
    while !ta.is_finished() {
        ta.run_iteration().unwrap();
        tb.run_iteration().unwrap();
    }
    let (la, lb) = (ta.levels_played(), tb.levels_played());
    let n = la.len().min(lb.len());
    assert!(n > 20);
    assert_eq!(la[..n], lb[..n]);
}

#[test]
fn env_steps_count_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.total_steps = 1000; // not a multiple of the rollout length
    train(&cfg, dir.path()).unwrap();
    let rows = read_metrics(&dir.path().join(METRICS_FILE)).unwrap();
    let steps: Vec<u64> = rows.iter().map(|r| r.env_steps).collect();
    assert_eq!(steps, vec![256, 512, 768, 1000]);
    let eps = read_episodes(&dir.path().join("episodes.csv")).unwrap();
    let mut total = 0u64;
    for e in &eps {
        total += e.length as u64;
        assert_eq!(e.env_steps, total);
    }
    assert!(1000 - total < cfg.task.max_steps() as u64);
}

#[test]
fn buffer_holds_extrinsic_reward_only() {
    let mut with = small();
    with.intrinsic.enabled = true;
    with.intrinsic.beta = 1.0;
    let mut without = with.clone();
    without.intrinsic.enabled = false;
    let mut a = Trainer::new(with).unwrap();
    let mut b = Trainer::new(without).unwrap();
    let row = a.run_iteration().unwrap();
    assert!(row.intrinsic_mean > 0.0);
    b.run_iteration().unwrap();
    // Same rollout, same scores: the bonus only changed the update.
    assert_eq!(a.buffer().snapshot(), b.buffer().snapshot());

    while !a.is_finished() {
        a.run_iteration().unwrap();
    }
    for e in a.buffer().episodes() {
        let n = e.len();
        for t in &e.transitions[..n - 1] {
            assert_eq!(t.reward, 0.0);
        }
        let last = &e.transitions[n - 1];
        if last.reward != 0.0 {
            assert_eq!(last.reward, success_return(n as u32, 40));
        }
        assert_eq!(e.score.s_ext, e.ext_return);
    }
}

#[test]
fn fixed_levels_draw_from_the_configured_seeds() {
    let mut cfg = small();
    cfg.levels = LevelRegime::Fixed {
        seeds: vec![3, 5, 8],
    };
    cfg.buffer.quota = Some(2);
    let mut t = Trainer::new(cfg).unwrap();
    while !t.is_finished() {
        t.run_iteration().unwrap();
    }
    assert!(t.levels_played().iter().all(|l| [3, 5, 8].contains(l)));
    for l in [3, 5, 8] {
        assert!(t.levels_played().contains(&l));
    }
    assert!(t.buffer().level_counts().values().all(|&c| c <= 2));
}
