//! Train one agent in-process and print progress every 10 iterations.
//!
//! ```text
//! cargo run --release -p selfil-core --example learn -- [total_steps] [seed]
//! ```

use selfil::trainer::{RunConfig, Trainer};

fn main() -> Result<(), selfil::Error> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    if let Some(steps) = args.next().and_then(|s| s.parse().ok()) {
        cfg.total_steps = steps;
    }
    if let Some(seed) = args.next().and_then(|s| s.parse().ok()) {
        cfg.seed = seed;
    }
    let mut trainer = Trainer::new(cfg)?;
    let start = std::time::Instant::now();
    while !trainer.is_finished() {
        let r = trainer.run_iteration()?;
        if r.iteration % 10 == 0 {
            println!(
                "{:>8} steps  {:>6} episodes  return {:.3}  success {:.2}  buffer {:>4}  {:.1}s",
                r.env_steps,
                r.episodes,
                r.mean_return,
                r.success_rate,
                r.buffer_episodes,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
