//! Browser bindings: level viewer, a step-by-step playground and a replay
//! sampling explorer. Every export returns JSON text so the page needs no
//! generated glue types.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use selfil::gridworld::{
    generate_level, optimal_solution, render_ascii_cropped, Action, EnvState, Level, Task,
};
use selfil::sampling::{entropy, probabilities, sample_indices};

fn task_for(name: &str, rooms: usize, size: usize) -> Result<Task, String> {
    match name {
        "multi-room" => Ok(Task::MultiRoom {
            n_rooms: rooms,
            max_room_size: size,
        }),
        "obstructed-maze-lite" => Ok(Task::ObstructedMazeLite),
        other => Err(format!("unknown task {other:?}")),
    }
}

fn action_name(a: Action) -> &'static str {
    match a {
        Action::TurnLeft => "left",
        Action::TurnRight => "right",
        Action::Forward => "forward",
        Action::Pickup => "pickup",
        Action::Drop => "drop",
        Action::Toggle => "toggle",
        Action::Done => "done",
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct LevelView {
    pub name: String,
    pub level_id: u64,
    pub ascii: String,
    pub optimal_steps: u32,
    pub max_steps: u32,
    pub solution: Vec<&'static str>,
}

pub fn level_view(task: &str, rooms: usize, size: usize, seed: u64) -> Result<LevelView, String> {
    let task = task_for(task, rooms, size)?;
    let level = generate_level(task, seed).map_err(|e| e.to_string())?;
    let path = optimal_solution(&level).map_err(|e| e.to_string())?;
    Ok(LevelView {
        name: task.to_string(),
        level_id: seed,
        ascii: render_ascii_cropped(&level, &level.grid, Some(level.agent_start)),
        optimal_steps: level.optimal_steps,
        max_steps: level.max_steps,
        solution: path.into_iter().map(action_name).collect(),
    })
}

/// Generates a level and returns its map, optimal length and oracle path.
#[wasm_bindgen(js_name = renderLevel)]
pub fn render_level(task: &str, rooms: usize, size: usize, seed: u64) -> Result<String, String> {
    to_json(&level_view(task, rooms, size, seed)?)
}

#[derive(Debug, Serialize)]
pub struct Frame {
    pub ascii: String,
    pub steps: u32,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// A single episode driven by button presses.
#[wasm_bindgen]
pub struct Playground {
    level: Arc<Level>,
    env: EnvState,
    last_reward: f64,
}

#[wasm_bindgen]
impl Playground {
    #[wasm_bindgen(constructor)]
    pub fn new(task: &str, rooms: usize, size: usize, seed: u64) -> Result<Playground, String> {
        let task = task_for(task, rooms, size)?;
        let level = Arc::new(generate_level(task, seed).map_err(|e| e.to_string())?);
        Ok(Playground {
            env: EnvState::new(level.clone()),
            level,
            last_reward: 0.0,
        })
    }

    /// Applies action `0..7` (left, right, forward, pickup, drop, toggle,
    /// done) and returns the new frame. Actions after the end are ignored.
    pub fn step(&mut self, action: usize) -> Result<String, String> {
        if !self.env.is_done() {
            let r = self.env.step(action).map_err(|e| e.to_string())?;
            self.last_reward = r.reward;
        }
        self.frame()
    }

    pub fn reset(&mut self) -> Result<String, String> {
        self.env = EnvState::new(self.level.clone());
        self.last_reward = 0.0;
        self.frame()
    }

    pub fn frame(&self) -> Result<String, String> {
        to_json(&self.frame_data())
    }
}

impl Playground {
    pub fn frame_data(&self) -> Frame {
        Frame {
            ascii: render_ascii_cropped(&self.level, self.env.grid(), Some(self.env.agent())),
            steps: self.env.step_count(),
            reward: self.last_reward,
            done: self.env.is_done(),
            success: self.env.succeeded(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SamplingView {
    pub probabilities: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub l1: f64,
    pub entropy: f64,
}

pub fn sampling_view(
    priorities: &[f64],
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<SamplingView, String> {
    let probs = probabilities(priorities, alpha).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0usize; probs.len()];
    for i in sample_indices(&probs, draws, &mut rng) {
        hits[i] += 1;
    }
    let frequencies: Vec<f64> = hits
        .iter()
        .map(|&h| h as f64 / draws.max(1) as f64)
        .collect();
    let l1 = probs
        .iter()
        .zip(&frequencies)
        .map(|(p, f)| (p - f).abs())
        .sum();
    Ok(SamplingView {
        entropy: entropy(&probs),
        probabilities: probs,
        frequencies,
        l1,
    })
}

/// Turns comma-separated priorities into sampling probabilities at
/// exponent `alpha` and compares them with `draws` seeded samples.
#[wasm_bindgen(js_name = samplingDemo)]
pub fn sampling_demo(
    priorities: &str,
    alpha: f64,
    draws: usize,
    seed: u64,
) -> Result<String, String> {
    let p = priorities
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
        .collect::<Result<Vec<_>, _>>()?;
    if p.is_empty() {
        return Err("no priorities given".into());
    }
    to_json(&sampling_view(&p, alpha, draws, seed)?)
}
