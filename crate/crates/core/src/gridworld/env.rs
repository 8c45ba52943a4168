use std::sync::Arc;

use super::{
    Action, Cell, DoorState, Item, Level, Objective, Observation, Pose, NUM_ACTIONS, VIEW_SIZE,
};
use crate::error::{Error, Result};

/// Mutable episode state over one level. Owned by exactly one worker.
#[derive(Debug, Clone)]
pub struct EnvState {
    level: Arc<Level>,
    grid: Vec<Cell>,
    agent: Pose,
    carrying: Option<Item>,
    step_count: u32,
    done: bool,
    success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub level_id: u64,
    pub step_count: u32,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Outcome of applying one action to a world, shared by the simulator and
/// the shortest-path oracle.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Effect {
    /// Cell index whose contents changed, if any.
    pub touched: Option<usize>,
    pub success: bool,
}

pub(crate) fn apply_action(
    grid: &mut [Cell],
    width: usize,
    height: usize,
    objective: Objective,
    agent: &mut Pose,
    carrying: &mut Option<Item>,
    action: Action,
) -> Effect {
    let mut effect = Effect::default();
    let (fx, fy) = agent.forward_cell();
    let fwd = if fx >= 0 && fy >= 0 && (fx as usize) < width && (fy as usize) < height {
        Some(fy as usize * width + fx as usize)
    } else {
        None
    };
    match action {
        Action::TurnLeft => agent.dir = (agent.dir + 3) % 4,
        Action::TurnRight => agent.dir = (agent.dir + 1) % 4,
        Action::Forward => {
            if let Some(i) = fwd {
                if grid[i].can_overlap() {
                    agent.x = fx as usize;
                    agent.y = fy as usize;
                    if grid[i] == Cell::Goal && objective == Objective::ReachGoal {
                        effect.success = true;
                    }
                }
            }
        }
        Action::Pickup => {
            if let (Some(i), None) = (fwd, *carrying) {
                if let Some(item) = Item::from_cell(grid[i]) {
                    *carrying = Some(item);
                    grid[i] = Cell::Empty;
                    effect.touched = Some(i);
                    if let (Objective::PickUpBall { color }, Item::Ball { color: c }) =
                        (objective, item)
                    {
                        effect.success = color == c;
                    }
                }
            }
        }
        Action::Drop => {
            if let (Some(i), Some(item)) = (fwd, *carrying) {
                if grid[i] == Cell::Empty {
                    grid[i] = item.as_cell();
                    *carrying = None;
                    effect.touched = Some(i);
                }
            }
        }
        Action::Toggle => {
            if let Some(i) = fwd {
                let next = match grid[i] {
                    Cell::Door { color, state } => match state {
                        DoorState::Locked => match *carrying {
                            Some(Item::Key { color: k }) if k == color => Some(Cell::Door {
                                color,
                                state: DoorState::Open,
                            }),
                            _ => None,
                        },
                        DoorState::Closed => Some(Cell::Door {
                            color,
                            state: DoorState::Open,
                        }),
                        DoorState::Open => Some(Cell::Door {
                            color,
                            state: DoorState::Closed,
                        }),
                    },
                    Cell::Box { contents, .. } => Some(match contents {
                        Some(color) => Cell::Key { color },
                        None => Cell::Empty,
                    }),
                    _ => None,
                };
                if let Some(c) = next {
                    grid[i] = c;
                    effect.touched = Some(i);
                }
            }
        }
        Action::Done => {}
    }
    effect
}

/// Success reward: `1 - 0.9 * (t / max_steps)`.
pub fn success_return(step_count: u32, max_steps: u32) -> f64 {
    1.0 - 0.9 * (step_count as f64 / max_steps as f64)
}

impl EnvState {
    pub fn new(level: Arc<Level>) -> Self {
        let grid = level.grid.clone();
        let agent = level.agent_start;
        EnvState {
            level,
            grid,
            agent,
            carrying: None,
            step_count: 0,
            done: false,
            success: false,
        }
    }

    pub fn level(&self) -> &Arc<Level> {
        &self.level
    }

    pub fn agent(&self) -> Pose {
        self.agent
    }

    pub fn carrying(&self) -> Option<Item> {
        self.carrying
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn succeeded(&self) -> bool {
        self.success
    }

    pub fn grid(&self) -> &[Cell] {
        &self.grid
    }

    /// Overwrites one cell; used by tests and tooling to build scenarios.
    pub fn set_cell(&mut self, x: usize, y: usize, cell: Cell) {
        let w = self.level.width;
        self.grid[y * w + x] = cell;
    }

    pub fn set_agent(&mut self, pose: Pose) {
        self.agent = pose;
    }

    pub fn observe(&self) -> Observation {
        observe_world(
            &self.grid,
            self.level.width,
            self.level.height,
            self.agent,
            self.carrying,
        )
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        if action >= NUM_ACTIONS {
            return Err(Error::InvalidAction(action));
        }
        let action = Action::ALL[action];
        self.step_count += 1;
        let effect = apply_action(
            &mut self.grid,
            self.level.width,
            self.level.height,
            self.level.objective,
            &mut self.agent,
            &mut self.carrying,
            action,
        );
        let mut reward = 0.0;
        if effect.success {
            reward = success_return(self.step_count, self.level.max_steps);
            self.success = true;
            self.done = true;
        }
        if self.step_count >= self.level.max_steps {
            self.done = true;
        }
        Ok(StepResult {
            obs: self.observe(),
            reward,
            done: self.done,
            info: StepInfo {
                level_id: self.level.level_id,
                step_count: self.step_count,
                success: self.success,
            },
        })
    }
}

/// Encodes the 7x7 window ahead of `agent`. Cells outside the grid read as
/// walls; cells in a wall's shadow read as unseen `(0, 0, 0)`.
pub fn observe_world(
    grid: &[Cell],
    width: usize,
    height: usize,
    agent: Pose,
    carrying: Option<Item>,
) -> Observation {
    let n = VIEW_SIZE;
    let centre = (n / 2) as isize;
    let fwd = super::DIR_VEC[agent.dir as usize];
    let right = super::DIR_VEC[((agent.dir + 1) % 4) as usize];
    let mut view = [[Cell::Wall; VIEW_SIZE]; VIEW_SIZE];
    for (row, line) in view.iter_mut().enumerate() {
        let f = (n - 1 - row) as isize;
        for (col, slot) in line.iter_mut().enumerate() {
            let l = col as isize - centre;
            let x = agent.x as isize + f * fwd.0 + l * right.0;
            let y = agent.y as isize + f * fwd.1 + l * right.1;
            if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                *slot = grid[y as usize * width + x as usize];
            }
        }
    }
    // The agent's own cell shows what it carries.
    view[n - 1][n / 2] = carrying.map(Item::as_cell).unwrap_or(Cell::Empty);

    let visible = visibility(&view);
    let mut out = [0u8; super::OBS_LEN];
    for row in 0..n {
        for col in 0..n {
            if visible[row][col] {
                let i = (row * n + col) * 3;
                out[i..i + 3].copy_from_slice(&view[row][col].encode());
            }
        }
    }
    Observation(out)
}

/// Shadow propagation from the agent's cell towards the far row: light moves
/// sideways and forward through cells that can be seen through.
fn visibility(view: &[[Cell; VIEW_SIZE]; VIEW_SIZE]) -> [[bool; VIEW_SIZE]; VIEW_SIZE] {
    let n = VIEW_SIZE;
    let mut mask = [[false; VIEW_SIZE]; VIEW_SIZE];
    mask[n - 1][n / 2] = true;
    for row in (0..n).rev() {
        for col in 0..n - 1 {
            if !mask[row][col] || !view[row][col].see_behind() {
                continue;
            }
            mask[row][col + 1] = true;
            if row > 0 {
                mask[row - 1][col + 1] = true;
                mask[row - 1][col] = true;
            }
        }
        for col in (1..n).rev() {
            if !mask[row][col] || !view[row][col].see_behind() {
                continue;
            }
            mask[row][col - 1] = true;
            if row > 0 {
                mask[row - 1][col - 1] = true;
                mask[row - 1][col] = true;
            }
        }
    }
    mask
}
