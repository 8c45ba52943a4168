use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle;
use super::{Cell, Color, DoorState, Pose};
use crate::error::{Error, Result};

/// Placement budget per room before a seed is declared invalid.
pub const MAX_GENERATION_ATTEMPTS_PER_ROOM: usize = 64;

const MULTIROOM_GRID: usize = 25;
const MIN_ROOM_SIZE: usize = 4;
const OBSTRUCTED_WIDTH: usize = 13;
const OBSTRUCTED_HEIGHT: usize = 7;
const OBSTRUCTED_MAX_STEPS: u32 = 288;
const TARGET_BALL: Color = Color::Blue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Task {
    /// `n_rooms` rooms chained by closed doors; room sides (walls included)
    /// are drawn from `[4, max_room_size]`.
    MultiRoom {
        n_rooms: usize,
        max_room_size: usize,
    },
    /// Two rooms, a locked door blocked by a ball, the key hidden in a box;
    /// the task ends when the agent picks up the blue ball in the far room.
    ObstructedMazeLite,
}

impl Task {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Task::MultiRoom {
                n_rooms,
                max_room_size,
            } => {
                if !(2..=12).contains(&n_rooms) {
                    return Err(Error::InvalidTask(format!(
                        "n_rooms {n_rooms} not in [2, 12]"
                    )));
                }
                if !(4..=10).contains(&max_room_size) {
                    return Err(Error::InvalidTask(format!(
                        "max_room_size {max_room_size} not in [4, 10]"
                    )));
                }
                Ok(())
            }
            Task::ObstructedMazeLite => Ok(()),
        }
    }

    pub fn max_steps(&self) -> u32 {
        match *self {
            Task::MultiRoom { n_rooms, .. } => 20 * n_rooms as u32,
            Task::ObstructedMazeLite => OBSTRUCTED_MAX_STEPS,
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::MultiRoom {
                n_rooms,
                max_room_size,
            } => write!(f, "MultiRoom-N{n_rooms}-S{max_room_size}"),
            Task::ObstructedMazeLite => write!(f, "ObstructedMazeLite"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Objective {
    ReachGoal,
    PickUpBall { color: Color },
}

/// One immutable task instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub level_id: u64,
    pub task: Task,
    pub width: usize,
    pub height: usize,
    /// Row-major cells, index `y * width + x`.
    pub grid: Vec<Cell>,
    pub agent_start: Pose,
    pub objective: Objective,
    pub max_steps: u32,
    pub optimal_steps: u32,
}

impl Level {
    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.grid[y * self.width + x]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Deterministically builds level `level_id` of `task`.
///
/// Fails (always, for the same seed) when no valid layout is found within
/// the placement budget.
pub fn generate_level(task: Task, level_id: u64) -> Result<Level> {
    task.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(level_id);
    let attempts = match task {
        Task::MultiRoom { n_rooms, .. } => MAX_GENERATION_ATTEMPTS_PER_ROOM * n_rooms,
        Task::ObstructedMazeLite => MAX_GENERATION_ATTEMPTS_PER_ROOM * 2,
    };
    for _ in 0..attempts {
        let draft = match task {
            Task::MultiRoom {
                n_rooms,
                max_room_size,
            } => draft_multiroom(&mut rng, level_id, task, n_rooms, max_room_size),
            Task::ObstructedMazeLite => Some(draft_obstructed(&mut rng, level_id, task)),
        };
        let Some(mut level) = draft else { continue };
        match oracle::optimal_steps(&level) {
            Ok(n) if n > 0 && n <= level.max_steps => {
                level.optimal_steps = n;
                return Ok(level);
            }
            _ => continue,
        }
    }
    Err(Error::GenerationFailed {
        task: task.to_string(),
        level_id,
        attempts,
    })
}

#[derive(Debug, Clone, Copy)]
struct Room {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    entry_door: (usize, usize),
}

fn draft_multiroom(
    rng: &mut ChaCha8Rng,
    level_id: u64,
    task: Task,
    n_rooms: usize,
    max_size: usize,
) -> Option<Level> {
    let size = MULTIROOM_GRID;
    let mut rooms = Vec::with_capacity(n_rooms);
    let entry = (
        rng.gen_range(0..size - 2) as isize,
        rng.gen_range(0..size - 2) as isize,
    );
    place_room(rng, n_rooms, &mut rooms, max_size, 2, entry, size);
    if rooms.len() < n_rooms {
        return None;
    }

    let mut grid = vec![Cell::Wall; size * size];
    let mut prev_color: Option<Color> = None;
    for (idx, room) in rooms.iter().enumerate() {
        for y in room.y..room.y + room.h {
            for x in room.x..room.x + room.w {
                let border = x == room.x
                    || y == room.y
                    || x == room.x + room.w - 1
                    || y == room.y + room.h - 1;
                // Interiors never overlap; shared walls may be redrawn.
                if !border {
                    grid[y * size + x] = Cell::Empty;
                }
            }
        }
        if idx > 0 {
            let choices: Vec<Color> = Color::ALL
                .iter()
                .copied()
                .filter(|c| Some(*c) != prev_color)
                .collect();
            let color = choices[rng.gen_range(0..choices.len())];
            let (dx, dy) = room.entry_door;
            grid[dy * size + dx] = Cell::Door {
                color,
                state: DoorState::Closed,
            };
            prev_color = Some(color);
        }
    }

    let first = rooms[0];
    let (ax, ay) = random_interior_cell(rng, &grid, size, first)?;
    let dir = rng.gen_range(0..4u8);
    let last = rooms[n_rooms - 1];
    let mut goal = None;
    for _ in 0..64 {
        let (gx, gy) = random_interior_cell(rng, &grid, size, last)?;
        if (gx, gy) != (ax, ay) {
            goal = Some((gx, gy));
            break;
        }
    }
    let (gx, gy) = goal?;
    grid[gy * size + gx] = Cell::Goal;

    Some(Level {
        level_id,
        task,
        width: size,
        height: size,
        grid,
        agent_start: Pose { x: ax, y: ay, dir },
        objective: super::Objective::ReachGoal,
        max_steps: task.max_steps(),
        optimal_steps: 0,
    })
}

fn random_interior_cell(
    rng: &mut ChaCha8Rng,
    grid: &[Cell],
    width: usize,
    room: Room,
) -> Option<(usize, usize)> {
    for _ in 0..64 {
        let x = rng.gen_range(room.x + 1..room.x + room.w - 1);
        let y = rng.gen_range(room.y + 1..room.y + room.h - 1);
        if grid[y * width + x] == Cell::Empty {
            return Some((x, y));
        }
    }
    None
}

/// Recursive room chaining: each room is attached through a door on a wall
/// other than the one it was entered from. Returns false only when this
/// room itself could not be placed.
fn place_room(
    rng: &mut ChaCha8Rng,
    num_left: usize,
    rooms: &mut Vec<Room>,
    max_size: usize,
    entry_wall: u8,
    entry: (isize, isize),
    grid: usize,
) -> bool {
    let w = rng.gen_range(MIN_ROOM_SIZE..=max_size) as isize;
    let h = rng.gen_range(MIN_ROOM_SIZE..=max_size) as isize;
    let (ex, ey) = entry;
    let (x, y) = if rooms.is_empty() {
        (ex, ey)
    } else {
        match entry_wall {
            0 => (ex - w + 1, rng.gen_range(ey - h + 2..ey)),
            1 => (rng.gen_range(ex - w + 2..ex), ey - h + 1),
            2 => (ex, rng.gen_range(ey - h + 2..ey)),
            _ => (rng.gen_range(ex - w + 2..ex), ey),
        }
    };
    let g = grid as isize;
    if x < 0 || y < 0 || x + w > g || y + h >= g {
        return false;
    }
    let overlaps = rooms.iter().take(rooms.len().saturating_sub(1)).any(|r| {
        let (rx, ry, rw, rh) = (r.x as isize, r.y as isize, r.w as isize, r.h as isize);
        !(x + w < rx || rx + rw <= x || y + h < ry || ry + rh <= y)
    });
    if overlaps {
        return false;
    }
    rooms.push(Room {
        x: x as usize,
        y: y as usize,
        w: w as usize,
        h: h as usize,
        entry_door: (ex as usize, ey as usize),
    });
    if num_left == 1 {
        return true;
    }
    for _ in 0..8 {
        let walls: Vec<u8> = (0..4).filter(|&d| d != entry_wall).collect();
        let exit_wall = walls[rng.gen_range(0..walls.len())];
        let next_entry_wall = (exit_wall + 2) % 4;
        let exit = match exit_wall {
            0 => (x + w - 1, y + rng.gen_range(1..h - 1)),
            1 => (x + rng.gen_range(1..w - 1), y + h - 1),
            2 => (x, y + rng.gen_range(1..h - 1)),
            _ => (x + rng.gen_range(1..w - 1), y),
        };
        if place_room(
            rng,
            num_left - 1,
            rooms,
            max_size,
            next_entry_wall,
            exit,
            grid,
        ) {
            break;
        }
    }
    true
}

fn draft_obstructed(rng: &mut ChaCha8Rng, level_id: u64, task: Task) -> Level {
    let (w, h) = (OBSTRUCTED_WIDTH, OBSTRUCTED_HEIGHT);
    let mid = w / 2;
    let mut grid = vec![Cell::Wall; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            if x != mid {
                grid[y * w + x] = Cell::Empty;
            }
        }
    }
    let door_y = rng.gen_range(1..h - 1);
    let door_color = Color::ALL[rng.gen_range(0..Color::ALL.len())];
    grid[door_y * w + mid] = Cell::Door {
        color: door_color,
        state: DoorState::Locked,
    };
    let blockers: Vec<Color> = Color::ALL
        .iter()
        .copied()
        .filter(|&c| c != TARGET_BALL)
        .collect();
    let blocker = blockers[rng.gen_range(0..blockers.len())];
    grid[door_y * w + mid - 1] = Cell::Ball { color: blocker };

    let free_left = |rng: &mut ChaCha8Rng, grid: &[Cell]| loop {
        let x = rng.gen_range(1..mid);
        let y = rng.gen_range(1..h - 1);
        if grid[y * w + x] == Cell::Empty {
            break (x, y);
        }
    };
    let box_color = Color::ALL[rng.gen_range(0..Color::ALL.len())];
    let (bx, by) = free_left(rng, &grid);
    grid[by * w + bx] = Cell::Box {
        color: box_color,
        contents: Some(door_color),
    };
    let (ax, ay) = free_left(rng, &grid);
    let dir = rng.gen_range(0..4u8);
    let tx = rng.gen_range(mid + 1..w - 1);
    let ty = rng.gen_range(1..h - 1);
    grid[ty * w + tx] = Cell::Ball { color: TARGET_BALL };

    Level {
        level_id,
        task,
        width: w,
        height: h,
        grid,
        agent_start: Pose { x: ax, y: ay, dir },
        objective: Objective::PickUpBall { color: TARGET_BALL },
        max_steps: task.max_steps(),
        optimal_steps: 0,
    }
}
