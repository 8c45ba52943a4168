//! Procedurally generated sparse-reward gridworlds.
//!
//! Two task families are provided: a chain of rooms joined by closed doors
//! ([`Task::MultiRoom`]) and a two-room maze whose locked door is blocked by a
//! ball and whose key is hidden in a box ([`Task::ObstructedMazeLite`]).
//! Levels are a pure function of `(task, level_id)`; the agent sees a 7x7
//! egocentric window encoded as `(object, color, state)` triples.

mod env;
mod level;
mod oracle;
mod render;

pub use env::{observe_world, success_return, EnvState, StepInfo, StepResult};
pub use level::{generate_level, Level, Objective, Task, MAX_GENERATION_ATTEMPTS_PER_ROOM};
pub use oracle::{optimal_solution, optimal_steps};
pub use render::{render_ascii, render_ascii_cropped};

use serde::{Deserialize, Serialize};

/// Side of the egocentric view window.
pub const VIEW_SIZE: usize = 7;
/// Number of bytes in an encoded observation (7 x 7 x 3).
pub const OBS_LEN: usize = VIEW_SIZE * VIEW_SIZE * 3;
/// Size of the discrete action set.
pub const NUM_ACTIONS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    Forward = 2,
    Pickup = 3,
    Drop = 4,
    Toggle = 5,
    Done = 6,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::Forward,
        Action::Pickup,
        Action::Drop,
        Action::Toggle,
        Action::Done,
    ];

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red = 0,
    Green = 1,
    Blue = 2,
    Purple = 3,
    Yellow = 4,
    Grey = 5,
}

impl Color {
    pub const ALL: [Color; 6] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Purple,
        Color::Yellow,
        Color::Grey,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoorState {
    Open,
    Closed,
    Locked,
}

/// Contents of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Cell {
    Empty,
    Wall,
    Door {
        color: Color,
        state: DoorState,
    },
    Key {
        color: Color,
    },
    Ball {
        color: Color,
    },
    /// A fixed container; toggling it replaces the box with its contents.
    Box {
        color: Color,
        contents: Option<Color>,
    },
    Goal,
}

// Object ids of the compact encoding.
pub const OBJ_UNSEEN: u8 = 0;
pub const OBJ_EMPTY: u8 = 1;
pub const OBJ_WALL: u8 = 2;
pub const OBJ_DOOR: u8 = 4;
pub const OBJ_KEY: u8 = 5;
pub const OBJ_BALL: u8 = 6;
pub const OBJ_BOX: u8 = 7;
pub const OBJ_GOAL: u8 = 8;

impl Cell {
    /// `(object-id, color-id, state-id)` triple used by observations.
    pub fn encode(self) -> [u8; 3] {
        match self {
            Cell::Empty => [OBJ_EMPTY, 0, 0],
            Cell::Wall => [OBJ_WALL, Color::Grey.id(), 0],
            Cell::Door { color, state } => {
                let s = match state {
                    DoorState::Open => 0,
                    DoorState::Closed => 1,
                    DoorState::Locked => 2,
                };
                [OBJ_DOOR, color.id(), s]
            }
            Cell::Key { color } => [OBJ_KEY, color.id(), 0],
            Cell::Ball { color } => [OBJ_BALL, color.id(), 0],
            Cell::Box { color, .. } => [OBJ_BOX, color.id(), 0],
            Cell::Goal => [OBJ_GOAL, Color::Green.id(), 0],
        }
    }

    /// Whether the agent may stand on this cell.
    pub fn can_overlap(self) -> bool {
        matches!(
            self,
            Cell::Empty
                | Cell::Goal
                | Cell::Door {
                    state: DoorState::Open,
                    ..
                }
        )
    }

    /// Whether light passes through this cell.
    pub fn see_behind(self) -> bool {
        match self {
            Cell::Wall => false,
            Cell::Door { state, .. } => state == DoorState::Open,
            _ => true,
        }
    }
}

/// Something the agent can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Item {
    Key { color: Color },
    Ball { color: Color },
}

impl Item {
    pub fn as_cell(self) -> Cell {
        match self {
            Item::Key { color } => Cell::Key { color },
            Item::Ball { color } => Cell::Ball { color },
        }
    }

    fn from_cell(cell: Cell) -> Option<Item> {
        match cell {
            Cell::Key { color } => Some(Item::Key { color }),
            Cell::Ball { color } => Some(Item::Ball { color }),
            _ => None,
        }
    }
}

/// Agent position and heading. `dir`: 0 = east, 1 = south, 2 = west, 3 = north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub x: usize,
    pub y: usize,
    pub dir: u8,
}

const DIR_VEC: [(isize, isize); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

impl Pose {
    pub fn forward_cell(self) -> (isize, isize) {
        let (dx, dy) = DIR_VEC[self.dir as usize];
        (self.x as isize + dx, self.y as isize + dy)
    }
}

/// 7x7x3 egocentric observation, flattened row-major (far row first,
/// agent in the bottom row, centre column).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation(pub [u8; OBS_LEN]);

impl Observation {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    /// Triple at view row `row` (0 = farthest) and column `col`.
    pub fn cell(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * VIEW_SIZE + col) * 3;
        [self.0[i], self.0[i + 1], self.0[i + 2]]
    }
}

impl std::fmt::Debug for Observation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Observation [")?;
        for row in 0..VIEW_SIZE {
            let cells: Vec<String> = (0..VIEW_SIZE)
                .map(|c| {
                    let [o, k, s] = self.cell(row, c);
                    format!("{o}{k}{s}")
                })
                .collect();
            writeln!(f, "  {}", cells.join(" "))?;
        }
        write!(f, "]")
    }
}

impl Default for Observation {
    fn default() -> Self {
        Observation([0; OBS_LEN])
    }
}

impl Serialize for Observation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Observation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<u8>::deserialize(d)?;
        let arr: [u8; OBS_LEN] = v
            .try_into()
            .map_err(|v: Vec<u8>| serde::de::Error::invalid_length(v.len(), &"147 bytes"))?;
        Ok(Observation(arr))
    }
}
