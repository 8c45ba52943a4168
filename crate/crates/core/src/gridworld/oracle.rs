//! Exact shortest solutions by breadth-first search over
//! (pose, carried item, changed cells).

use std::collections::VecDeque;

use fnv::FnvHashMap;

use super::env::apply_action;
use super::{Action, Cell, Item, Level, Pose};
use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash)]
struct Node {
    agent: Pose,
    carrying: Option<Item>,
    /// Cells that differ from the level's initial grid, sorted by index.
    diffs: Vec<(u16, Cell)>,
}

const SEARCH_ACTIONS: [Action; 6] = [
    Action::TurnLeft,
    Action::TurnRight,
    Action::Forward,
    Action::Pickup,
    Action::Drop,
    Action::Toggle,
];

/// Minimum number of actions that completes the level from its start pose.
pub fn optimal_steps(level: &Level) -> Result<u32> {
    optimal_solution(level).map(|p| p.len() as u32)
}

/// One shortest action sequence from the start pose to task completion.
pub fn optimal_solution(level: &Level) -> Result<Vec<Action>> {
    let start = Node {
        agent: level.agent_start,
        carrying: None,
        diffs: Vec::new(),
    };
    let mut nodes: Vec<(Node, usize, Action)> = vec![(start.clone(), usize::MAX, Action::Done)];
    let mut seen: FnvHashMap<Node, ()> = FnvHashMap::default();
    seen.insert(start, ());
    let mut queue = VecDeque::from([0usize]);
    let mut scratch = level.grid.clone();

    while let Some(id) = queue.pop_front() {
        let node = nodes[id].0.clone();
        for &(i, c) in &node.diffs {
            scratch[i as usize] = c;
        }
        for action in SEARCH_ACTIONS {
            let mut agent = node.agent;
            let mut carrying = node.carrying;
            let effect = apply_action(
                &mut scratch,
                level.width,
                level.height,
                level.objective,
                &mut agent,
                &mut carrying,
                action,
            );
            if effect.success {
                let mut path = vec![action];
                let mut cur = id;
                while nodes[cur].1 != usize::MAX {
                    path.push(nodes[cur].2);
                    cur = nodes[cur].1;
                }
                path.reverse();
                return Ok(path);
            }
            let mut diffs = node.diffs.clone();
            if let Some(t) = effect.touched {
                let now = scratch[t];
                scratch[t] = node
                    .diffs
                    .iter()
                    .find(|(i, _)| *i as usize == t)
                    .map(|&(_, c)| c)
                    .unwrap_or(level.grid[t]);
                let t16 = t as u16;
                match diffs.binary_search_by_key(&t16, |&(i, _)| i) {
                    Ok(pos) => {
                        if now == level.grid[t] {
                            diffs.remove(pos);
                        } else {
                            diffs[pos].1 = now;
                        }
                    }
                    Err(pos) => {
                        if now != level.grid[t] {
                            diffs.insert(pos, (t16, now));
                        }
                    }
                }
            }
            let next = Node {
                agent,
                carrying,
                diffs,
            };
            if !seen.contains_key(&next) {
                seen.insert(next.clone(), ());
                nodes.push((next, id, action));
                queue.push_back(nodes.len() - 1);
            }
        }
        for &(i, _) in &node.diffs {
            scratch[i as usize] = level.grid[i as usize];
        }
    }
    Err(Error::Unreachable(level.level_id))
}
