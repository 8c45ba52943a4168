use super::{Cell, DoorState, Level, Pose};

/// ASCII map of a grid. Legend: `#` wall, `.` floor, `G` goal, `D`/`d`/`L`
/// closed/open/locked door, `K` key, `O` ball, `B` box, `>v<^` agent.
pub fn render_ascii(level: &Level, grid: &[Cell], agent: Option<Pose>) -> String {
    let mut out = String::with_capacity((level.width + 1) * level.height);
    for y in 0..level.height {
        for x in 0..level.width {
            let ch = match agent {
                Some(p) if p.x == x && p.y == y => ['>', 'v', '<', '^'][p.dir as usize],
                _ => glyph(grid[y * level.width + x]),
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

/// As [`render_ascii`], trimmed to the non-wall area plus a one-cell border.
pub fn render_ascii_cropped(level: &Level, grid: &[Cell], agent: Option<Pose>) -> String {
    let full = render_ascii(level, grid, agent);
    let rows: Vec<&[u8]> = full.lines().map(str::as_bytes).collect();
    let open = |x: usize, y: usize| rows[y][x] != b'#';
    let ys: Vec<usize> = (0..level.height)
        .filter(|&y| (0..level.width).any(|x| open(x, y)))
        .collect();
    let xs: Vec<usize> = (0..level.width)
        .filter(|&x| (0..level.height).any(|y| open(x, y)))
        .collect();
    let (Some(&y0), Some(&y1), Some(&x0), Some(&x1)) =
        (ys.first(), ys.last(), xs.first(), xs.last())
    else {
        return full;
    };
    let (y0, x0) = (y0.saturating_sub(1), x0.saturating_sub(1));
    let (y1, x1) = (
        (y1 + 1).min(level.height - 1),
        (x1 + 1).min(level.width - 1),
    );
    let mut out = String::new();
    for row in &rows[y0..=y1] {
        out.push_str(std::str::from_utf8(&row[x0..=x1]).expect("ascii"));
        out.push('\n');
    }
    out
}

fn glyph(cell: Cell) -> char {
    match cell {
        Cell::Empty => '.',
        Cell::Wall => '#',
        Cell::Goal => 'G',
        Cell::Door { state, .. } => match state {
            DoorState::Open => 'd',
            DoorState::Closed => 'D',
            DoorState::Locked => 'L',
        },
        Cell::Key { .. } => 'K',
        Cell::Ball { .. } => 'O',
        Cell::Box { .. } => 'B',
    }
}

#[cfg(test)]
mod tests {
    use super::super::{generate_level, Task};
    use super::*;

    #[test]
    fn renders_one_line_per_row() {
        let level = generate_level(
            Task::MultiRoom {
                n_rooms: 2,
                max_room_size: 4,
            },
            7,
        )
        .unwrap();
        let text = render_ascii(&level, &level.grid, Some(level.agent_start));
        assert_eq!(text.lines().count(), level.height);
        assert!(text.contains('G'));
        assert!(text.contains('D'));
        assert_eq!(text.matches(['>', 'v', '<', '^']).count(), 1);
        let small = render_ascii_cropped(&level, &level.grid, Some(level.agent_start));
        assert!(small.lines().count() < level.height);
        assert!(small.lines().next().unwrap().chars().all(|c| c == '#'));
        assert_eq!(small.matches(['G', 'D']).count(), 2);
    }
}
