//! Built-in layouts. Each is drawn as a text map and run through the same
//! parser as user map files; doorway labels are attached afterwards.

use super::{Cell, GridSpec};
use crate::error::{Error, Result};

pub const APPLE_REWARD: f64 = 0.05;

/// Center of the left room of `three_rooms`.
pub const ANCHOR_THREE_ROOMS: Cell = Cell::new(2, 5);

const THREE_ROOMS_MAX_STEPS: usize = 500;
const FLYTRAP_MAX_STEPS: usize = 500;
const DISTRACTION_MAX_STEPS: usize = 300;

fn render(grid: &[Vec<char>]) -> String {
    grid.iter()
        .map(|row| row.iter().collect::<String>() + "\n")
        .collect()
}

/// 11 x 17 grid: three 11 x 5 rooms side by side, split by full-height walls
/// at x = 5 and x = 11, each with a one-cell doorway at mid-height.
pub(crate) fn three_rooms() -> GridSpec {
    const H: usize = 11;
    const W: usize = 17;
    let mut grid = vec![vec!['.'; W]; H];
    for (y, row) in grid.iter_mut().enumerate() {
        for x in [5, 11] {
            if y != H / 2 {
                row[x] = '#';
            }
        }
    }
    grid[ANCHOR_THREE_ROOMS.y][ANCHOR_THREE_ROOMS.x] = 'S';
    GridSpec::parse("three_rooms", &render(&grid), THREE_ROOMS_MAX_STEPS)
        .and_then(|s| {
            s.with_doorways(vec![
                ("door_1_2".into(), Cell::new(5, H / 2)),
                ("door_2_3".into(), Cell::new(11, H / 2)),
            ])
        })
        .expect("three_rooms layout is valid")
}

/// Four 9 x 9 rooms in a row. Each dividing wall has a single door in a
/// corner, alternating top and bottom, so consecutive doors sit at opposite
/// corners of a room. The goal is one cell past room 4's door.
pub(crate) fn flytrap() -> GridSpec {
    const ROOM: usize = 9;
    const ROOMS: usize = 4;
    let h = ROOM + 2;
    // border + rooms with their right-hand walls + goal pocket + border
    let w = 1 + ROOMS * (ROOM + 1) + 1 + 1;
    let mut grid = vec![vec!['#'; w]; h];
    for r in 0..ROOMS {
        let x0 = 1 + r * (ROOM + 1);
        for row in grid.iter_mut().take(ROOM + 1).skip(1) {
            for cell in row.iter_mut().skip(x0).take(ROOM) {
                *cell = '.';
            }
        }
    }
    let mut doorways = Vec::new();
    for r in 0..ROOMS {
        let x = (r + 1) * (ROOM + 1);
        let y = if r % 2 == 0 { 1 } else { ROOM };
        grid[y][x] = '.';
        doorways.push((format!("door_{}", r + 1), Cell::new(x, y)));
    }
    let exit = doorways[ROOMS - 1].1;
    grid[exit.y][exit.x + 1] = 'G';
    // start in the middle of room 1
    grid[1 + ROOM / 2][1 + ROOM / 2] = 'S';
    GridSpec::parse("flytrap", &render(&grid), FLYTRAP_MAX_STEPS)
        .and_then(|s| s.with_doorways(doorways))
        .expect("flytrap layout is valid")
}

/// Two corridors leaving a 3 x 3 junction. Each corridor has three
/// sections; a section is a run of corridor with one dead-end stub going up
/// and one going down. The first left section holds four apples, the end of
/// the right corridor holds the +1 terminal.
pub(crate) fn distraction() -> GridSpec {
    const SECTION: usize = 6;
    const SECTIONS: usize = 3;
    const STUB: usize = 3;
    let h = 2 * STUB + 3;
    let mid = STUB + 1;
    let corridor = SECTION * SECTIONS;
    let w = 1 + corridor + 3 + corridor + 1;
    let jx = 1 + corridor; // leftmost junction column
    let mut grid = vec![vec!['#'; w]; h];
    grid[mid][1..w - 1].fill('.');
    for row in &mut grid[mid - 1..=mid + 1] {
        row[jx..jx + 3].fill('.');
    }
    let mut doorways = Vec::new();
    let mut stub_cols = Vec::new();
    for s in 0..SECTIONS {
        // left sections counted outwards from the junction
        let left = jx - 1 - s * SECTION - SECTION / 2;
        let right = jx + 3 + s * SECTION + SECTION / 2;
        stub_cols.push((s, left, right));
        if s > 0 {
            doorways.push((format!("left_entry_{s}"), Cell::new(jx - s * SECTION, mid)));
            doorways.push((format!("right_entry_{s}"), Cell::new(jx + 2 + s * SECTION, mid)));
        }
    }
    for &(_, l, r) in &stub_cols {
        for y in (1..=STUB).chain(mid + 1..=mid + STUB) {
            grid[y][l] = '.';
            grid[y][r] = '.';
        }
    }
    // four apples: the inner two cells of each stub in the first left section
    let (_, l0, _) = stub_cols[0];
    for y in [mid - 2, mid - 1, mid + 1, mid + 2] {
        grid[y][l0] = 'a';
    }
    grid[mid][w - 2] = 'G';
    grid[mid][jx + 1] = 'S';
    doorways.push(("junction_left".into(), Cell::new(jx - 1, mid)));
    doorways.push(("junction_right".into(), Cell::new(jx + 3, mid)));
    GridSpec::parse("distraction", &render(&grid), DISTRACTION_MAX_STEPS)
        .and_then(|s| s.with_doorways(doorways))
        .expect("distraction layout is valid")
}

/// One-row corridor of `n` cells: start at the left end, +1 terminal at the
/// right end.
pub(crate) fn chain(n: usize) -> Result<GridSpec> {
    if n < 2 {
        return Err(Error::InvalidMap("chain needs at least 2 cells".into()));
    }
    let mut row = vec!['.'; n];
    row[0] = 'S';
    row[n - 1] = 'G';
    let text: String = row.into_iter().collect();
    GridSpec::parse(&format!("chain:{n}"), &text, 10 * n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rooms_dimensions() {
        let s = three_rooms();
        assert_eq!((s.width(), s.height()), (17, 11));
        assert_eq!(s.n_cells(), 3 * 11 * 5 + 2);
        assert!(s.terminal_rewards().is_empty());
    }

    #[test]
    fn flytrap_shape() {
        let s = flytrap();
        assert_eq!(s.doorways().len(), 4);
        assert_eq!(s.n_cells(), 4 * 81 + 4 + 1);
        assert_eq!(s.max_steps(), 500);
        assert_eq!(s.terminal_rewards().len(), 1);
    }

    #[test]
    fn distraction_shape() {
        let s = distraction();
        assert_eq!(s.n_apples(), 4);
        assert_eq!(s.max_steps(), 300);
        assert_eq!(s.terminal_rewards().len(), 1);
        assert!(s.step_rewards().values().all(|&r| r == APPLE_REWARD));
    }
}
