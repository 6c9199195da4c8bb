//! Deterministic four-connected gridworlds with terminal rewards.
//!
//! A [`GridSpec`] is the immutable layout; a [`GridEnv`] is one running
//! episode over it. Tabular state ids enumerate non-wall cells in row-major
//! order, repeated once per "apples collected" count:
//! `state_id = collected * n_cells + cell_index`.

mod layouts;
pub mod oracle;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use layouts::{ANCHOR_THREE_ROOMS, APPLE_REWARD};

pub const NUM_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }
}

/// Grid coordinate; `y = 0` is the top row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Immutable gridworld layout plus the tabular state enumeration.
#[derive(Debug, Clone)]
pub struct GridSpec {
    name: String,
    width: usize,
    height: usize,
    walls: Vec<bool>,
    starts: Vec<Cell>,
    terminal_rewards: BTreeMap<Cell, f64>,
    step_rewards: BTreeMap<Cell, f64>,
    max_steps: usize,
    doorways: Vec<(String, Cell)>,
    // row-major index of each open cell; None for walls
    cell_index: Vec<Option<usize>>,
    cells: Vec<Cell>,
}

impl GridSpec {
    /// Parses a text map: `#` wall, `.` floor, `S` start, `G` terminal (+1),
    /// `a` apple (+0.05, once per episode). One row per line; rows must have
    /// equal length. Several `S` cells mean a uniform draw at reset.
    pub fn parse(name: &str, text: &str, max_steps: usize) -> Result<GridSpec> {
        let rows: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty())
            .collect();
        if rows.is_empty() {
            return Err(Error::InvalidMap("map has no rows".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut walls = vec![false; width * height];
        let mut starts = Vec::new();
        let mut terminal_rewards = BTreeMap::new();
        let mut step_rewards = BTreeMap::new();
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::InvalidMap(format!(
                    "row {y} has length {} (expected {width})",
                    row.chars().count()
                )));
            }
            for (x, ch) in row.chars().enumerate() {
                let cell = Cell::new(x, y);
                match ch {
                    '#' => walls[y * width + x] = true,
                    '.' => {}
                    'S' => starts.push(cell),
                    'G' => {
                        terminal_rewards.insert(cell, 1.0);
                    }
                    'a' => {
                        step_rewards.insert(cell, APPLE_REWARD);
                    }
                    other => {
                        return Err(Error::InvalidMap(format!(
                            "unexpected character {other:?} at ({x}, {y})"
                        )))
                    }
                }
            }
        }
        GridSpec::new(
            name.to_string(),
            width,
            height,
            walls,
            starts,
            terminal_rewards,
            step_rewards,
            max_steps,
            Vec::new(),
        )
    }

    pub fn from_file(path: &Path, max_steps: usize) -> Result<GridSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "map".into());
        GridSpec::parse(&name, &text, max_steps)
    }

    /// Looks up a built-in layout: `three_rooms`, `flytrap`, `distraction`
    /// or `chain:<n>`.
    pub fn builtin(name: &str) -> Result<GridSpec> {
        match name {
            "three_rooms" => Ok(layouts::three_rooms()),
            "flytrap" => Ok(layouts::flytrap()),
            "distraction" => Ok(layouts::distraction()),
            _ => match name.strip_prefix("chain:") {
                Some(n) => {
                    let n: usize = n
                        .parse()
                        .map_err(|_| Error::UnknownEnv(name.to_string()))?;
                    layouts::chain(n)
                }
                None => Err(Error::UnknownEnv(name.to_string())),
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        name: String,
        width: usize,
        height: usize,
        walls: Vec<bool>,
        starts: Vec<Cell>,
        terminal_rewards: BTreeMap<Cell, f64>,
        step_rewards: BTreeMap<Cell, f64>,
        max_steps: usize,
        doorways: Vec<(String, Cell)>,
    ) -> Result<GridSpec> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMap("empty grid".into()));
        }
        if max_steps == 0 {
            return Err(Error::InvalidMap("max_steps must be positive".into()));
        }
        let mut cell_index = vec![None; width * height];
        let mut cells = Vec::new();
        for y in 0..height {
            for x in 0..width {
                if !walls[y * width + x] {
                    cell_index[y * width + x] = Some(cells.len());
                    cells.push(Cell::new(x, y));
                }
            }
        }
        let spec = GridSpec {
            name,
            width,
            height,
            walls,
            starts,
            terminal_rewards,
            step_rewards,
            max_steps,
            doorways,
            cell_index,
            cells,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.starts.is_empty() {
            return Err(Error::InvalidMap("no start cell".into()));
        }
        for &s in &self.starts {
            if self.is_wall(s) {
                return Err(Error::InvalidMap(format!("start {s} is a wall")));
            }
            if self.terminal_rewards.contains_key(&s) {
                return Err(Error::InvalidMap(format!("start {s} is terminal")));
            }
        }
        let reach = self.reachable_from(&self.starts);
        for c in self.terminal_rewards.keys().chain(self.step_rewards.keys()) {
            if !reach.contains(c) {
                return Err(Error::InvalidMap(format!(
                    "reward cell {c} unreachable from start"
                )));
            }
        }
        for (label, c) in &self.doorways {
            if self.is_wall(*c) {
                return Err(Error::InvalidMap(format!("doorway {label} at {c} is a wall")));
            }
        }
        Ok(())
    }

    fn reachable_from(&self, sources: &[Cell]) -> BTreeSet<Cell> {
        let mut seen: BTreeSet<Cell> = sources.iter().copied().collect();
        let mut queue: VecDeque<Cell> = sources.iter().copied().collect();
        while let Some(c) = queue.pop_front() {
            for a in Action::ALL {
                let n = self.move_from(c, a);
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    pub(crate) fn with_doorways(mut self, doorways: Vec<(String, Cell)>) -> Result<Self> {
        self.doorways = doorways;
        self.validate()?;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn set_max_steps(&mut self, max_steps: usize) {
        assert!(max_steps > 0, "max_steps must be positive");
        self.max_steps = max_steps;
    }

    pub fn starts(&self) -> &[Cell] {
        &self.starts
    }

    pub fn terminal_rewards(&self) -> &BTreeMap<Cell, f64> {
        &self.terminal_rewards
    }

    pub fn step_rewards(&self) -> &BTreeMap<Cell, f64> {
        &self.step_rewards
    }

    /// Labeled bottleneck cells. Oracle metadata only; dynamics ignore it.
    pub fn doorways(&self) -> &[(String, Cell)] {
        &self.doorways
    }

    pub fn is_doorway(&self, c: Cell) -> bool {
        self.doorways.iter().any(|(_, d)| *d == c)
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        c.x >= self.width || c.y >= self.height || self.walls[c.y * self.width + c.x]
    }

    pub fn is_terminal(&self, c: Cell) -> bool {
        self.terminal_rewards.contains_key(&c)
    }

    /// Open cells in row-major order.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_apples(&self) -> usize {
        self.step_rewards.len()
    }

    /// Size of the tabular state space: cells x (apples + 1).
    pub fn n_states(&self) -> usize {
        self.n_cells() * (self.n_apples() + 1)
    }

    pub fn cell_index(&self, c: Cell) -> Option<usize> {
        if c.x >= self.width || c.y >= self.height {
            return None;
        }
        self.cell_index[c.y * self.width + c.x]
    }

    pub fn state_id(&self, c: Cell, collected: usize) -> Option<usize> {
        if collected > self.n_apples() {
            return None;
        }
        self.cell_index(c).map(|i| collected * self.n_cells() + i)
    }

    /// Inverse of [`GridSpec::state_id`]: `(cell, collected)`.
    pub fn decode_state(&self, state_id: usize) -> Option<(Cell, usize)> {
        if state_id >= self.n_states() {
            return None;
        }
        let n = self.n_cells();
        Some((self.cells[state_id % n], state_id / n))
    }

    /// Pure movement dynamics: blocked moves stay put.
    pub fn move_from(&self, c: Cell, a: Action) -> Cell {
        let (dx, dy) = a.delta();
        let nx = c.x as isize + dx;
        let ny = c.y as isize + dy;
        if nx < 0 || ny < 0 {
            return c;
        }
        let n = Cell::new(nx as usize, ny as usize);
        if self.is_wall(n) {
            c
        } else {
            n
        }
    }

    /// Renders the layout back into the text map format.
    pub fn to_map_string(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let c = Cell::new(x, y);
                let ch = if self.is_wall(c) {
                    '#'
                } else if self.starts.contains(&c) {
                    'S'
                } else if self.terminal_rewards.contains_key(&c) {
                    'G'
                } else if self.step_rewards.contains_key(&c) {
                    'a'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvState {
    pub agent_cell: Cell,
    pub steps_elapsed: usize,
    pub collected: BTreeSet<Cell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub state_id: usize,
    pub cell: Cell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// One environment instance. Owned by a single actor.
#[derive(Debug, Clone)]
pub struct GridEnv {
    spec: Arc<GridSpec>,
    state: EnvState,
    done: bool,
    rng: ChaCha8Rng,
}

impl GridEnv {
    pub fn new(spec: Arc<GridSpec>, seed: u64) -> Self {
        let start = spec.starts[0];
        GridEnv {
            spec,
            state: EnvState {
                agent_cell: start,
                steps_elapsed: 0,
                collected: BTreeSet::new(),
            },
            // a fresh env must be reset before stepping
            done: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn spec(&self) -> &Arc<GridSpec> {
        &self.spec
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) -> Observation {
        let starts = &self.spec.starts;
        let start = if starts.len() == 1 {
            starts[0]
        } else {
            starts[self.rng.random_range(0..starts.len())]
        };
        self.state = EnvState {
            agent_cell: start,
            steps_elapsed: 0,
            collected: BTreeSet::new(),
        };
        self.done = false;
        self.observation()
    }

    pub fn observation(&self) -> Observation {
        let cell = self.state.agent_cell;
        let state_id = self
            .spec
            .state_id(cell, self.state.collected.len())
            .expect("agent is always on an open cell");
        Observation { state_id, cell }
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let next = self.spec.move_from(self.state.agent_cell, action);
        self.state.agent_cell = next;
        self.state.steps_elapsed += 1;

        let mut reward = 0.0;
        let mut done = false;
        if let Some(&r) = self.spec.terminal_rewards.get(&next) {
            reward = r;
            done = true;
        } else if let Some(&r) = self.spec.step_rewards.get(&next) {
            if self.state.collected.insert(next) {
                reward = r;
            }
        }
        if self.state.steps_elapsed >= self.spec.max_steps {
            done = true;
        }
        self.done = done;
        Ok(StepOutcome {
            observation: self.observation(),
            reward,
            done,
        })
    }
}
