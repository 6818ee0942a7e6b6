//! Declarative grid worlds with per-edge permeability.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;

/// Movement direction; the discriminant is the action index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "d")]
    Down = 0,
    #[serde(rename = "l")]
    Left = 1,
    #[serde(rename = "u")]
    Up = 2,
    #[serde(rename = "r")]
    Right = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Down, Direction::Left, Direction::Up, Direction::Right];

    pub fn action(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Up => Direction::Down,
            Direction::Right => Direction::Left,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Direction::Down => 'd',
            Direction::Left => 'l',
            Direction::Up => 'u',
            Direction::Right => 'r',
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Permeability of single-line (open) boundaries.
pub const OPEN: f64 = 0.9;
/// Permeability of double-line boundaries.
pub const DOUBLE_WALL: f64 = 0.1;

/// A rectangular grid world. Cells are numbered row-major from 1.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWorldSpec {
    pub width: usize,
    pub height: usize,
    pub start_cell: usize,
    pub terminal_cell: usize,
    /// Reward of each cell, index `cell - 1`.
    pub cell_rewards: Vec<f64>,
    /// Directed interior edges that differ from `default_permeability`.
    pub edge_permeability: BTreeMap<(usize, Direction), f64>,
    pub default_permeability: f64,
    pub gamma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    width: usize,
    height: usize,
    start: usize,
    terminal: usize,
    gamma: f64,
    rewards: Vec<f64>,
    default_permeability: f64,
    #[serde(default)]
    walls: Vec<WallEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WallEntry {
    cell: usize,
    dir: Direction,
    p: f64,
}

/// The 3x3 layout used for the benchmark:
///
/// ```text
///  1 | 2 | 3
///  ==+---+---
///  4 | 5 ‖ 6
///  --+===+---
///  7 | 8 | 9
/// ```
///
/// Double walls (permeability 0.1) sit below cell 1, between 5 and 6, and
/// below 5. The cheap route runs along the top row and down the right
/// column.
pub fn default_paper_gridworld() -> GridWorldSpec {
    let mut cell_rewards = vec![0.0; 9];
    cell_rewards[8] = 1.0;
    let mut edges = BTreeMap::new();
    for (cell, dir) in DEFAULT_WALLS {
        let (n, opp) = neighbor_in(3, 3, cell, dir).expect("interior edge");
        edges.insert((cell, dir), DOUBLE_WALL);
        edges.insert((n, opp), DOUBLE_WALL);
    }
    GridWorldSpec {
        width: 3,
        height: 3,
        start_cell: 1,
        terminal_cell: 9,
        cell_rewards,
        edge_permeability: edges,
        default_permeability: OPEN,
        gamma: 0.8,
    }
}

const DEFAULT_WALLS: [(usize, Direction); 3] = [
    (1, Direction::Down),
    (5, Direction::Right),
    (5, Direction::Down),
];

fn neighbor_in(width: usize, height: usize, cell: usize, dir: Direction) -> Option<(usize, Direction)> {
    let idx = cell.checked_sub(1)?;
    let (row, col) = (idx / width, idx % width);
    let target = match dir {
        Direction::Down if row + 1 < height => idx + width,
        Direction::Up if row > 0 => idx - width,
        Direction::Left if col > 0 => idx - 1,
        Direction::Right if col + 1 < width => idx + 1,
        _ => return None,
    };
    Some((target + 1, dir.opposite()))
}

impl GridWorldSpec {
    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    /// Cell across the boundary in `dir`, or `None` on the outer border.
    pub fn neighbor(&self, cell: usize, dir: Direction) -> Option<usize> {
        neighbor_in(self.width, self.height, cell, dir).map(|(n, _)| n)
    }

    /// Probability of crossing the boundary of `cell` in `dir`.
    pub fn permeability(&self, cell: usize, dir: Direction) -> f64 {
        if self.neighbor(cell, dir).is_none() {
            return 0.0;
        }
        self.edge_permeability
            .get(&(cell, dir))
            .copied()
            .unwrap_or(self.default_permeability)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGrid(msg));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive".into());
        }
        let n = self.num_cells();
        for (name, cell) in [("start", self.start_cell), ("terminal", self.terminal_cell)] {
            if !(1..=n).contains(&cell) {
                return bad(format!("{name} cell {cell} outside 1..={n}"));
            }
        }
        if self.start_cell == self.terminal_cell {
            return bad(format!("start and terminal are both cell {}", self.start_cell));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} not in [0,1)", self.gamma));
        }
        if self.cell_rewards.len() != n {
            return bad(format!("{} rewards for {n} cells", self.cell_rewards.len()));
        }
        if let Some((i, r)) = self
            .cell_rewards
            .iter()
            .enumerate()
            .find(|(_, r)| !(0.0..=1.0).contains(*r))
        {
            return bad(format!("reward {r} of cell {} not in [0,1]", i + 1));
        }
        if !(0.0..=1.0).contains(&self.default_permeability) {
            return bad(format!(
                "default permeability {} not in [0,1]",
                self.default_permeability
            ));
        }
        for (&(cell, dir), &p) in &self.edge_permeability {
            if !(1..=n).contains(&cell) {
                return bad(format!("edge cell {cell} dir {dir}: cell outside 1..={n}"));
            }
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("edge cell {cell} dir {dir}: permeability {p} not in [0,1]"));
            }
            if self.neighbor(cell, dir).is_none() && p != 0.0 {
                return bad(format!(
                    "edge cell {cell} dir {dir}: outer border must have permeability 0, got {p}"
                ));
            }
        }
        Ok(())
    }

    /// Parses the JSON grid format. A wall entry applies to both sides of
    /// its boundary unless the other side is listed explicitly.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GridFile = serde_json::from_str(text)?;
        let n = file.width * file.height;
        let mut explicit: BTreeMap<(usize, Direction), f64> = BTreeMap::new();
        for w in &file.walls {
            if !(1..=n).contains(&w.cell) {
                return Err(Error::InvalidGrid(format!(
                    "wall cell {} dir {}: cell outside 1..={n}",
                    w.cell, w.dir
                )));
            }
            if explicit.insert((w.cell, w.dir), w.p).is_some() {
                return Err(Error::InvalidGrid(format!(
                    "wall cell {} dir {} listed twice",
                    w.cell, w.dir
                )));
            }
        }
        let mut edges = explicit.clone();
        for (&(cell, dir), &p) in &explicit {
            if let Some((other, opp)) = neighbor_in(file.width, file.height, cell, dir) {
                edges.entry((other, opp)).or_insert(p);
            }
        }
        // entries equal to the default carry no information
        edges.retain(|&(cell, dir), p| {
            neighbor_in(file.width, file.height, cell, dir).is_none() || *p != file.default_permeability
        });
        let spec = GridWorldSpec {
            width: file.width,
            height: file.height,
            start_cell: file.start,
            terminal_cell: file.terminal,
            cell_rewards: file.rewards,
            edge_permeability: edges,
            default_permeability: file.default_permeability,
            gamma: file.gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut walls = Vec::new();
        for (&(cell, dir), &p) in &self.edge_permeability {
            if let Some((other, opp)) = neighbor_in(self.width, self.height, cell, dir) {
                match self.edge_permeability.get(&(other, opp)).copied() {
                    // symmetric pair: emit once from the lower cell
                    Some(q) if q == p && (other, opp) < (cell, dir) => continue,
                    Some(_) => {}
                    None => walls.push(WallEntry {
                        cell: other,
                        dir: opp,
                        p: self.default_permeability,
                    }),
                }
            }
            walls.push(WallEntry { cell, dir, p });
        }
        let file = GridFile {
            width: self.width,
            height: self.height,
            start: self.start_cell,
            terminal: self.terminal_cell,
            gamma: self.gamma,
            rewards: self.cell_rewards.clone(),
            default_permeability: self.default_permeability,
            walls,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

pub fn load_gridworld_spec(text: &str) -> Result<GridWorldSpec> {
    GridWorldSpec::from_json(text)
}

/// Compiles to an MDP over cells with actions `d, l, u, r`.
///
/// Each move crosses its boundary with the boundary's permeability and
/// otherwise stays put. Any action in the terminal cell pays the terminal
/// reward and returns to the start cell.
pub fn compile_gridworld(spec: &GridWorldSpec) -> Result<Mdp> {
    spec.validate()?;
    let ns = spec.num_cells();
    let na = Direction::ALL.len();
    let mut rewards = Vec::with_capacity(ns * na);
    let mut transitions = vec![0.0; ns * na * ns];
    for cell in 1..=ns {
        let s = cell - 1;
        for dir in Direction::ALL {
            let row = (s * na + dir.action()) * ns;
            rewards.push(spec.cell_rewards[s]);
            if cell == spec.terminal_cell {
                transitions[row + spec.start_cell - 1] = 1.0;
                continue;
            }
            match spec.neighbor(cell, dir) {
                Some(n) => {
                    let p = spec.permeability(cell, dir);
                    transitions[row + n - 1] = p;
                    transitions[row + s] = 1.0 - p;
                }
                None => transitions[row + s] = 1.0,
            }
        }
    }
    let m = Mdp::from_flat(ns, na, spec.gamma, rewards, transitions);
    let report = crate::mdp::validate_mdp(&m);
    if !report.is_valid() {
        return Err(Error::InvalidMdp(report.to_string()));
    }
    Ok(m)
}
