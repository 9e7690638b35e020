//! Deterministic path-planning simulators over categorical decisions:
//! a maze (cost to go), a greedy snake (cumulative reward) and a rover
//! trajectory (running cost plus terminal miss distance).
//!
//! Grid cells are 1-indexed `(x, y)` with `x` the column and `y` the row;
//! "up" increases `y`.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoding::{lattice_size, Point, SCHEMA_VERSION};
use crate::error::{Error, Result};

pub const MAZE_CONFIG: &str = include_str!("../configs/maze.json");
pub const SNAKE_CONFIG: &str = include_str!("../configs/snake.json");
pub const ROVER_CONFIG: &str = include_str!("../configs/rover.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    fn delta(self) -> (i64, i64) {
        match self {
            Action::Up => (0, 1),
            Action::Down => (0, -1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Stay => (0, 0),
        }
    }
}

fn default_actions() -> Vec<Action> {
    Action::ALL.to_vec()
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfBounds {
    /// Score the step, then stay on the last in-bounds square.
    #[default]
    Stay,
    /// Move off the grid; every step spent outside scores the penalty.
    Continue,
}

/// Choices the reward table leaves open, each switchable from config.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnakeRules {
    /// Whether the start square counts as a prize square for step 1.
    #[serde(default)]
    pub start_is_prize: bool,
    #[serde(default)]
    pub out_of_bounds: OutOfBounds,
    /// Remove a prize once collected.
    #[serde(default)]
    pub consume_prizes: bool,
}

impl Default for SnakeRules {
    fn default() -> Self {
        Self { start_is_prize: false, out_of_bounds: OutOfBounds::Stay, consume_prizes: false }
    }
}

pub type Cell = [i64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub width: i64,
    pub height: i64,
    pub start: Cell,
    #[serde(default)]
    pub goal: Option<Cell>,
    #[serde(default)]
    pub obstacles: Vec<Cell>,
    #[serde(default)]
    pub prizes: Vec<Cell>,
    pub path_length: usize,
    /// Level `k` of a decision maps to `actions[k - 1]`.
    #[serde(default = "default_actions")]
    pub actions: Vec<Action>,
    #[serde(default)]
    pub snake: SnakeRules,
}

impl GridWorld {
    pub fn maze() -> Self {
        Self::from_json_str(MAZE_CONFIG).expect("shipped maze config is valid")
    }

    pub fn snake() -> Self {
        Self::from_json_str(SNAKE_CONFIG).expect("shipped snake config is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let world: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("grid world JSON: {e}")))?;
        world.validate()?;
        Ok(world)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn with_actions(mut self, actions: Vec<Action>) -> Result<Self> {
        self.actions = actions;
        self.validate()?;
        Ok(self)
    }

    pub fn with_path_length(mut self, d: usize) -> Result<Self> {
        self.path_length = d;
        self.validate()?;
        Ok(self)
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        (1..=self.width).contains(&c[0]) && (1..=self.height).contains(&c[1])
    }

    pub fn m(&self) -> u32 {
        self.actions.len() as u32
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.width < 1 || self.height < 1 {
            return bad(format!("grid must be non-empty, got {}x{}", self.width, self.height));
        }
        if !self.in_bounds(self.start) {
            return bad(format!("start {:?} is off the grid", self.start));
        }
        if let Some(g) = self.goal {
            if !self.in_bounds(g) {
                return bad(format!("goal {g:?} is off the grid"));
            }
        }
        if self.obstacles.contains(&self.start) {
            return bad("start lies on an obstacle".into());
        }
        if self.path_length == 0 {
            return bad("path length must be >= 1".into());
        }
        if self.actions.len() < 2 {
            return bad("need at least two actions".into());
        }
        Ok(())
    }

    fn check_path(&self, path: &Point) -> Result<()> {
        if path.d() != self.path_length || path.m() != self.m() {
            return Err(Error::DimensionMismatch {
                expected_d: self.path_length,
                expected_m: self.m(),
                got_d: path.d(),
                got_m: path.m(),
            });
        }
        Ok(())
    }

    /// Breadth-first distance from every cell to the goal, avoiding
    /// obstacles; `None` where the goal is unreachable.
    pub fn distance_field(&self) -> Result<Vec<Option<u32>>> {
        let goal = self.goal.ok_or_else(|| Error::Simulator("maze needs a goal cell".into()))?;
        let (w, h) = (self.width as usize, self.height as usize);
        let idx = |c: Cell| (c[1] as usize - 1) * w + (c[0] as usize - 1);
        let blocked: HashSet<Cell> = self.obstacles.iter().copied().collect();
        let mut field = vec![None; w * h];
        let mut queue = VecDeque::new();
        if !blocked.contains(&goal) {
            field[idx(goal)] = Some(0);
            queue.push_back(goal);
        }
        while let Some(c) = queue.pop_front() {
            let dist = field[idx(c)].expect("queued cells are labelled");
            for a in [Action::Up, Action::Down, Action::Left, Action::Right] {
                let (dx, dy) = a.delta();
                let next = [c[0] + dx, c[1] + dy];
                if self.in_bounds(next) && !blocked.contains(&next) && field[idx(next)].is_none() {
                    field[idx(next)] = Some(dist + 1);
                    queue.push_back(next);
                }
            }
        }
        Ok(field)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: u32,
    pub position: [f64; 2],
    pub value: f64,
    pub out_of_bounds: bool,
    pub blocked: bool,
    pub on_prize: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub schema_version: u32,
    /// Cost (maze, rover) or reward (snake).
    pub value: f64,
    /// Part of `value` not attributed to any step.
    pub terminal: f64,
    pub trace: Vec<StepRecord>,
}

impl SimResult {
    fn new(trace: Vec<StepRecord>, terminal: f64) -> Self {
        let value = trace.iter().map(|s| s.value).sum::<f64>() + terminal;
        Self { schema_version: SCHEMA_VERSION, value, terminal, trace }
    }

    /// `value` recomputed from the trace.
    pub fn recomputed(&self) -> f64 {
        self.trace.iter().map(|s| s.value).sum::<f64>() + self.terminal
    }
}

/// Moves under bounce-stay rules: steps into an obstacle or off the grid
/// leave the position unchanged. Cost is the grid distance from the final
/// cell to the goal (`width * height` if the goal is unreachable).
pub fn maze_cost(world: &GridWorld, path: &Point) -> Result<SimResult> {
    world.check_path(path)?;
    let field = world.distance_field()?;
    let blocked: HashSet<Cell> = world.obstacles.iter().copied().collect();
    let mut pos = world.start;
    let mut trace = Vec::with_capacity(path.d());
    for (j, &code) in path.levels().iter().enumerate() {
        let (dx, dy) = world.actions[code as usize - 1].delta();
        let next = [pos[0] + dx, pos[1] + dy];
        let off = !world.in_bounds(next);
        let hit = !off && blocked.contains(&next);
        if !off && !hit {
            pos = next;
        }
        trace.push(StepRecord {
            step: j + 1,
            action: code,
            position: [pos[0] as f64, pos[1] as f64],
            value: 0.0,
            out_of_bounds: off,
            blocked: hit,
            on_prize: false,
        });
    }
    let cell = (pos[1] as usize - 1) * world.width as usize + (pos[0] as usize - 1);
    let cost = field[cell].map_or((world.width * world.height) as f64, |v| v as f64);
    Ok(SimResult::new(trace, cost))
}

/// Cumulative greedy-snake reward. With `d` steps, step `j` earns
/// `5(d-j+1)` on entering a prize square from a non-prize square,
/// `10(d-j+1)` on a prize square reached from a prize square, `-2(j-1)` on
/// any other in-bounds square and `-10` off the grid.
pub fn snake_reward(world: &GridWorld, path: &Point) -> Result<SimResult> {
    world.check_path(path)?;
    let d = path.d() as i64;
    let mut prizes: HashSet<Cell> = world.prizes.iter().copied().collect();
    let rules = world.snake;
    let mut pos = world.start;
    let mut prev_on_prize = rules.start_is_prize;
    let mut trace = Vec::with_capacity(path.d());
    for (idx, &code) in path.levels().iter().enumerate() {
        let j = idx as i64 + 1;
        let (dx, dy) = world.actions[code as usize - 1].delta();
        let next = [pos[0] + dx, pos[1] + dy];
        let off = !world.in_bounds(next);
        let (value, on_prize) = if off {
            (-10.0, false)
        } else if prizes.contains(&next) {
            let base = if prev_on_prize { 10 } else { 5 };
            ((base * (d - j + 1)) as f64, true)
        } else {
            ((-2 * (j - 1)) as f64, false)
        };
        if !off || rules.out_of_bounds == OutOfBounds::Continue {
            pos = next;
        }
        if on_prize && rules.consume_prizes {
            prizes.remove(&next);
        }
        prev_on_prize = on_prize;
        trace.push(StepRecord {
            step: idx + 1,
            action: code,
            position: [pos[0] as f64, pos[1] as f64],
            value,
            out_of_bounds: off,
            blocked: false,
            on_prize,
        });
    }
    Ok(SimResult::new(trace, 0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Speeds {
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleCourse {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub start: [f64; 2],
    pub target: [f64; 2],
    pub speeds: Speeds,
    /// Axis-aligned boxes `[x0, y0, x1, y1]`, closed.
    pub boxes: Vec<[f64; 4]>,
    pub substeps: usize,
    pub path_length: usize,
}

pub const ROVER_ANGLES: [f64; 4] =
    [0.0, std::f64::consts::FRAC_PI_6, std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_2];
pub const ROVER_LEVELS: u32 = 9;

impl ObstacleCourse {
    pub fn shipped() -> Self {
        Self::from_json_str(ROVER_CONFIG).expect("shipped rover config is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let course: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("rover course JSON: {e}")))?;
        course.validate()?;
        Ok(course)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |p: [f64; 2]| p.iter().all(|v| (0.0..=1.0).contains(v));
        if !unit(self.start) || !unit(self.target) {
            return Err(Error::InvalidParameter("start and target must lie in the unit square".into()));
        }
        if !(self.speeds.low >= 0.0 && self.speeds.high >= 0.0) {
            return Err(Error::InvalidParameter("speeds must be non-negative".into()));
        }
        if self.substeps == 0 || self.path_length == 0 {
            return Err(Error::InvalidParameter("substeps and path length must be >= 1".into()));
        }
        Ok(())
    }

    pub fn on_obstacle(&self, p: [f64; 2]) -> bool {
        self.boxes.iter().any(|b| p[0] >= b[0] && p[0] <= b[2] && p[1] >= b[1] && p[1] <= b[3])
    }

    /// `30 * 1{on obstacle} + 0.05`.
    pub fn running_cost(&self, p: [f64; 2]) -> f64 {
        if self.on_obstacle(p) {
            30.05
        } else {
            0.05
        }
    }

    /// Velocity for a decision code: 1-4 low speed, 5-8 high speed at the
    /// four angles, 9 stay.
    pub fn velocity(&self, code: u32) -> Result<[f64; 2]> {
        let speed = match code {
            1..=4 => self.speeds.low,
            5..=8 => self.speeds.high,
            9 => return Ok([0.0, 0.0]),
            _ => return Err(Error::InvalidLevel { factor: 0, level: code, m: ROVER_LEVELS }),
        };
        let angle = ROVER_ANGLES[((code - 1) % 4) as usize];
        Ok([speed * angle.cos(), speed * angle.sin()])
    }

    /// Waypoints `x(t_1), ..., x(T)` of the trajectory, clamped into the
    /// unit square.
    pub fn waypoints(&self, path: &Point) -> Result<Vec<[f64; 2]>> {
        let mut pts = Vec::with_capacity(path.d() + 1);
        let mut p = self.start;
        pts.push(p);
        for &code in path.levels() {
            let v = self.velocity(code)?;
            p = [(p[0] + v[0]).clamp(0.0, 1.0), (p[1] + v[1]).clamp(0.0, 1.0)];
            pts.push(p);
        }
        Ok(pts)
    }

    /// Trapezoidal running cost along one straight segment split into
    /// `pieces` equal sub-steps.
    pub fn segment_cost(&self, a: [f64; 2], b: [f64; 2], pieces: usize) -> f64 {
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        if len == 0.0 {
            return 0.0;
        }
        let at = |i: usize| {
            let t = i as f64 / pieces as f64;
            [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
        };
        let piece = len / pieces as f64;
        (0..pieces).map(|i| 0.5 * (self.running_cost(at(i)) + self.running_cost(at(i + 1))) * piece).sum()
    }
}

/// Rover trajectory cost: trapezoidal running cost along the piecewise
/// linear path plus `50 * |x(T) - target| - 5`.
pub fn rover_cost(course: &ObstacleCourse, path: &Point) -> Result<SimResult> {
    if path.d() != course.path_length || path.m() != ROVER_LEVELS {
        return Err(Error::DimensionMismatch {
            expected_d: course.path_length,
            expected_m: ROVER_LEVELS,
            got_d: path.d(),
            got_m: path.m(),
        });
    }
    let pts = course.waypoints(path)?;
    let mut trace = Vec::with_capacity(path.d());
    for (j, &code) in path.levels().iter().enumerate() {
        let (a, b) = (pts[j], pts[j + 1]);
        let v = course.velocity(code)?;
        let unclamped = [a[0] + v[0], a[1] + v[1]];
        trace.push(StepRecord {
            step: j + 1,
            action: code,
            position: b,
            value: course.segment_cost(a, b, course.substeps),
            out_of_bounds: unclamped != b,
            blocked: course.on_obstacle(b),
            on_prize: false,
        });
    }
    let end = pts[pts.len() - 1];
    let miss = ((end[0] - course.target[0]).powi(2) + (end[1] - course.target[1]).powi(2)).sqrt();
    Ok(SimResult::new(trace, 50.0 * miss - 5.0))
}

/// A black-box objective on `[M]^d`, oriented so larger is better.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn d(&self) -> usize;
    fn m(&self) -> u32;
    fn evaluate(&self, x: &Point) -> Result<f64>;
}

pub struct MazeObjective(pub GridWorld);
pub struct SnakeObjective(pub GridWorld);
pub struct RoverObjective(pub ObstacleCourse);

impl Objective for MazeObjective {
    fn name(&self) -> &str {
        "maze"
    }
    fn d(&self) -> usize {
        self.0.path_length
    }
    fn m(&self) -> u32 {
        self.0.m()
    }
    /// Negated cost.
    fn evaluate(&self, x: &Point) -> Result<f64> {
        Ok(-maze_cost(&self.0, x)?.value)
    }
}

impl Objective for SnakeObjective {
    fn name(&self) -> &str {
        "snake"
    }
    fn d(&self) -> usize {
        self.0.path_length
    }
    fn m(&self) -> u32 {
        self.0.m()
    }
    fn evaluate(&self, x: &Point) -> Result<f64> {
        Ok(snake_reward(&self.0, x)?.value)
    }
}

impl Objective for RoverObjective {
    fn name(&self) -> &str {
        "rover"
    }
    fn d(&self) -> usize {
        self.0.path_length
    }
    fn m(&self) -> u32 {
        ROVER_LEVELS
    }
    /// Negated cost.
    fn evaluate(&self, x: &Point) -> Result<f64> {
        Ok(-rover_cost(&self.0, x)?.value)
    }
}

/// Exhaustive lookup table: one response per lattice point in lexicographic
/// order (first factor most significant).
#[derive(Debug)]
pub struct TableObjective {
    d: usize,
    m: u32,
    values: Vec<f64>,
}

impl TableObjective {
    pub fn new(d: usize, m: u32, values: Vec<f64>) -> Result<Self> {
        let size = lattice_size(d, m).ok_or(Error::InvalidLattice { d, m })?;
        if values.len() as u64 != size {
            return Err(Error::LengthMismatch(values.len(), size as usize));
        }
        Ok(Self { d, m, values })
    }

    /// Rows `l_1,...,l_d,value`, one per lattice point in any order.
    pub fn from_csv_str(text: &str, m: u32) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 2 {
                return Err(Error::Parse(format!("line {}: need levels and a value", i + 1)));
            }
            let mut levels = Vec::with_capacity(fields.len() - 1);
            for (k, f) in fields[..fields.len() - 1].iter().enumerate() {
                levels.push(f.parse::<u32>().map_err(|e| Error::Parse(format!("line {}, field {}: {e}", i + 1, k + 1)))?);
            }
            let value: f64 = fields[fields.len() - 1]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}, field {}: {e}", i + 1, fields.len())))?;
            rows.push((Point::new(levels, m)?, value));
        }
        let d = rows.first().ok_or_else(|| Error::Parse("empty lookup table".into()))?.0.d();
        let size = lattice_size(d, m).ok_or(Error::InvalidLattice { d, m })? as usize;
        let mut values = vec![None; size];
        for (p, v) in rows {
            if p.d() != d {
                return Err(Error::DimensionMismatch { expected_d: d, expected_m: m, got_d: p.d(), got_m: m });
            }
            values[lattice_index(&p)] = Some(v);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::Parse(format!("lookup table misses lattice point #{i}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, m, values)
    }
}

/// Position of `p` in the lexicographic lattice order.
pub fn lattice_index(p: &Point) -> usize {
    p.levels().iter().fold(0usize, |acc, &l| acc * p.m() as usize + (l as usize - 1))
}

impl Objective for TableObjective {
    fn name(&self) -> &str {
        "table"
    }
    fn d(&self) -> usize {
        self.d
    }
    fn m(&self) -> u32 {
        self.m
    }
    fn evaluate(&self, x: &Point) -> Result<f64> {
        if x.d() != self.d || x.m() != self.m {
            return Err(Error::DimensionMismatch { expected_d: self.d, expected_m: self.m, got_d: x.d(), got_m: x.m() });
        }
        Ok(self.values[lattice_index(x)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(codes: &[u32], m: u32) -> Point {
        Point::new(codes.to_vec(), m).unwrap()
    }

    #[test]
    fn maze_goal_and_stay() {
        let world = GridWorld::maze();
        // Right x4, up x5, right: reaches (6,6) in ten moves, then stays.
        let p = path(&[4, 4, 4, 4, 1, 1, 1, 1, 1, 4, 5, 5], 5);
        let r = maze_cost(&world, &p).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.trace.last().unwrap().position, [6.0, 6.0]);
        let stay = maze_cost(&world, &path(&[5; 12], 5)).unwrap();
        assert_eq!(stay.value, 10.0);
    }

    #[test]
    fn maze_bounce_stay() {
        let world = GridWorld::maze();
        // Down from (1,1) leaves the grid; right then up hits (2,2).
        let r = maze_cost(&world, &path(&[2, 4, 1, 5, 5, 5, 5, 5, 5, 5, 5, 5], 5)).unwrap();
        assert!(r.trace[0].out_of_bounds);
        assert_eq!(r.trace[0].position, [1.0, 1.0]);
        assert!(r.trace[2].blocked);
        assert_eq!(r.trace[2].position, [2.0, 1.0]);
    }

    #[test]
    fn snake_examples() {
        let world = GridWorld::snake();
        // Stay put on the non-prize start for twelve steps.
        let r = snake_reward(&world, &path(&[5; 12], 5)).unwrap();
        assert_eq!(r.value, -132.0);
        let mut codes = [5u32; 12];
        codes[0] = 2;
        let r = snake_reward(&world, &path(&codes, 5)).unwrap();
        assert_eq!(r.trace[0].value, -10.0);
        codes[0] = 4;
        let r = snake_reward(&world, &path(&codes, 5)).unwrap();
        assert_eq!(r.trace[0].value, 60.0);
        // Staying on the prize afterwards earns the consecutive bonus.
        assert_eq!(r.trace[1].value, 10.0 * 11.0);
        assert_eq!(r.value, r.recomputed());
    }

    #[test]
    fn snake_rule_flags() {
        let mut world = GridWorld::snake();
        world.snake.consume_prizes = true;
        let mut codes = [5u32; 12];
        codes[0] = 4;
        let r = snake_reward(&world, &path(&codes, 5)).unwrap();
        assert_eq!(r.trace[1].value, -2.0);
        world.snake = SnakeRules { start_is_prize: true, ..SnakeRules::default() };
        let r = snake_reward(&world, &path(&codes, 5)).unwrap();
        assert_eq!(r.trace[0].value, 120.0);
        world.snake = SnakeRules { out_of_bounds: OutOfBounds::Continue, ..SnakeRules::default() };
        codes[0] = 2;
        let r = snake_reward(&world, &path(&codes, 5)).unwrap();
        assert!(r.trace.iter().all(|s| s.value == -10.0));
    }

    #[test]
    fn snake_action_subset() {
        let world = GridWorld::snake()
            .with_actions(vec![Action::Up, Action::Right, Action::Stay])
            .unwrap()
            .with_path_length(8)
            .unwrap();
        let r = snake_reward(&world, &path(&[2, 2, 3, 3, 3, 3, 3, 3], 3)).unwrap();
        // (2,1) then (3,1): enter a prize, then the consecutive bonus.
        assert_eq!(r.trace[0].value, 40.0);
        assert_eq!(r.trace[1].value, 70.0);
    }

    #[test]
    fn rover_stay_and_straight_leg() {
        let course = ObstacleCourse::shipped();
        let r = rover_cost(&course, &path(&[9; 8], 9)).unwrap();
        let want = 50.0 * ((0.7f64).powi(2) * 2.0).sqrt() - 5.0;
        assert!((r.value - want).abs() < 1e-12);

        let open = ObstacleCourse { boxes: vec![], ..course.clone() };
        assert!((open.segment_cost([0.0, 0.5], [1.0, 0.5], 20) - 0.05).abs() < 1e-15);
        assert_eq!(open.velocity(9).unwrap(), [0.0, 0.0]);
        assert!(open.velocity(10).is_err());
        let v = open.velocity(7).unwrap();
        assert!((v[0] - 0.125 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn rover_clamps_to_unit_square() {
        let course = ObstacleCourse { boxes: vec![], ..ObstacleCourse::shipped() };
        let pts = course.waypoints(&path(&[5; 8], 9)).unwrap();
        assert_eq!(pts.last().unwrap()[0], 1.0);
    }

    #[test]
    fn table_objective_reads_csv() {
        let text = "1,1,0.5\n1,2,1.5\n2,1,-1\n2,2,3\n";
        let t = TableObjective::from_csv_str(text, 2).unwrap();
        assert_eq!(t.evaluate(&path(&[2, 1], 2)).unwrap(), -1.0);
        assert!(TableObjective::from_csv_str("1,1,0.5\n", 2).is_err());
        let err = TableObjective::from_csv_str("1,x,0.5\n", 2).unwrap_err().to_string();
        assert!(err.contains("line 1, field 2"), "{err}");
    }
}
