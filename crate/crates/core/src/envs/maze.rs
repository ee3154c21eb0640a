use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{rng, EnvTag, EpisodeSeed, Grid, GridState};
use crate::dsl::Action;

pub const EMPTY: u8 = 1;
pub const WALL: u8 = 2;
pub const GOAL: u8 = 3;

/// Maze cells per side of the medium layout; the tile grid is `2n+1` wide.
pub const MEDIUM_CELLS: usize = 7;

/// Headings: 0 east, 1 south, 2 west, 3 north (y grows downwards).
const HEADINGS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// A perfect maze over a tile grid: cells at odd coordinates, passages carved between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Maze {
    cells_w: usize,
    cells_h: usize,
    tiles: Grid,
}

impl Maze {
    /// Carves a spanning tree with a randomized depth-first search.
    pub fn generate(cells_w: usize, cells_h: usize, seed: u64) -> Maze {
        let mut r = rng(seed);
        let (w, h) = (2 * cells_w + 1, 2 * cells_h + 1);
        let mut tiles = Grid::filled(w, h, WALL);
        let mut visited = vec![false; cells_w * cells_h];
        let start = (r.random_range(0..cells_w), r.random_range(0..cells_h));
        let mut stack = vec![start];
        visited[start.1 * cells_w + start.0] = true;
        tiles.set(2 * start.0 as i64 + 1, 2 * start.1 as i64 + 1, EMPTY);
        while let Some(&(cx, cy)) = stack.last() {
            let mut next: Vec<(usize, usize)> = HEADINGS
                .iter()
                .filter_map(|&(dx, dy)| {
                    let nx = cx as i64 + dx;
                    let ny = cy as i64 + dy;
                    (nx >= 0 && ny >= 0 && (nx as usize) < cells_w && (ny as usize) < cells_h)
                        .then(|| (nx as usize, ny as usize))
                })
                .filter(|&(nx, ny)| !visited[ny * cells_w + nx])
                .collect();
            if next.is_empty() {
                stack.pop();
                continue;
            }
            next.shuffle(&mut r);
            let (nx, ny) = next[0];
            visited[ny * cells_w + nx] = true;
            tiles.set((cx + nx + 1) as i64, (cy + ny + 1) as i64, EMPTY);
            tiles.set(2 * nx as i64 + 1, 2 * ny as i64 + 1, EMPTY);
            stack.push((nx, ny));
        }
        Maze { cells_w, cells_h, tiles }
    }

    pub fn tiles(&self) -> &Grid {
        &self.tiles
    }

    pub fn cell_count(&self) -> usize {
        self.cells_w * self.cells_h
    }

    pub fn is_wall(&self, x: i64, y: i64) -> bool {
        self.tiles.get(x, y).is_none_or(|c| c == WALL)
    }

    /// Checks the spanning-tree property with union-find: every passage joins two
    /// previously disconnected cells and all cells end up connected.
    pub fn is_perfect(&self) -> bool {
        let n = self.cell_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        let mut edges = 0;
        for cy in 0..self.cells_h {
            for cx in 0..self.cells_w {
                if self.is_wall(2 * cx as i64 + 1, 2 * cy as i64 + 1) {
                    return false;
                }
                let here = cy * self.cells_w + cx;
                let neighbours = [(cx + 1, cy, cx + 1 < self.cells_w), (cx, cy + 1, cy + 1 < self.cells_h)];
                for (nx, ny, inside) in neighbours {
                    if !inside || self.is_wall((cx + nx + 1) as i64, (cy + ny + 1) as i64) {
                        continue;
                    }
                    let (a, b) = (find(&mut parent, here), find(&mut parent, ny * self.cells_w + nx));
                    if a == b {
                        return false;
                    }
                    parent[a] = b;
                    edges += 1;
                }
            }
        }
        edges + 1 == n
    }
}

/// Maze navigation with a 5×5 egocentric view.
///
/// The view is aligned so that the agent sits at `(0, 2)` looking along `+x`; row 0 is the
/// agent's left-hand side. `forward` moves one tile unless blocked, `left`/`right` only turn.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    maze: Arc<Maze>,
    pos: (i64, i64),
    dir: u8,
    goal: (i64, i64),
    steps: usize,
    max_steps: usize,
    last_action: Option<Action>,
    reached_goal: bool,
}

impl MazeEnv {
    pub fn new(seed: EpisodeSeed) -> MazeEnv {
        MazeEnv::with_size(seed, MEDIUM_CELLS, MEDIUM_CELLS)
    }

    pub fn with_size(seed: EpisodeSeed, cells_w: usize, cells_h: usize) -> MazeEnv {
        let maze = Maze::generate(cells_w, cells_h, seed.layout);
        let mut r = rng(seed.layout ^ 0x5bd1_e995);
        let n = cells_w * cells_h;
        let start = r.random_range(0..n);
        let mut goal = r.random_range(0..n - 1);
        if goal >= start {
            goal += 1;
        }
        let at = |i: usize| (2 * (i % cells_w) as i64 + 1, 2 * (i / cells_w) as i64 + 1);
        let dir = r.random_range(0..4u8);
        let max_steps = 4 * maze.tiles.width() * maze.tiles.height();
        MazeEnv {
            maze: Arc::new(maze),
            pos: at(start),
            dir,
            goal: at(goal),
            steps: 0,
            max_steps,
            last_action: None,
            reached_goal: false,
        }
    }

    pub fn maze(&self) -> &Maze {
        &self.maze
    }

    pub fn position(&self) -> (i64, i64) {
        self.pos
    }

    pub fn direction(&self) -> u8 {
        self.dir
    }

    pub fn goal(&self) -> (i64, i64) {
        self.goal
    }

    pub fn reached_goal(&self) -> bool {
        self.reached_goal
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn tile(&self, x: i64, y: i64) -> u8 {
        if (x, y) == self.goal {
            return GOAL;
        }
        self.maze.tiles.get(x, y).unwrap_or(WALL)
    }

    fn ahead(&self, heading: u8) -> (i64, i64) {
        let (dx, dy) = HEADINGS[heading as usize];
        (self.pos.0 + dx, self.pos.1 + dy)
    }

    /// World coordinates of view cell `(vx, vy)`.
    pub fn view_to_world(&self, vx: i64, vy: i64) -> (i64, i64) {
        let (fx, fy) = HEADINGS[self.dir as usize];
        let (rx, ry) = HEADINGS[((self.dir + 1) % 4) as usize];
        let lateral = vy - 2;
        (self.pos.0 + vx * fx + lateral * rx, self.pos.1 + vx * fy + lateral * ry)
    }

    pub fn observe(&self) -> GridState {
        let mut cells = Vec::with_capacity(25);
        for vy in 0..5 {
            for vx in 0..5 {
                let (x, y) = self.view_to_world(vx, vy);
                cells.push(self.tile(x, y));
            }
        }
        GridState::new(EnvTag::Maze, Grid::new(5, 5, cells), Some(self.dir))
    }

    pub fn step(&mut self, action: Action) {
        if self.done() {
            return;
        }
        match action {
            Action::Left => self.dir = (self.dir + 3) % 4,
            Action::Right => self.dir = (self.dir + 1) % 4,
            Action::Forward => {
                let (x, y) = self.ahead(self.dir);
                if self.tile(x, y) != WALL {
                    self.pos = (x, y);
                    self.reached_goal = self.pos == self.goal;
                }
            }
            _ => {}
        }
        self.last_action = Some(action);
        self.steps += 1;
    }

    pub fn done(&self) -> bool {
        self.reached_goal || self.steps >= self.max_steps
    }

    /// Right-hand wall follower. After turning right it steps into the opened corridor.
    pub fn oracle_action(&self) -> Action {
        let open = |p: (i64, i64)| self.tile(p.0, p.1) != WALL;
        let front = open(self.ahead(self.dir));
        let right = open(self.ahead((self.dir + 1) % 4));
        if self.last_action == Some(Action::Right) && front {
            Action::Forward
        } else if right {
            Action::Right
        } else if front {
            Action::Forward
        } else {
            Action::Left
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_mazes_are_perfect() {
        for seed in 0..100 {
            let m = Maze::generate(MEDIUM_CELLS, MEDIUM_CELLS, seed);
            assert!(m.is_perfect(), "seed {seed}");
        }
        let mut m = Maze::generate(3, 3, 4);
        // open all four walls around the 2x2 block of cells at the top-left: a cycle
        for (x, y) in [(2, 1), (1, 2), (3, 2), (2, 3)] {
            m.tiles.set(x, y, EMPTY);
        }
        assert!(!m.is_perfect());
    }

    #[test]
    fn reset_is_deterministic() {
        let a = MazeEnv::new(EpisodeSeed::new(9, 1));
        let b = MazeEnv::new(EpisodeSeed::new(9, 1));
        assert_eq!(a.observe(), b.observe());
        assert_eq!(a.position(), b.position());
        let o = a.observe();
        assert_eq!((o.grid.width(), o.grid.height()), (5, 5));
        assert!(o.grid.cells().iter().all(|c| (1..=3).contains(c)));
    }

    #[test]
    fn turning_keeps_position() {
        let mut e = MazeEnv::new(EpisodeSeed::new(3, 3));
        let (p, d) = (e.position(), e.direction());
        e.step(Action::Left);
        assert_eq!(e.position(), p);
        assert_eq!(e.direction(), (d + 3) % 4);
        e.step(Action::Right);
        e.step(Action::Right);
        assert_eq!(e.direction(), (d + 1) % 4);
    }

    #[test]
    fn forward_into_wall_changes_nothing() {
        for seed in 0..50 {
            let mut e = MazeEnv::new(EpisodeSeed::new(seed, 0));
            for _ in 0..4 {
                if e.maze.is_wall(e.ahead(e.dir).0, e.ahead(e.dir).1) {
                    let before = e.observe();
                    let p = e.position();
                    e.step(Action::Forward);
                    assert_eq!(e.position(), p);
                    assert_eq!(e.observe(), before);
                    return;
                }
                e.step(Action::Left);
            }
        }
        panic!("no wall found ahead in any seed");
    }

    #[test]
    fn view_puts_forward_cell_at_1_2() {
        let e = MazeEnv::new(EpisodeSeed::new(11, 0));
        assert_eq!(e.view_to_world(0, 2), e.position());
        assert_eq!(e.view_to_world(1, 2), e.ahead(e.dir));
        assert_eq!(e.view_to_world(0, 3), e.ahead((e.dir + 1) % 4));
        assert_eq!(e.view_to_world(0, 1), e.ahead((e.dir + 3) % 4));
    }

    #[test]
    fn wall_ahead_and_open_right_turns_right() {
        for seed in 0..200 {
            let e = MazeEnv::new(EpisodeSeed::new(seed, 0));
            let o = e.observe();
            if o.grid.get(1, 2) == Some(WALL) && o.grid.get(0, 3) != Some(WALL) {
                assert_eq!(e.oracle_action(), Action::Right);
                return;
            }
        }
        panic!("no matching start state");
    }

    #[test]
    fn oracle_solves_medium_mazes() {
        for seed in 0..100 {
            let mut e = MazeEnv::new(EpisodeSeed::derive(77, seed));
            let budget = 4 * e.maze.tiles.width() * e.maze.tiles.height();
            let mut steps = 0;
            while !e.done() {
                let a = e.oracle_action();
                e.step(a);
                steps += 1;
                assert!(!e.maze.is_wall(e.pos.0, e.pos.1));
            }
            assert!(e.reached_goal(), "seed {seed} ran out of steps");
            assert!(steps <= budget);
        }
    }
}
