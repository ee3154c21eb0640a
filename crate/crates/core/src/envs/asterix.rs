use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{rng, EnvTag, EpisodeSeed, Grid, GridState};
use crate::dsl::Action;

pub const EMPTY: u8 = 0;
pub const PLAYER: u8 = 1;
pub const GOLD: u8 = 2;
pub const ENEMY: u8 = 3;
pub const TRAIL: u8 = 4;

const SIZE: i64 = 10;
const TOP_ROW: i64 = 1;
const BOTTOM_ROW: i64 = 8;
/// Entities advance one column every `MOVE_EVERY` ticks.
const MOVE_EVERY: u64 = 2;
/// A new entity enters every `SPAWN_EVERY` ticks, in a free row chosen by the dynamics seed.
const SPAWN_EVERY: u64 = 3;
const GOLD_ODDS: f64 = 1.0 / 3.0;
const MAX_STEPS: usize = 500;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entity {
    x: i64,
    y: i64,
    dir: i64,
    gold: bool,
    prev: Option<(i64, i64)>,
}

/// Simplified Asterix on a 10×10 board: the player moves freely in rows 1–8, gold and
/// enemies stream horizontally through those rows leaving a one-cell trail. Touching an
/// enemy ends the episode; touching gold collects it.
#[derive(Debug, Clone)]
pub struct AsterixEnv {
    player: (i64, i64),
    entities: Vec<Entity>,
    rng: ChaCha8Rng,
    tick: u64,
    steps: usize,
    dead: bool,
    score: u32,
}

impl AsterixEnv {
    pub fn new(seed: EpisodeSeed) -> AsterixEnv {
        let mut layout = rng(seed.layout);
        let mut env = AsterixEnv {
            player: (5, 5),
            entities: Vec::new(),
            rng: rng(seed.dynamics),
            tick: 0,
            steps: 0,
            dead: false,
            score: 0,
        };
        for _ in 0..3 {
            env.spawn_with(&mut layout, true);
        }
        env
    }

    fn spawn_with(&mut self, r: &mut ChaCha8Rng, anywhere: bool) {
        let free: Vec<i64> = (TOP_ROW..=BOTTOM_ROW)
            .filter(|&y| y != self.player.1 && !self.entities.iter().any(|e| e.y == y))
            .collect();
        if free.is_empty() {
            return;
        }
        let y = free[r.random_range(0..free.len())];
        let from_left = r.random_bool(0.5);
        let gold = r.random_bool(GOLD_ODDS);
        let x = if anywhere {
            r.random_range(0..SIZE)
        } else if from_left {
            0
        } else {
            SIZE - 1
        };
        self.entities.push(Entity { x, y, dir: if from_left { 1 } else { -1 }, gold, prev: None });
    }

    fn collide(&mut self) {
        let p = self.player;
        if self.entities.iter().any(|e| !e.gold && (e.x, e.y) == p) {
            self.dead = true;
        }
        let before = self.entities.len();
        self.entities.retain(|e| !(e.gold && (e.x, e.y) == p));
        self.score += (before - self.entities.len()) as u32;
    }

    pub fn step(&mut self, action: Action) {
        if self.done() {
            return;
        }
        let (x, y) = self.player;
        self.player = match action {
            Action::Left => ((x - 1).max(0), y),
            Action::Right => ((x + 1).min(SIZE - 1), y),
            Action::Up => (x, (y - 1).max(TOP_ROW)),
            Action::Down => (x, (y + 1).min(BOTTOM_ROW)),
            _ => (x, y),
        };
        self.collide();
        self.tick += 1;
        if self.tick % MOVE_EVERY == 0 {
            for e in &mut self.entities {
                e.prev = Some((e.x, e.y));
                e.x += e.dir;
            }
            self.entities.retain(|e| (0..SIZE).contains(&e.x));
            self.collide();
        }
        if self.tick % SPAWN_EVERY == 0 {
            let mut r = self.rng.clone();
            self.spawn_with(&mut r, false);
            self.rng = r;
        }
        self.steps += 1;
    }

    pub fn done(&self) -> bool {
        self.dead || self.steps >= MAX_STEPS
    }

    pub fn score(&self) -> u32 {
        self.score
    }

    pub fn observe(&self) -> GridState {
        let mut g = Grid::filled(SIZE as usize, SIZE as usize, EMPTY);
        for e in &self.entities {
            if let Some((px, py)) = e.prev {
                if g.get(px, py) == Some(EMPTY) {
                    g.set(px, py, TRAIL);
                }
            }
        }
        for e in &self.entities {
            g.set(e.x, e.y, if e.gold { GOLD } else { ENEMY });
        }
        g.set(self.player.0, self.player.1, PLAYER);
        GridState::new(EnvTag::Asterix, g, None)
    }

    /// Steps away from an adjacent enemy; otherwise heads for the nearest gold, matching
    /// its row first. Idles when there is nothing to chase.
    pub fn oracle_action(&self) -> Action {
        let (px, py) = self.player;
        let enemy_at = |x: i64, y: i64| self.entities.iter().any(|e| !e.gold && e.x == x && e.y == y);
        let escapes = [
            ((px - 1, py), [Action::Right, Action::Up, Action::Down]),
            ((px + 1, py), [Action::Left, Action::Up, Action::Down]),
            ((px, py - 1), [Action::Down, Action::Left, Action::Right]),
            ((px, py + 1), [Action::Up, Action::Left, Action::Right]),
        ];
        for ((ex, ey), options) in escapes {
            if enemy_at(ex, ey) {
                return options
                    .into_iter()
                    .find(|a| self.move_is_safe(*a))
                    .unwrap_or(options[0]);
            }
        }
        let nearest = self
            .entities
            .iter()
            .filter(|e| e.gold)
            .min_by_key(|e| ((e.x - px).abs() + (e.y - py).abs(), e.y, e.x));
        match nearest {
            Some(g) if g.y < py => Action::Up,
            Some(g) if g.y > py => Action::Down,
            Some(g) if g.x < px => Action::Left,
            Some(g) if g.x > px => Action::Right,
            _ => Action::NoOp,
        }
    }

    fn move_is_safe(&self, a: Action) -> bool {
        let (px, py) = self.player;
        let (nx, ny) = match a {
            Action::Left => (px - 1, py),
            Action::Right => (px + 1, py),
            Action::Up => (px, py - 1),
            Action::Down => (px, py + 1),
            _ => (px, py),
        };
        (0..SIZE).contains(&nx)
            && (TOP_ROW..=BOTTOM_ROW).contains(&ny)
            && !self.entities.iter().any(|e| !e.gold && e.x == nx && e.y == ny)
    }
}
