use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{rng, EnvTag, EpisodeSeed, Grid, GridState};
use crate::dsl::Action;

pub const EMPTY: u8 = 0;
pub const CANNON: u8 = 1;
pub const ALIEN: u8 = 2;
pub const FRIENDLY_BULLET: u8 = 3;
pub const ENEMY_BULLET: u8 = 4;

const SIZE: i64 = 10;
const CANNON_ROW: i64 = SIZE - 1;
/// Initial alien block: rows 0..=3, columns 2..=7.
pub const ALIEN_ROWS: std::ops::RangeInclusive<i64> = 0..=3;
pub const ALIEN_COLS: std::ops::RangeInclusive<i64> = 2..=7;
const MARCH_EVERY: u64 = 3;
const SHOOT_EVERY: u64 = 5;
const MAX_STEPS: usize = 500;
/// Enemy bullets within this many rows above the cannon count as a threat.
const THREAT_RANGE: i64 = 4;

/// Simplified Space Invaders on a 10×10 board.
///
/// Per tick: the cannon moves or fires (one friendly bullet in flight at a time, spawned
/// in the row above the cannon), bullets advance one row, the alien block marches on a
/// fixed cadence and steps down at the edges, and a column picked by the dynamics seed
/// shoots on a fixed cadence. A cleared wave respawns.
#[derive(Debug, Clone)]
pub struct SpaceInvadersEnv {
    cannon: i64,
    aliens: Vec<(i64, i64)>,
    march_dir: i64,
    friendly: Option<(i64, i64)>,
    enemy_bullets: Vec<(i64, i64)>,
    rng: ChaCha8Rng,
    tick: u64,
    steps: usize,
    dead: bool,
    kills: u32,
}

fn fresh_wave() -> Vec<(i64, i64)> {
    let mut v = Vec::new();
    for y in ALIEN_ROWS {
        for x in ALIEN_COLS {
            v.push((x, y));
        }
    }
    v
}

impl SpaceInvadersEnv {
    pub fn new(seed: EpisodeSeed) -> SpaceInvadersEnv {
        let mut layout = rng(seed.layout);
        SpaceInvadersEnv {
            cannon: layout.random_range(0..SIZE),
            aliens: fresh_wave(),
            march_dir: if layout.random_bool(0.5) { 1 } else { -1 },
            friendly: None,
            enemy_bullets: Vec::new(),
            rng: rng(seed.dynamics),
            tick: 0,
            steps: 0,
            dead: false,
            kills: 0,
        }
    }

    pub fn cannon_column(&self) -> i64 {
        self.cannon
    }

    fn resolve_hits(&mut self) {
        if let Some(b) = self.friendly {
            if let Some(i) = self.aliens.iter().position(|&a| a == b) {
                self.aliens.remove(i);
                self.friendly = None;
                self.kills += 1;
            }
        }
    }

    pub fn step(&mut self, action: Action) {
        if self.done() {
            return;
        }
        let mut fire = false;
        match action {
            Action::Left => self.cannon = (self.cannon - 1).max(0),
            Action::Right => self.cannon = (self.cannon + 1).min(SIZE - 1),
            Action::Fire => fire = true,
            _ => {}
        }
        if let Some((x, y)) = self.friendly {
            self.friendly = (y > 0).then_some((x, y - 1));
            self.resolve_hits();
        }
        if fire && self.friendly.is_none() {
            self.friendly = Some((self.cannon, CANNON_ROW - 1));
            self.resolve_hits();
        }
        for b in &mut self.enemy_bullets {
            b.1 += 1;
        }
        self.enemy_bullets.retain(|b| b.1 <= CANNON_ROW);
        if self.enemy_bullets.iter().any(|&b| b == (self.cannon, CANNON_ROW)) {
            self.dead = true;
        }
        self.tick += 1;
        if self.tick % MARCH_EVERY == 0 {
            let blocked = self.aliens.iter().any(|&(x, _)| !(0..SIZE).contains(&(x + self.march_dir)));
            for a in &mut self.aliens {
                if blocked {
                    a.1 += 1;
                } else {
                    a.0 += self.march_dir;
                }
            }
            if blocked {
                self.march_dir = -self.march_dir;
            }
            self.resolve_hits();
            if self.aliens.iter().any(|&(_, y)| y >= CANNON_ROW) {
                self.dead = true;
            }
        }
        if self.tick % SHOOT_EVERY == 0 && !self.aliens.is_empty() {
            let mut cols: Vec<i64> = self.aliens.iter().map(|a| a.0).collect();
            cols.sort_unstable();
            cols.dedup();
            let col = cols[self.rng.random_range(0..cols.len())];
            let lowest = self.aliens.iter().filter(|a| a.0 == col).map(|a| a.1).max().unwrap();
            self.enemy_bullets.push((col, lowest + 1));
        }
        if self.aliens.is_empty() {
            self.aliens = fresh_wave();
        }
        self.steps += 1;
    }

    pub fn done(&self) -> bool {
        self.dead || self.steps >= MAX_STEPS
    }

    pub fn kills(&self) -> u32 {
        self.kills
    }

    pub fn observe(&self) -> GridState {
        let mut g = Grid::filled(SIZE as usize, SIZE as usize, EMPTY);
        for &(x, y) in &self.aliens {
            g.set(x, y, ALIEN);
        }
        for &(x, y) in &self.enemy_bullets {
            g.set(x, y, ENEMY_BULLET);
        }
        if let Some((x, y)) = self.friendly {
            g.set(x, y, FRIENDLY_BULLET);
        }
        g.set(self.cannon, CANNON_ROW, CANNON);
        GridState::new(EnvTag::SpaceInvaders, g, None)
    }

    fn threatened(&self, col: i64) -> bool {
        self.enemy_bullets.iter().any(|&(x, y)| x == col && y >= CANNON_ROW - THREAT_RANGE)
    }

    /// Dodges a bullet coming down its column, fires when under an alien, otherwise
    /// slides toward the nearest alien column (ties go left).
    pub fn oracle_action(&self) -> Action {
        let c = self.cannon;
        let target = self
            .aliens
            .iter()
            .map(|a| a.0)
            .min_by_key(|&x| ((x - c).abs(), x));
        if self.threatened(c) {
            let toward = match target {
                Some(t) if t > c => [Action::Right, Action::Left],
                _ => [Action::Left, Action::Right],
            };
            let shifted = |a: Action| if a == Action::Left { c - 1 } else { c + 1 };
            let ok = |a: Action| (0..SIZE).contains(&shifted(a)) && !self.threatened(shifted(a));
            return toward
                .into_iter()
                .find(|a| ok(*a))
                .or_else(|| toward.into_iter().find(|a| (0..SIZE).contains(&shifted(*a))))
                .unwrap_or(Action::NoOp);
        }
        match target {
            Some(t) if t == c => Action::Fire,
            Some(t) if t < c => Action::Left,
            Some(_) => Action::Right,
            None => Action::NoOp,
        }
    }
}
