//! Deterministic grid environments and their scripted oracle policies.

mod asterix;
mod maze;
mod space_invaders;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use asterix::AsterixEnv;
pub use maze::{Maze, MazeEnv};
pub use space_invaders::SpaceInvadersEnv;

use crate::dsl::{Action, BaseTy, Ty};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvTag {
    #[serde(rename = "maze")]
    Maze,
    #[serde(rename = "asterix")]
    Asterix,
    #[serde(rename = "spaceinvaders")]
    SpaceInvaders,
}

const MAZE_OBJECTS: [(u8, &str); 3] = [(1, "empty"), (2, "wall"), (3, "goal")];
const ASTERIX_OBJECTS: [(u8, &str); 5] = [(0, "empty"), (1, "player"), (2, "gold"), (3, "enemy"), (4, "trail")];
const INVADERS_OBJECTS: [(u8, &str); 5] =
    [(0, "empty"), (1, "cannon"), (2, "alien"), (3, "friendly-bullet"), (4, "enemy-bullet")];

impl EnvTag {
    pub const ALL: [EnvTag; 3] = [EnvTag::Maze, EnvTag::Asterix, EnvTag::SpaceInvaders];

    pub fn name(self) -> &'static str {
        match self {
            EnvTag::Maze => "maze",
            EnvTag::Asterix => "asterix",
            EnvTag::SpaceInvaders => "spaceinvaders",
        }
    }

    pub fn actions(self) -> &'static [Action] {
        match self {
            EnvTag::Maze => &[Action::Left, Action::Right, Action::Forward],
            EnvTag::Asterix => &[Action::Left, Action::Right, Action::Up, Action::Down, Action::NoOp],
            EnvTag::SpaceInvaders => &[Action::Left, Action::Right, Action::Fire, Action::NoOp],
        }
    }

    /// Object code table `(code, name)`.
    pub fn objects(self) -> &'static [(u8, &'static str)] {
        match self {
            EnvTag::Maze => &MAZE_OBJECTS,
            EnvTag::Asterix => &ASTERIX_OBJECTS,
            EnvTag::SpaceInvaders => &INVADERS_OBJECTS,
        }
    }

    /// Largest integer constant in the DSL.
    pub fn max_int(self) -> i64 {
        match self {
            EnvTag::Maze => 5,
            _ => 9,
        }
    }

    /// Observation shape as (width, height).
    pub fn shape(self) -> (usize, usize) {
        match self {
            EnvTag::Maze => (5, 5),
            _ => (10, 10),
        }
    }

    pub fn has_direction(self) -> bool {
        self == EnvTag::Maze
    }

    /// Program type requested for this environment.
    pub fn request(self) -> Ty {
        let map = Ty::Base(BaseTy::Map);
        let action = Ty::Base(BaseTy::Action);
        if self.has_direction() {
            Ty::function(&[map, Ty::Base(BaseTy::Direction)], action)
        } else {
            Ty::arrow(map, action)
        }
    }

    pub fn spec(self) -> EnvSpec {
        let (width, height) = self.shape();
        EnvSpec {
            env: self,
            actions: self.actions().to_vec(),
            objects: self.objects().iter().map(|(c, n)| (*c, n.to_string())).collect(),
            width,
            height,
            request: self.request().to_string(),
        }
    }
}

impl fmt::Display for EnvTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<EnvTag> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "maze" => Ok(EnvTag::Maze),
            "asterix" => Ok(EnvTag::Asterix),
            "spaceinvaders" => Ok(EnvTag::SpaceInvaders),
            _ => Err(Error::UnknownEnv(s.to_string())),
        }
    }
}

/// Static description of an environment.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnvSpec {
    pub env: EnvTag,
    pub actions: Vec<Action>,
    pub objects: Vec<(u8, String)>,
    pub width: usize,
    pub height: usize,
    pub request: String,
}

/// Row-major grid of object codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<u8>>", try_from = "Vec<Vec<u8>>")]
pub struct Grid {
    width: usize,
    height: usize,
    cells: Vec<u8>,
}

impl Grid {
    pub fn new(width: usize, height: usize, cells: Vec<u8>) -> Grid {
        assert_eq!(cells.len(), width * height, "grid cell count must equal width*height");
        Grid { width, height, cells }
    }

    pub fn filled(width: usize, height: usize, code: u8) -> Grid {
        Grid::new(width, height, vec![code; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    /// Cell at column `x`, row `y`; `None` when out of bounds.
    pub fn get(&self, x: i64, y: i64) -> Option<u8> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return None;
        }
        Some(self.cells[y as usize * self.width + x as usize])
    }

    pub fn set(&mut self, x: i64, y: i64, code: u8) {
        if let Some(i) = self.index(x, y) {
            self.cells[i] = code;
        }
    }

    fn index(&self, x: i64, y: i64) -> Option<usize> {
        (x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height)
            .then(|| y as usize * self.width + x as usize)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks(self.width)
    }

    pub fn count(&self, code: u8) -> usize {
        self.cells.iter().filter(|&&c| c == code).count()
    }
}

impl From<Grid> for Vec<Vec<u8>> {
    fn from(g: Grid) -> Self {
        g.rows().map(<[u8]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<u8>>> for Grid {
    type Error = String;

    fn try_from(rows: Vec<Vec<u8>>) -> std::result::Result<Self, String> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err("grid rows must be nonempty and of equal length".into());
        }
        Ok(Grid::new(width, height, rows.concat()))
    }
}

/// One observation: object-code grid plus, in the maze, the agent's heading.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub env: EnvTag,
    pub grid: Arc<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<u8>,
}

impl GridState {
    pub fn new(env: EnvTag, grid: Grid, direction: Option<u8>) -> GridState {
        GridState { env, grid: Arc::new(grid), direction }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct EpisodeSeed {
    pub layout: u64,
    pub dynamics: u64,
}

impl EpisodeSeed {
    pub fn new(layout: u64, dynamics: u64) -> EpisodeSeed {
        EpisodeSeed { layout, dynamics }
    }

    /// Two independent seeds derived from one episode index.
    pub fn derive(base: u64, episode: u64) -> EpisodeSeed {
        let mix = |x: u64| {
            let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        let a = mix(base ^ mix(episode));
        EpisodeSeed { layout: a, dynamics: mix(a) }
    }
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A running episode of any environment.
#[derive(Debug, Clone)]
pub enum Env {
    Maze(MazeEnv),
    Asterix(AsterixEnv),
    SpaceInvaders(SpaceInvadersEnv),
}

impl Env {
    pub fn reset(tag: EnvTag, seed: EpisodeSeed) -> Env {
        match tag {
            EnvTag::Maze => Env::Maze(MazeEnv::new(seed)),
            EnvTag::Asterix => Env::Asterix(AsterixEnv::new(seed)),
            EnvTag::SpaceInvaders => Env::SpaceInvaders(SpaceInvadersEnv::new(seed)),
        }
    }

    pub fn tag(&self) -> EnvTag {
        match self {
            Env::Maze(_) => EnvTag::Maze,
            Env::Asterix(_) => EnvTag::Asterix,
            Env::SpaceInvaders(_) => EnvTag::SpaceInvaders,
        }
    }

    pub fn observe(&self) -> GridState {
        match self {
            Env::Maze(e) => e.observe(),
            Env::Asterix(e) => e.observe(),
            Env::SpaceInvaders(e) => e.observe(),
        }
    }

    /// Advances one tick. Returns the next observation and whether the episode ended.
    pub fn step(&mut self, action: Action) -> Result<(GridState, bool)> {
        if !self.tag().actions().contains(&action) {
            return Err(Error::IllegalAction(action.word().to_string()));
        }
        match self {
            Env::Maze(e) => e.step(action),
            Env::Asterix(e) => e.step(action),
            Env::SpaceInvaders(e) => e.step(action),
        }
        Ok((self.observe(), self.done()))
    }

    pub fn done(&self) -> bool {
        match self {
            Env::Maze(e) => e.done(),
            Env::Asterix(e) => e.done(),
            Env::SpaceInvaders(e) => e.done(),
        }
    }

    /// The scripted oracle's choice in the current state.
    pub fn oracle_action(&self) -> Action {
        match self {
            Env::Maze(e) => e.oracle_action(),
            Env::Asterix(e) => e.oracle_action(),
            Env::SpaceInvaders(e) => e.oracle_action(),
        }
    }
}
