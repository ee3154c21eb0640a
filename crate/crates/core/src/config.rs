//! Run configuration: per-environment defaults, the desk and paper profiles, and a
//! `key = value` file format whose keys match the command-line flag names.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::RolloutParams;
use crate::envs::EnvTag;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Budgets scaled down to run on a laptop.
    Desk,
    /// Budgets as published.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Profile> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Invalid(format!("unknown profile `{s}` (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub env: EnvTag,
    pub profile: Profile,
    pub t_min: usize,
    pub t_max: usize,
    pub d_max: usize,
    /// Programs kept per task in the solved memory.
    #[serde(rename = "P")]
    pub programs_per_task: usize,
    pub search_timeout_sec: f64,
    pub top_k: usize,
    /// Deterministic per-task candidate budget; `None` leaves only the timeout.
    pub max_candidates: Option<usize>,
    pub corpus_size: usize,
    pub warmup_max: usize,
    pub max_arity: usize,
    pub oracle_episodes: usize,
    /// Tasks solved per iteration, spread evenly over the sliced set.
    pub max_tasks: Option<usize>,
    pub max_iterations: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; results do not depend on it, so it is left out of run.json.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn new(env: EnvTag, profile: Profile) -> RunConfig {
        let rollout = RolloutParams::for_env(env);
        let (d_max, p) = if env == EnvTag::Maze { (6, 100) } else { (20, 500) };
        let mut c = RunConfig {
            env,
            profile,
            t_min: rollout.t_min,
            t_max: rollout.t_max,
            d_max,
            programs_per_task: p,
            search_timeout_sec: 720.0,
            top_k: 5,
            max_candidates: None,
            corpus_size: 50_000,
            warmup_max: rollout.warmup_max,
            max_arity: 3,
            oracle_episodes: 100,
            max_tasks: None,
            max_iterations: None,
            seed: 0,
            out: PathBuf::from("runs").join(env.name()),
            jobs: None,
        };
        if profile == Profile::Desk {
            c.search_timeout_sec = 30.0;
            c.corpus_size = 2_000;
            c.max_candidates = Some(50_000);
            c.oracle_episodes = 20;
            c.max_tasks = Some(100);
            c.max_iterations = Some(5);
        }
        c
    }

    pub fn rollout_params(&self) -> RolloutParams {
        RolloutParams { t_min: self.t_min, t_max: self.t_max, warmup_max: self.warmup_max }
    }

    /// Sets one field from its flag name. `env` and `profile` are fixed at construction.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Invalid(format!("bad value `{v}` for `{key}`")))
        }
        fn opt<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
            if v == "none" { Ok(None) } else { num(key, v).map(Some) }
        }
        match key {
            "t-min" => self.t_min = num(key, value)?,
            "t-max" => self.t_max = num(key, value)?,
            "d-max" => self.d_max = num(key, value)?,
            "programs-per-task" | "P" => self.programs_per_task = num(key, value)?,
            "timeout" => self.search_timeout_sec = num(key, value)?,
            "top-k" => self.top_k = num(key, value)?,
            "max-candidates" => self.max_candidates = opt(key, value)?,
            "corpus-size" => self.corpus_size = num(key, value)?,
            "warmup-max" => self.warmup_max = num(key, value)?,
            "max-arity" => self.max_arity = num(key, value)?,
            "oracle-episodes" => self.oracle_episodes = num(key, value)?,
            "max-tasks" => self.max_tasks = opt(key, value)?,
            "max-iterations" => self.max_iterations = opt(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "jobs" => self.jobs = opt(key, value)?,
            _ => return Err(Error::Invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(m.to_string()));
        if self.t_min == 0 || self.t_min > self.t_max {
            return bad("need 1 <= t-min <= t-max");
        }
        if self.max_arity > 3 {
            return bad("max-arity is at most 3");
        }
        if self.top_k == 0 || self.programs_per_task == 0 {
            return bad("top-k and programs-per-task must be positive");
        }
        if !(self.search_timeout_sec > 0.0) {
            return bad("timeout must be positive");
        }
        if self.oracle_episodes == 0 {
            return bad("oracle-episodes must be positive");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Invalid(format!("line {}: expected key = value", n + 1)));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    parse_config_file(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_domain_table() {
        let m = RunConfig::new(EnvTag::Maze, Profile::Paper);
        assert_eq!((m.t_min, m.t_max, m.d_max, m.programs_per_task), (5, 60, 6, 100));
        let a = RunConfig::new(EnvTag::Asterix, Profile::Paper);
        assert_eq!((a.t_min, a.t_max, a.d_max, a.programs_per_task), (3, 20, 20, 500));
        assert_eq!((a.search_timeout_sec, a.corpus_size), (720.0, 50_000));
        let d = RunConfig::new(EnvTag::Maze, Profile::Desk);
        assert_eq!((d.search_timeout_sec, d.corpus_size), (30.0, 2_000));
    }

    #[test]
    fn config_file_overrides() {
        let mut c = RunConfig::new(EnvTag::Maze, Profile::Desk);
        let kv = parse_config_file("# sweep\nseed = 7\n\ntop-k=2  # fewer\nmax-tasks = none\n").unwrap();
        for (k, v) in kv {
            c.set(&k, &v).unwrap();
        }
        assert_eq!((c.seed, c.top_k, c.max_tasks), (7, 2, None));
        assert!(c.set("bogus", "1").is_err());
        assert!(parse_config_file("seed 7").is_err());
    }

    #[test]
    fn jobs_is_not_echoed() {
        let mut c = RunConfig::new(EnvTag::Maze, Profile::Desk);
        c.jobs = Some(4);
        assert!(!c.to_json().contains("jobs"));
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back.jobs, None);
    }
}
