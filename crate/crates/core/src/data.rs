//! Imitation datasets: oracle and program rollouts, sub-trajectory tasks, the accuracy
//! metric and the text-prompt export.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::{exec, print_program, Action, Term};
use crate::envs::{rng, Env, EnvTag, EpisodeSeed, Grid, GridState};
use crate::error::{Error, Result};
use crate::grammar::Grammar;

pub const TASKSET_VERSION: &str = "gridsynth-taskset-v1";
pub const ROLLOUTS_VERSION: &str = "gridsynth-rollouts-v1";

/// One recorded observation and the action taken in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub grid: Arc<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<u8>,
    pub action: Action,
}

impl Step {
    pub fn new(state: &GridState, action: Action) -> Step {
        Step { grid: state.grid.clone(), direction: state.direction, action }
    }

    pub fn state(&self, env: EnvTag) -> GridState {
        GridState { env, grid: self.grid.clone(), direction: self.direction }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum Provenance {
    Oracle { seeds: EpisodeSeed },
    Program { program: String, seeds: EpisodeSeed, warmup: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trajectory {
    pub id: String,
    pub env_tag: EnvTag,
    pub provenance: Provenance,
    pub steps: Vec<Step>,
}

/// A fixed-length window of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskSet {
    pub version: String,
    pub env_tag: EnvTag,
    #[serde(rename = "L")]
    pub length: usize,
    pub tasks: Vec<Task>,
}

impl TaskSet {
    pub fn new(env: EnvTag, length: usize, tasks: Vec<Task>) -> TaskSet {
        TaskSet { version: TASKSET_VERSION.to_string(), env_tag: env, length, tasks }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Keeps at most `n` tasks, spread evenly over the set.
    pub fn thin(&self, n: usize) -> TaskSet {
        if self.tasks.len() <= n {
            return self.clone();
        }
        let tasks = (0..n).map(|i| self.tasks[i * self.tasks.len() / n].clone()).collect();
        TaskSet::new(self.env_tag, self.length, tasks)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("task set serializes")
    }

    pub fn from_json(text: &str) -> Result<TaskSet> {
        let ts: TaskSet = serde_json::from_str(text)?;
        if ts.version != TASKSET_VERSION {
            return Err(Error::Invalid(format!("unsupported task set version {}", ts.version)));
        }
        Ok(ts)
    }
}

/// Program rollout lengths and the MinAtar oracle warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RolloutParams {
    pub t_min: usize,
    pub t_max: usize,
    pub warmup_max: usize,
}

impl RolloutParams {
    pub fn for_env(env: EnvTag) -> RolloutParams {
        match env {
            EnvTag::Maze => RolloutParams { t_min: 5, t_max: 60, warmup_max: 0 },
            _ => RolloutParams { t_min: 3, t_max: 20, warmup_max: 50 },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RolloutFile {
    version: String,
    env_tag: EnvTag,
    trajectories: Vec<Trajectory>,
}

pub fn rollouts_to_json(env: EnvTag, trajs: &[Trajectory]) -> String {
    let file = RolloutFile { version: ROLLOUTS_VERSION.to_string(), env_tag: env, trajectories: trajs.to_vec() };
    serde_json::to_string(&file).expect("rollouts serialize")
}

pub fn rollouts_from_json(text: &str) -> Result<(EnvTag, Vec<Trajectory>)> {
    let file: RolloutFile = serde_json::from_str(text)?;
    if file.version != ROLLOUTS_VERSION {
        return Err(Error::Invalid(format!("unsupported rollout version {}", file.version)));
    }
    Ok((file.env_tag, file.trajectories))
}

/// Full oracle episodes, optionally truncated to `max_len` steps.
pub fn collect_oracle_rollouts(env: EnvTag, count: usize, seed: u64, max_len: Option<usize>) -> Vec<Trajectory> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seeds = EpisodeSeed::derive(seed, i);
            let mut e = Env::reset(env, seeds);
            let mut steps = Vec::new();
            while !e.done() && max_len.is_none_or(|m| steps.len() < m) {
                let a = e.oracle_action();
                steps.push(Step::new(&e.observe(), a));
                e.step(a).expect("oracle actions are legal");
            }
            Trajectory { id: format!("oracle-{i}"), env_tag: env, provenance: Provenance::Oracle { seeds }, steps }
        })
        .collect()
}

/// Samples `count` programs and records their behaviour for a random number of steps.
///
/// MinAtar episodes first run the oracle for up to `warmup_max` steps. A rollout stops
/// early when the episode ends or the program fails to evaluate; rollouts that record no
/// step at all are dropped, so fewer than `count` pairs may be returned.
pub fn collect_program_rollouts(
    g: &Grammar,
    count: usize,
    params: RolloutParams,
    d_max: usize,
    seed: u64,
) -> Result<Vec<(Term, Trajectory)>> {
    let env = g.env();
    let request = g.request();
    let out: Vec<Option<(Term, Trajectory)>> = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(EpisodeSeed::derive(seed, k).dynamics);
            let program = g.sample_with(&request, d_max, crate::grammar::DEFAULT_MAX_NODES, &mut r)?;
            let seeds = EpisodeSeed::derive(seed ^ 0xA5A5_5A5A_0F0F_F0F0, k);
            let mut e = Env::reset(env, seeds);
            let warmup = if env.has_direction() { 0 } else { r.random_range(0..=params.warmup_max) };
            for _ in 0..warmup {
                if e.done() {
                    break;
                }
                e.step(e.oracle_action())?;
            }
            let t = r.random_range(params.t_min..=params.t_max);
            let mut steps = Vec::with_capacity(t);
            while steps.len() < t && !e.done() {
                let s = e.observe();
                let Ok(a) = exec(&program, &s) else { break };
                steps.push(Step::new(&s, a));
                e.step(a)?;
            }
            if steps.is_empty() {
                return Ok(None);
            }
            let provenance = Provenance::Program { program: print_program(&program), seeds, warmup };
            let traj = Trajectory { id: format!("program-{k}"), env_tag: env, provenance, steps };
            Ok(Some((program, traj)))
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().flatten().collect())
}

/// Non-overlapping consecutive windows of length `length`; short tails are dropped.
pub fn slice(trajs: &[Trajectory], length: usize) -> TaskSet {
    assert!(length >= 1, "slice length must be positive");
    let env = trajs.first().map_or(EnvTag::Maze, |t| t.env_tag);
    let mut tasks = Vec::new();
    for t in trajs {
        for (w, chunk) in t.steps.chunks_exact(length).enumerate() {
            tasks.push(Task { id: format!("{}@{}", t.id, w * length), steps: chunk.to_vec() });
        }
    }
    TaskSet::new(env, length, tasks)
}

/// Whether the program reproduces every action, stopping at the first mismatch.
/// Evaluation errors count as mismatches.
pub fn imitates(program: &Term, env: EnvTag, steps: &[Step]) -> bool {
    steps.iter().all(|s| exec(program, &s.state(env)).is_ok_and(|a| a == s.action))
}

/// Fraction of tasks imitated by at least one of their supplied programs. Programs are
/// re-verified; the listed ids must all belong to `tasks`.
pub fn accuracy(solutions: &BTreeMap<String, Vec<Term>>, tasks: &TaskSet) -> Result<f64> {
    if tasks.is_empty() {
        return Ok(0.0);
    }
    let index: BTreeMap<&str, &Task> = tasks.tasks.iter().map(|t| (t.id.as_str(), t)).collect();
    if let Some(bad) = solutions.keys().find(|id| !index.contains_key(id.as_str())) {
        return Err(Error::UnknownTaskId(bad.clone()));
    }
    let solved: usize = solutions
        .par_iter()
        .filter(|(id, progs)| {
            let task = index[id.as_str()];
            progs.iter().any(|p| imitates(p, tasks.env_tag, &task.steps))
        })
        .count();
    Ok(solved as f64 / tasks.len() as f64)
}

/// Text encoding of a sub-trajectory: per step the grid digits row by row, the heading
/// digit when present, a space and the action word; steps are joined by single spaces.
pub fn encode_prompt(steps: &[Step]) -> Result<String> {
    let mut out = String::new();
    for (i, s) in steps.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        for &c in s.grid.cells() {
            if c >= 10 {
                return Err(Error::MultiDigitCode(c));
            }
            out.push(char::from(b'0' + c));
        }
        if let Some(d) = s.direction {
            if d >= 10 {
                return Err(Error::MultiDigitCode(d));
            }
            out.push(char::from(b'0' + d));
        }
        write!(out, " {}", s.action.word()).expect("writing to a string");
    }
    Ok(out)
}

/// One prompt per line, in task order.
pub fn export_prompts(tasks: &TaskSet) -> Result<String> {
    let mut out = String::new();
    for t in &tasks.tasks {
        out.push_str(&encode_prompt(&t.steps)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    fn maze_step(cells: &str, dir: u8, action: Action) -> Step {
        let cells = cells.bytes().map(|b| b - b'0').collect();
        Step { grid: Arc::new(Grid::new(5, 5, cells)), direction: Some(dir), action }
    }

    fn traj(n: usize) -> Trajectory {
        let steps = (0..n).map(|i| maze_step("1111111111111111111111111", (i % 4) as u8, Action::Forward)).collect();
        Trajectory { id: "t".into(), env_tag: EnvTag::Maze, provenance: Provenance::Oracle { seeds: EpisodeSeed::new(0, 0) }, steps }
    }

    #[test]
    fn slicing_drops_short_tails() {
        let ts = slice(&[traj(7)], 3);
        assert_eq!(ts.len(), 2);
        assert_eq!(ts.tasks[1].id, "t@3");
        assert_eq!(slice(&[traj(2)], 3).len(), 0);
    }

    #[test]
    fn prompt_layout() {
        let s = Step { grid: Arc::new(Grid::new(2, 2, vec![1; 4])), direction: None, action: Action::NoOp };
        assert_eq!(encode_prompt(&[s.clone()]).unwrap(), "1111 no-op");
        let bad = Step { grid: Arc::new(Grid::new(1, 1, vec![12])), ..s };
        assert_eq!(encode_prompt(&[bad]), Err(Error::MultiDigitCode(12)));
    }

    #[test]
    fn accuracy_rejects_unknown_ids() {
        let ts = slice(&[traj(6)], 3);
        let g = crate::dsl::PrimTable::base(EnvTag::Maze);
        let fwd = parse_program("(λ(x) (λ(y) forward-action))", &g).unwrap();
        let mut sol = BTreeMap::new();
        assert_eq!(accuracy(&sol, &ts).unwrap(), 0.0);
        sol.insert("t@0".to_string(), vec![fwd.clone()]);
        assert_eq!(accuracy(&sol, &ts).unwrap(), 0.5);
        sol.insert("t@3".to_string(), vec![fwd.clone()]);
        assert_eq!(accuracy(&sol, &ts).unwrap(), 1.0);
        sol.insert("nope".to_string(), vec![fwd]);
        assert!(matches!(accuracy(&sol, &ts), Err(Error::UnknownTaskId(_))));
    }

    #[test]
    fn program_rollouts_respect_lengths() {
        let g = Grammar::uniform(EnvTag::Maze);
        let p = RolloutParams::for_env(EnvTag::Maze);
        for (_, t) in collect_program_rollouts(&g, 40, p, 6, 3).unwrap() {
            assert!(t.steps.len() <= 60 && !t.steps.is_empty());
        }
        let again = collect_program_rollouts(&g, 40, p, 6, 3).unwrap();
        assert_eq!(collect_program_rollouts(&g, 40, p, 6, 3).unwrap(), again);
    }
}
