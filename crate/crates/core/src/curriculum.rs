//! The iterate loop: sample a random-program corpus, refit, solve the oracle tasks at the
//! current length, compress, report. The length grows by one whenever at least 10% of the
//! tasks are imitated; two failed checks in a row end the run.
//!
//! Layout of a run directory:
//!
//! ```text
//! <out>/run.json            config echo, history, stop reason
//! <out>/timings.json        wall-clock seconds per stage
//! <out>/oracle.json         oracle rollouts the tasks are sliced from
//! <out>/grammar.json        latest grammar (refit on the solved memory, with the library)
//! <out>/iter-<k>/corpus.json   random programs with their rollout prompts
//! <out>/iter-<k>/grammar.json  grammar used for the search
//! <out>/iter-<k>/tasks.json    tasks at this length
//! <out>/iter-<k>/solved.json   search results per task
//! <out>/iter-<k>/library.json  library after compression
//! <out>/iter-<k>/memory.json   solved memory after rewriting
//! <out>/iter-<k>/report.json   iteration summary
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{self, accuracy, collect_oracle_rollouts, collect_program_rollouts, encode_prompt, slice, TaskSet, Trajectory};
use crate::dsl::{parse_program, print_program, PrimTable, Term};
use crate::enumerate::{solve_tasks, SearchBudget, SolvedRecord};
use crate::error::{Error, Result};
use crate::grammar::Grammar;
use crate::library::{self, call_counts, compress, library_to_json, Abstraction, CompressionResult};

pub const RUN_VERSION: &str = "gridsynth-run-v1";
pub const REPORT_VERSION: &str = "gridsynth-report-v1";
pub const SOLVED_VERSION: &str = "gridsynth-solved-v1";
pub const MEMORY_VERSION: &str = "gridsynth-memory-v1";
pub const CORPUS_VERSION: &str = "gridsynth-corpus-v1";
pub const TIMINGS_VERSION: &str = "gridsynth-timings-v1";

pub const INITIAL_LENGTH: usize = 3;
/// Fraction of tasks that must be imitated to move to the next length (inclusive).
pub const THRESHOLD: f64 = 0.10;
pub const MAX_FAILS: usize = 2;

/// Seed offset for evaluation data that the run never saw.
const FRESH_SEED: u64 = 0x5EED_F2E5_0000_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HistoryEntry {
    pub iteration: usize,
    #[serde(rename = "L")]
    pub length: usize,
    pub solve_rate: f64,
    pub library_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CurriculumState {
    #[serde(rename = "L")]
    pub length: usize,
    pub consecutive_fails: usize,
    pub iteration: usize,
    pub history: Vec<HistoryEntry>,
}

impl Default for CurriculumState {
    fn default() -> Self {
        CurriculumState { length: INITIAL_LENGTH, consecutive_fails: 0, iteration: 0, history: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Advance {
    Continue(CurriculumState),
    Stop(CurriculumState),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationReport {
    pub version: String,
    pub iteration: usize,
    #[serde(rename = "L")]
    pub length: usize,
    pub n_tasks: usize,
    pub solved_tasks: usize,
    pub solve_rate: f64,
    pub candidates_tried: usize,
    pub corpus_programs: usize,
    pub new_abstractions: Vec<String>,
    pub library_size: usize,
    /// Solved programs of this iteration that call a library function.
    pub programs_using_library: usize,
    pub dl_before: f64,
    pub dl_after: f64,
    pub grammar_snapshot: String,
}

/// Applies the advancement rule to the outcome of the iteration at `cs.length`.
pub fn advance(cs: &CurriculumState, report: &IterationReport) -> Advance {
    let mut next = cs.clone();
    next.history.push(HistoryEntry {
        iteration: cs.iteration,
        length: cs.length,
        solve_rate: report.solve_rate,
        library_size: report.library_size,
    });
    next.iteration += 1;
    if report.solve_rate >= THRESHOLD {
        next.length += 1;
        next.consecutive_fails = 0;
        Advance::Continue(next)
    } else {
        next.consecutive_fails += 1;
        if next.consecutive_fails >= MAX_FAILS {
            Advance::Stop(next)
        } else {
            Advance::Continue(next)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    TwoConsecutiveFails,
    MaxIterations,
    /// No oracle trajectory is long enough for the current length.
    NoTasks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunRecord {
    pub version: String,
    pub config: RunConfig,
    pub state: CurriculumState,
    pub stop_reason: Option<StopReason>,
}

/// Solved programs remembered across iterations, keyed by length and task id.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub task_id: String,
    pub length: usize,
    /// Cheapest first; the first program is the one compression rewrites.
    pub programs: Vec<Term>,
}

pub type Memory = BTreeMap<String, MemoryEntry>;

pub fn memory_key(length: usize, task_id: &str) -> String {
    format!("L{length}/{task_id}")
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct MemoryRecord {
    key: String,
    task_id: String,
    #[serde(rename = "L")]
    length: usize,
    programs: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct MemoryFile {
    version: String,
    entries: Vec<MemoryRecord>,
}

pub fn memory_to_json(m: &Memory) -> String {
    let entries = m
        .iter()
        .map(|(k, e)| MemoryRecord {
            key: k.clone(),
            task_id: e.task_id.clone(),
            length: e.length,
            programs: e.programs.iter().map(print_program).collect(),
        })
        .collect();
    serde_json::to_string_pretty(&MemoryFile { version: MEMORY_VERSION.into(), entries }).expect("memory serializes")
}

pub fn memory_from_json(text: &str, prims: &PrimTable) -> Result<Memory> {
    let file: MemoryFile = serde_json::from_str(text)?;
    check_version(&file.version, MEMORY_VERSION)?;
    file.entries
        .into_iter()
        .map(|r| {
            let programs = r.programs.iter().map(|p| parse_program(p, prims)).collect::<Result<_>>()?;
            Ok((r.key, MemoryEntry { task_id: r.task_id, length: r.length, programs }))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolvedFile {
    pub version: String,
    #[serde(rename = "L")]
    pub length: usize,
    pub tasks: Vec<SolvedRecord>,
}

impl SolvedFile {
    pub fn from_json(text: &str) -> Result<SolvedFile> {
        let f: SolvedFile = serde_json::from_str(text)?;
        check_version(&f.version, SOLVED_VERSION)?;
        Ok(f)
    }
}

#[derive(Serialize)]
struct CorpusExample {
    program: String,
    prompt: Option<String>,
}

#[derive(Serialize)]
struct CorpusFile<'a> {
    version: &'a str,
    examples: Vec<CorpusExample>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct StageTimes {
    iteration: usize,
    #[serde(rename = "L")]
    length: usize,
    sample: f64,
    refit: f64,
    solve: f64,
    compress: f64,
    total: f64,
}

#[derive(Serialize, Deserialize)]
struct TimingsFile {
    version: String,
    iterations: Vec<StageTimes>,
}

fn check_version(found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Invalid(format!("unsupported file version {found} (expected {expected})")))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

pub fn iteration_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("iter-{k}"))
}

fn corpus_seed(seed: u64, iteration: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(iteration as u64 + 1)
}

pub fn fresh_seed(seed: u64) -> u64 {
    seed ^ FRESH_SEED
}

/// Thins a task set to at most `max` tasks when a cap is given.
fn capped(tasks: TaskSet, max: Option<usize>) -> TaskSet {
    match max {
        Some(n) if tasks.len() > n => tasks.thin(n),
        _ => tasks,
    }
}

pub fn search_budget(c: &RunConfig) -> SearchBudget {
    let b = SearchBudget::new(c.search_timeout_sec, c.top_k, c.d_max);
    match c.max_candidates {
        Some(n) => b.with_max_candidates(n),
        None => b,
    }
}

/// Curriculum driver holding everything carried from one iteration to the next.
pub struct Runner {
    pub config: RunConfig,
    pub oracle: Vec<Trajectory>,
    pub grammar: Grammar,
    pub library: Vec<Abstraction>,
    pub memory: Memory,
    pub state: CurriculumState,
    pub stop_reason: Option<StopReason>,
    /// Result of the latest compression, kept for inspection.
    pub last_compression: Option<CompressionResult>,
    timings: Vec<StageTimes>,
}

impl Runner {
    /// Collects the oracle data and prepares the output directory.
    pub fn new(config: RunConfig) -> Result<Runner> {
        config.validate()?;
        fs::create_dir_all(&config.out)?;
        let oracle = collect_oracle_rollouts(config.env, config.oracle_episodes, config.seed, None);
        write(&config.out.join("oracle.json"), &data::rollouts_to_json(config.env, &oracle))?;
        let grammar = Grammar::uniform(config.env);
        let r = Runner {
            config,
            oracle,
            grammar,
            library: Vec::new(),
            memory: Memory::new(),
            state: CurriculumState::default(),
            stop_reason: None,
            last_compression: None,
            timings: Vec::new(),
        };
        r.write_run()?;
        Ok(r)
    }

    fn write_run(&self) -> Result<()> {
        let rec = RunRecord {
            version: RUN_VERSION.into(),
            config: self.config.clone(),
            state: self.state.clone(),
            stop_reason: self.stop_reason,
        };
        write(&self.config.out.join("run.json"), &serde_json::to_string_pretty(&rec)?)?;
        let t = TimingsFile { version: TIMINGS_VERSION.into(), iterations: self.timings.clone() };
        write(&self.config.out.join("timings.json"), &serde_json::to_string_pretty(&t)?)
    }

    fn memory_programs(&self) -> Vec<Term> {
        self.memory.values().flat_map(|e| e.programs.iter().cloned()).collect()
    }

    /// One pass of sample, refit, solve, compress, report. Each stage's files are written
    /// before the next stage starts.
    pub fn run_iteration(&mut self) -> Result<IterationReport> {
        let c = self.config.clone();
        let k = self.state.iteration;
        let length = self.state.length;
        let dir = iteration_dir(&c.out, k);
        fs::create_dir_all(&dir)?;
        let mut times = StageTimes { iteration: k, length, ..StageTimes::default() };
        let start = Instant::now();

        let t = Instant::now();
        let corpus = collect_program_rollouts(&self.grammar, c.corpus_size, c.rollout_params(), c.d_max, corpus_seed(c.seed, k))?;
        let examples = corpus
            .iter()
            .map(|(p, tr)| CorpusExample { program: print_program(p), prompt: encode_prompt(&tr.steps).ok() })
            .collect();
        write(&dir.join("corpus.json"), &serde_json::to_string(&CorpusFile { version: CORPUS_VERSION, examples })?)?;
        times.sample = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let g = self.grammar.refit(&self.memory_programs());
        write(&dir.join("grammar.json"), &g.to_json())?;
        times.refit = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let tasks = capped(slice(&self.oracle, length), c.max_tasks);
        write(&dir.join("tasks.json"), &tasks.to_json())?;
        let results = solve_tasks(&g, &tasks, &search_budget(&c));
        let solved = SolvedFile {
            version: SOLVED_VERSION.into(),
            length,
            tasks: results.iter().map(|r| r.record()).collect(),
        };
        write(&dir.join("solved.json"), &serde_json::to_string_pretty(&solved)?)?;
        times.solve = t.elapsed().as_secs_f64();

        let solutions: BTreeMap<String, Vec<Term>> =
            results.iter().map(|r| (r.task_id.clone(), r.programs.clone())).collect();
        let solve_rate = if tasks.is_empty() { 0.0 } else { accuracy(&solutions, &tasks)? };
        let programs_using_library =
            results.iter().filter(|r| r.programs.first().is_some_and(|p| p.uses_invented())).count();
        for r in results.iter().filter(|r| r.is_solved()) {
            let mut programs = r.programs.clone();
            programs.truncate(c.programs_per_task);
            self.memory.insert(memory_key(length, &r.task_id), MemoryEntry { task_id: r.task_id.clone(), length, programs });
        }

        let t = Instant::now();
        let best: BTreeMap<String, Term> =
            self.memory.iter().map(|(key, e)| (key.clone(), e.programs[0].clone())).collect();
        let (grammar, new_abstractions, dl_before, dl_after) = if best.is_empty() {
            self.last_compression = None;
            (g.clone(), Vec::new(), 0.0, 0.0)
        } else {
            let r = compress(&best, &g, c.max_arity)?;
            self.last_compression = Some(r.clone());
            for (key, t) in r.rewritten {
                if let Some(e) = self.memory.get_mut(&key) {
                    e.programs[0] = t;
                }
            }
            (r.grammar, r.abstractions, r.dl_before, r.dl_after)
        };
        let new_names: Vec<String> = new_abstractions.iter().map(|a| a.name.clone()).collect();
        self.library.extend(new_abstractions);
        let firsts: Vec<Term> = self.memory.values().map(|e| e.programs[0].clone()).collect();
        let counts = call_counts(&firsts, &grammar);
        for a in &mut self.library {
            a.use_count = counts.get(&a.name).copied().unwrap_or(0);
        }
        write(&dir.join("library.json"), &library_to_json(&self.library))?;
        write(&dir.join("memory.json"), &memory_to_json(&self.memory))?;
        self.grammar = grammar.refit(&self.memory_programs());
        write(&c.out.join("grammar.json"), &self.grammar.to_json())?;
        times.compress = t.elapsed().as_secs_f64();

        let report = IterationReport {
            version: REPORT_VERSION.into(),
            iteration: k,
            length,
            n_tasks: tasks.len(),
            solved_tasks: results.iter().filter(|r| r.is_solved()).count(),
            solve_rate,
            candidates_tried: results.iter().map(|r| r.candidates_tried).sum(),
            corpus_programs: corpus.len(),
            new_abstractions: new_names,
            library_size: self.library.len(),
            programs_using_library,
            dl_before,
            dl_after,
            grammar_snapshot: format!("iter-{k}/grammar.json"),
        };
        write(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
        times.total = start.elapsed().as_secs_f64();
        self.timings.push(times);
        Ok(report)
    }

    /// Runs one iteration and applies the advancement rule. Returns `None` once the run
    /// has stopped.
    pub fn step(&mut self) -> Result<Option<IterationReport>> {
        if self.stop_reason.is_some() {
            return Ok(None);
        }
        if self.config.max_iterations.is_some_and(|m| self.state.iteration >= m) {
            self.stop_reason = Some(StopReason::MaxIterations);
        } else if self.oracle.iter().all(|t| t.steps.len() < self.state.length) {
            self.stop_reason = Some(StopReason::NoTasks);
        }
        if self.stop_reason.is_some() {
            self.write_run()?;
            return Ok(None);
        }
        let report = self.run_iteration()?;
        match advance(&self.state, &report) {
            Advance::Continue(s) => self.state = s,
            Advance::Stop(s) => {
                self.state = s;
                self.stop_reason = Some(StopReason::TwoConsecutiveFails);
            }
        }
        self.write_run()?;
        Ok(Some(report))
    }

    /// Runs iterations until the curriculum stops or the iteration cap is reached.
    pub fn run(&mut self, mut on_report: impl FnMut(&IterationReport)) -> Result<()> {
        while let Some(report) = self.step()? {
            on_report(&report);
        }
        Ok(())
    }
}

/// Runs a whole curriculum with the configured number of worker threads.
pub fn run_curriculum(config: RunConfig, on_report: impl FnMut(&IterationReport) + Send) -> Result<Runner> {
    with_jobs(config.jobs, move || {
        let mut r = Runner::new(config)?;
        r.run(on_report)?;
        Ok(r)
    })
}

/// Runs `f` on a dedicated pool of `jobs` threads, or the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?
            .install(f),
        None => f(),
    }
}

pub fn load_run(dir: &Path) -> Result<RunRecord> {
    let rec: RunRecord = serde_json::from_str(&fs::read_to_string(dir.join("run.json"))?)?;
    check_version(&rec.version, RUN_VERSION)?;
    Ok(rec)
}

/// Number of iteration directories in a run.
pub fn iteration_count(dir: &Path) -> usize {
    (0..).take_while(|k| iteration_dir(dir, *k).join("report.json").exists()).count()
}

pub fn load_report(dir: &Path, k: usize) -> Result<IterationReport> {
    let r: IterationReport = serde_json::from_str(&fs::read_to_string(iteration_dir(dir, k).join("report.json"))?)?;
    check_version(&r.version, REPORT_VERSION)?;
    Ok(r)
}

/// Library of the last completed iteration.
pub fn load_library(dir: &Path, env: crate::envs::EnvTag) -> Result<Vec<Abstraction>> {
    let n = iteration_count(dir);
    if n == 0 {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(iteration_dir(dir, n - 1).join("library.json"))?;
    library::library_from_json(&text, &PrimTable::base(env))
}

pub fn load_grammar(dir: &Path) -> Result<Grammar> {
    Grammar::from_json(&fs::read_to_string(dir.join("grammar.json"))?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSeeds {
    /// Oracle episodes the run never saw.
    Fresh,
    /// The run's own oracle episodes.
    Train,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub length: usize,
    pub accuracy: f64,
    pub n_tasks: usize,
}

/// Accuracy per sequence length with the run's final grammar and search budget.
pub fn evaluate(dir: &Path, seeds: EvalSeeds, lengths: Option<Vec<usize>>) -> Result<Vec<EvalRow>> {
    let rec = load_run(dir)?;
    let c = &rec.config;
    let g = load_grammar(dir)?;
    let seed = match seeds {
        EvalSeeds::Fresh => fresh_seed(c.seed),
        EvalSeeds::Train => c.seed,
    };
    let lengths = lengths.unwrap_or_else(|| {
        let mut ls: Vec<usize> = rec.state.history.iter().map(|h| h.length).collect();
        ls.dedup();
        ls
    });
    let oracle = collect_oracle_rollouts(c.env, c.oracle_episodes, seed, None);
    let budget = search_budget(c);
    let mut rows = Vec::new();
    for l in lengths {
        let tasks = capped(slice(&oracle, l), c.max_tasks);
        if tasks.is_empty() {
            rows.push(EvalRow { length: l, accuracy: 0.0, n_tasks: 0 });
            continue;
        }
        let solutions: BTreeMap<String, Vec<Term>> =
            solve_tasks(&g, &tasks, &budget).into_iter().map(|r| (r.task_id, r.programs)).collect();
        rows.push(EvalRow { length: l, accuracy: accuracy(&solutions, &tasks)?, n_tasks: tasks.len() });
    }
    Ok(rows)
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("L,accuracy,n_tasks\n");
    for r in rows {
        s.push_str(&format!("{},{:.6},{}\n", r.length, r.accuracy, r.n_tasks));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(rate: f64) -> IterationReport {
        IterationReport {
            version: REPORT_VERSION.into(),
            iteration: 0,
            length: 0,
            n_tasks: 100,
            solved_tasks: 0,
            solve_rate: rate,
            candidates_tried: 0,
            corpus_programs: 0,
            new_abstractions: Vec::new(),
            library_size: 0,
            programs_using_library: 0,
            dl_before: 0.0,
            dl_after: 0.0,
            grammar_snapshot: String::new(),
        }
    }

    #[test]
    fn threshold_is_inclusive() {
        let Advance::Continue(s) = advance(&CurriculumState::default(), &report(0.10)) else { panic!() };
        assert_eq!(s.length, 4);
    }

    #[test]
    fn two_misses_stop() {
        let s = CurriculumState { length: 4, ..CurriculumState::default() };
        let Advance::Continue(s) = advance(&s, &report(0.05)) else { panic!() };
        assert_eq!((s.length, s.consecutive_fails), (4, 1));
        let Advance::Stop(s) = advance(&s, &report(0.07)) else { panic!() };
        assert_eq!(s.history.len(), 2);
    }

    #[test]
    fn csv_has_header() {
        let rows = [EvalRow { length: 3, accuracy: 0.5, n_tasks: 4 }];
        assert_eq!(eval_csv(&rows), "L,accuracy,n_tasks\n3,0.500000,4\n");
    }
}
