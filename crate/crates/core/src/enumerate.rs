//! Enumeration of programs in order of decreasing probability, and per-task search.
//!
//! The search runs depth-first over cost windows `[lo, hi)`: every derivation whose
//! description length falls in the window is produced exactly once, partial derivations
//! that cannot finish below `hi` are cut using per-type lower bounds, and successive
//! windows tile the cost axis. Sorting each window gives an exact best-first order.

use std::cell::Cell;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{imitates, TaskSet};
use crate::dsl::{print_program, BaseTy, Term, Ty};
use crate::grammar::{Choice, Grammar, HoleTable};
use crate::error::Result;

/// Slack for floating-point cost comparisons.
pub const COST_EPS: f64 = 1e-9;
const INITIAL_WIDTH: f64 = 1.0;
/// Target size range for one sorted window of the ordered stream.
const WINDOW_LOW: usize = 2_000;
const WINDOW_HIGH: usize = 40_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchBudget {
    pub timeout: Duration,
    pub top_k: usize,
    pub max_candidates: Option<usize>,
    /// AST depth limit, counting binders.
    pub max_depth: usize,
}

impl SearchBudget {
    pub fn new(timeout_sec: f64, top_k: usize, max_depth: usize) -> SearchBudget {
        SearchBudget { timeout: Duration::from_secs_f64(timeout_sec), top_k: top_k.max(1), max_candidates: None, max_depth }
    }

    pub fn with_max_candidates(mut self, n: usize) -> SearchBudget {
        self.max_candidates = Some(n);
        self
    }
}

/// Search outcome for one task; `programs` is sorted by description length.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedTask {
    pub task_id: String,
    pub programs: Vec<Term>,
    pub dl: Vec<f64>,
    pub candidates_tried: usize,
    pub wall_time: Duration,
}

impl SolvedTask {
    pub fn is_solved(&self) -> bool {
        !self.programs.is_empty()
    }

    pub fn record(&self) -> SolvedRecord {
        SolvedRecord {
            task_id: self.task_id.clone(),
            programs: self.programs.iter().map(print_program).collect(),
            dl_nats: self.dl.clone(),
            candidates_tried: self.candidates_tried,
        }
    }
}

/// Serialized form of a solved task. Wall time is kept out so that records are
/// reproducible; it is reported separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolvedRecord {
    pub task_id: String,
    pub programs: Vec<String>,
    pub dl_nats: Vec<f64>,
    pub candidates_tried: usize,
}

/// Depth-first producer of all derivations in a cost window.
struct Search<'a> {
    g: &'a Grammar,
    table: &'a HoleTable,
    /// Set when some derivation was skipped for reaching `hi`.
    pruned: Cell<bool>,
    stop: Cell<bool>,
}

impl<'a> Search<'a> {
    fn body(&self, hole: BaseTy, depth: usize, lo: f64, hi: f64, emit: &mut dyn FnMut(Term, f64)) {
        if depth == 0 {
            return;
        }
        for c in self.table.candidates(hole) {
            if self.stop.get() {
                return;
            }
            if self.table.candidate_min_depth(c) > depth {
                continue;
            }
            let floor = c.cost + c.args.iter().map(|a| self.table.min_cost(*a, depth - 1)).sum::<f64>();
            if floor >= hi + COST_EPS {
                self.pruned.set(true);
                continue;
            }
            match c.choice {
                Choice::Var(i) => {
                    if c.cost >= lo - COST_EPS {
                        emit(Term::Var(i), c.cost);
                    }
                }
                Choice::Prim(i) => {
                    let head = Term::Prim(self.g.productions()[i].prim.clone());
                    if c.args.is_empty() {
                        if c.cost >= lo - COST_EPS {
                            emit(head, c.cost);
                        }
                        continue;
                    }
                    let mut acc = Vec::with_capacity(c.args.len());
                    self.args(&c.args, depth - 1, lo - c.cost, hi - c.cost, &mut acc, &mut |args, ac| {
                        emit(Term::app(head.clone(), args.iter().cloned()), c.cost + ac)
                    });
                }
            }
        }
    }

    fn args(
        &self,
        tys: &[BaseTy],
        depth: usize,
        lo: f64,
        hi: f64,
        acc: &mut Vec<Term>,
        emit: &mut dyn FnMut(&[Term], f64),
    ) {
        let i = acc.len();
        if i == tys.len() {
            emit(acc, 0.0);
            return;
        }
        let rest: f64 = tys[i + 1..].iter().map(|t| self.table.min_cost(*t, depth)).sum();
        let (l, h) = if i + 1 == tys.len() { (lo, hi) } else { (f64::NEG_INFINITY, hi - rest) };
        self.body(tys[i], depth, l, h, &mut |t, c| {
            acc.push(t);
            self.args(tys, depth, lo - c, hi - c, acc, &mut |a, c2| emit(a, c + c2));
            acc.pop();
        });
    }
}

/// Shape of a request: binder types and the base type of the body.
fn split_request(request: &Ty) -> (usize, BaseTy) {
    let (args, ret) = request.uncurry();
    (args.len(), ret.as_base().expect("request ends in a base type"))
}

/// Runs one window, calling `visit` with every closed program whose cost lies in
/// `[lo, hi)`. Returns whether anything was left beyond `hi`.
fn run_window(
    g: &Grammar,
    table: &HoleTable,
    request: &Ty,
    body_depth: usize,
    lo: f64,
    hi: f64,
    stop: &Cell<bool>,
    visit: &mut dyn FnMut(Term, f64) -> bool,
) -> bool {
    let (binders, hole) = split_request(request);
    let search = Search { g, table, pruned: Cell::new(false), stop: Cell::new(false) };
    search.body(hole, body_depth, lo, hi, &mut |t, c| {
        if c >= hi {
            search.pruned.set(true);
        } else if c >= lo && !visit(Term::lambdas(binders, t), c) {
            search.stop.set(true);
        }
    });
    stop.set(search.stop.get());
    search.pruned.get()
}

/// Ordered stream of `(program, description length)` with non-decreasing lengths. Ties
/// within [`COST_EPS`] are ordered by printed form.
pub struct Enumerator<'g> {
    g: &'g Grammar,
    request: Ty,
    table: HoleTable,
    body_depth: usize,
    lo: f64,
    width: f64,
    exhausted: bool,
    buffer: std::vec::IntoIter<(Term, f64)>,
}

impl<'g> Enumerator<'g> {
    pub fn new(g: &'g Grammar, request: &Ty, max_depth: usize) -> Result<Enumerator<'g>> {
        let table = g.request_table(request, max_depth)?;
        let (binders, _) = split_request(request);
        Ok(Enumerator {
            g,
            request: request.clone(),
            table,
            body_depth: max_depth - binders,
            lo: 0.0,
            width: INITIAL_WIDTH,
            exhausted: false,
            buffer: Vec::new().into_iter(),
        })
    }

    fn fill(&mut self) {
        while !self.exhausted {
            let hi = self.lo + self.width;
            let mut found: Vec<(Term, f64, String)> = Vec::new();
            let stop = Cell::new(false);
            let more = run_window(self.g, &self.table, &self.request, self.body_depth, self.lo, hi, &stop, &mut |t, c| {
                let s = print_program(&t);
                found.push((t, c, s));
                true
            });
            self.exhausted = !more;
            self.lo = hi;
            if found.len() > WINDOW_HIGH {
                self.width *= 0.5;
            } else if found.len() < WINDOW_LOW {
                self.width = (self.width * 1.5).min(4.0);
            }
            if !found.is_empty() {
                found.sort_by(|a, b| tie_order(a.1, &a.2, b.1, &b.2));
                self.buffer = found.into_iter().map(|(t, c, _)| (t, c)).collect::<Vec<_>>().into_iter();
                return;
            }
        }
    }
}

fn tie_order(c1: f64, s1: &str, c2: f64, s2: &str) -> std::cmp::Ordering {
    if (c1 - c2).abs() <= COST_EPS {
        s1.cmp(s2)
    } else {
        c1.total_cmp(&c2)
    }
}

impl Iterator for Enumerator<'_> {
    type Item = (Term, f64);

    fn next(&mut self) -> Option<(Term, f64)> {
        if let Some(x) = self.buffer.next() {
            return Some(x);
        }
        self.fill();
        self.buffer.next()
    }
}

/// Searches for up to `top_k` programs that imitate the task's steps.
///
/// Candidates are checked window by window; once `top_k` solutions are known the current
/// window is finished so that the kept programs are the cheapest ones. The candidate cap
/// is deterministic; the timeout is a wall-clock safety net.
pub fn solve_task(g: &Grammar, task_id: &str, steps: &[crate::data::Step], budget: &SearchBudget) -> SolvedTask {
    let start = Instant::now();
    let env = g.env();
    let request = g.request();
    let mut found: Vec<(f64, String, Term)> = Vec::new();
    let mut tried = 0usize;
    if let Ok(table) = g.request_table(&request, budget.max_depth) {
        let (binders, _) = split_request(&request);
        let body_depth = budget.max_depth - binders;
        let mut lo = 0.0;
        loop {
            let hi = lo + INITIAL_WIDTH;
            let stop = Cell::new(false);
            let more = run_window(g, &table, &request, body_depth, lo, hi, &stop, &mut |t, c| {
                if budget.max_candidates.is_some_and(|m| tried >= m) {
                    return false;
                }
                tried += 1;
                if imitates(&t, env, steps) {
                    found.push((c, print_program(&t), t));
                }
                !(tried % 256 == 0 && start.elapsed() >= budget.timeout)
            });
            lo = hi;
            if stop.get() || !more || found.len() >= budget.top_k || start.elapsed() >= budget.timeout {
                break;
            }
        }
    }
    found.sort_by(|a, b| tie_order(a.0, &a.1, b.0, &b.1));
    found.truncate(budget.top_k);
    SolvedTask {
        task_id: task_id.to_string(),
        dl: found.iter().map(|f| f.0).collect(),
        programs: found.into_iter().map(|f| f.2).collect(),
        candidates_tried: tried,
        wall_time: start.elapsed(),
    }
}

/// Solves every task in parallel; results are in task order regardless of thread count.
pub fn solve_tasks(g: &Grammar, tasks: &TaskSet, budget: &SearchBudget) -> Vec<SolvedTask> {
    tasks.tasks.par_iter().map(|t| solve_task(g, &t.id, &t.steps, budget)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvTag;

    #[test]
    fn first_terms_are_constant_actions() {
        let g = Grammar::uniform(EnvTag::Maze);
        let first: Vec<String> = Enumerator::new(&g, &g.request(), 6)
            .unwrap()
            .take(3)
            .map(|(t, _)| print_program(&t))
            .collect();
        assert_eq!(
            first,
            ["(λ(x) (λ(y) forward-action))", "(λ(x) (λ(y) left-action))", "(λ(x) (λ(y) right-action))"]
        );
    }

    #[test]
    fn stream_is_ordered_and_costs_match() {
        let g = Grammar::uniform(EnvTag::Asterix);
        let mut prev = 0.0;
        for (t, c) in Enumerator::new(&g, &g.request(), 20).unwrap().take(3000) {
            assert!(c + COST_EPS >= prev);
            assert!((g.dl(&t).unwrap() - c).abs() < 1e-9);
            prev = c;
        }
    }

    #[test]
    fn small_depth_space_is_finite() {
        let g = Grammar::uniform(EnvTag::Maze);
        assert_eq!(Enumerator::new(&g, &g.request(), 4).unwrap().count(), 3);
    }
}
