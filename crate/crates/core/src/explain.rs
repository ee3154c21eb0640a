//! Step-by-step explanations: an instrumented run of the program logs every call with its
//! arguments and result, and the grid cells read along the way are highlighted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Step;
use crate::dsl::{exec_traced, print_program, Action, Builtin, Prim, PrimKind, Term, Tracer, Value};
use crate::envs::{EnvTag, GridState};
use crate::error::Result;
use crate::library::{expand, Abstraction};

pub const TRACE_VERSION: &str = "gridsynth-trace-v1";
pub const BUNDLE_VERSION: &str = "gridsynth-explain-v1";

pub const AGENT_COLOR: &str = "#1f4e9c";
pub const WALL_COLOR: &str = "#808080";
pub const EMPTY_COLOR: &str = "#000000";
pub const HIGHLIGHT_COLOR: &str = "#ffd400";
const CELL: usize = 40;
const LABEL_HEIGHT: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub condition: bool,
    /// `then` or `else`.
    pub taken: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceEvent {
    /// Position of the call in the order calls were entered; nested calls have larger
    /// numbers than their caller.
    pub call: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub callee: String,
    pub args: Vec<String>,
    pub result: String,
    pub accessed_cell: Option<(i64, i64)>,
    pub branch: Option<Branch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepExplanation {
    pub state: GridState,
    /// `None` when evaluation failed; `error` then says why.
    pub action: Option<Action>,
    /// In the order the calls returned.
    pub events: Vec<TraceEvent>,
    pub highlighted: BTreeSet<(i64, i64)>,
    pub access_counts: BTreeMap<(i64, i64), usize>,
    pub error: Option<String>,
}

struct Recorder {
    env: EnvTag,
    entered: usize,
    stack: Vec<usize>,
    events: Vec<TraceEvent>,
}

impl Tracer for Recorder {
    fn enter(&mut self) {
        self.stack.push(self.entered);
        self.entered += 1;
    }

    fn exit(&mut self, callee: &Prim, args: &[Value], result: &Value, branch: Option<bool>) {
        let call = self.stack.pop().expect("exit matches an enter");
        let accessed_cell = match (callee.kind(), result) {
            (PrimKind::Builtin(Builtin::Get), Value::MapObj { x, y, .. }) => Some((*x, *y)),
            _ => None,
        };
        self.events.push(TraceEvent {
            call,
            parent: self.stack.last().copied(),
            depth: self.stack.len(),
            callee: callee.name().to_string(),
            args: args.iter().map(|a| a.render(self.env)).collect(),
            result: result.render(self.env),
            accessed_cell,
            branch: branch.map(|c| Branch { condition: c, taken: if c { "then" } else { "else" }.to_string() }),
        });
    }

    fn wants_args(&self) -> bool {
        true
    }
}

/// Raw read set reported by the evaluator's `get`, independent of the event log.
#[derive(Default)]
pub struct ReadSet(pub BTreeSet<(i64, i64)>);

impl Tracer for ReadSet {
    fn cell_read(&mut self, x: i64, y: i64) {
        self.0.insert((x, y));
    }
}

/// Runs `program` on `state` and records every primitive and library call.
pub fn trace_execution(program: &Term, state: &GridState) -> StepExplanation {
    let mut rec = Recorder { env: state.env, entered: 0, stack: Vec::new(), events: Vec::new() };
    let outcome = exec_traced(program, state, &mut rec);
    let mut access_counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for c in rec.events.iter().filter_map(|e| e.accessed_cell) {
        *access_counts.entry(c).or_default() += 1;
    }
    let (action, error) = match outcome {
        Ok(a) => (Some(a), None),
        Err(e) => (None, Some(e.to_string())),
    };
    StepExplanation {
        state: state.clone(),
        action,
        events: rec.events,
        highlighted: access_counts.keys().copied().collect(),
        access_counts,
        error,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Ascii,
    Svg,
}

const HEADING_NAMES: [&str; 4] = ["east", "south", "west", "north"];

fn direction_label(state: &GridState) -> Option<String> {
    state.direction.map(|d| format!("direction-{d} ({})", HEADING_NAMES.get(d as usize).unwrap_or(&"?")))
}

/// The cell the agent occupies: the fixed view anchor in the maze, the player elsewhere.
fn agent_cell(state: &GridState) -> Option<(i64, i64)> {
    match state.env {
        EnvTag::Maze => Some((0, 2)),
        _ => {
            let g = &state.grid;
            (0..g.height() as i64)
                .flat_map(|y| (0..g.width() as i64).map(move |x| (x, y)))
                .find(|&(x, y)| g.get(x, y) == Some(1))
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Tile {
    Agent,
    Wall,
    Empty,
    Other(u8),
}

fn tile(state: &GridState, x: i64, y: i64, agent: Option<(i64, i64)>) -> Tile {
    if agent == Some((x, y)) {
        return Tile::Agent;
    }
    let code = state.grid.get(x, y).unwrap_or(0);
    match (state.env, code) {
        (EnvTag::Maze, 2) => Tile::Wall,
        (EnvTag::Maze, 1) | (EnvTag::Asterix | EnvTag::SpaceInvaders, 0) => Tile::Empty,
        _ => Tile::Other(code),
    }
}

fn other_char(env: EnvTag, code: u8) -> char {
    match (env, code) {
        (EnvTag::Maze, 3) => 'G',
        (EnvTag::Asterix, 2) => 'g',
        (EnvTag::Asterix, 3) => 'e',
        (EnvTag::Asterix, 4) => 't',
        (EnvTag::SpaceInvaders, 2) => 'a',
        (EnvTag::SpaceInvaders, 3) => '|',
        (EnvTag::SpaceInvaders, 4) => '!',
        _ => '?',
    }
}

fn other_color(env: EnvTag, code: u8) -> &'static str {
    match (env, code) {
        (EnvTag::Maze, 3) => "#2ca02c",
        (EnvTag::Asterix, 2) => "#d4a017",
        (EnvTag::Asterix, 3) | (EnvTag::SpaceInvaders, 2) => "#c0392b",
        _ => "#e0e0e0",
    }
}

pub fn render(expl: &StepExplanation, format: Format) -> String {
    match format {
        Format::Ascii => render_ascii(expl),
        Format::Svg => render_svg(expl),
    }
}

fn render_ascii(expl: &StepExplanation) -> String {
    let s = &expl.state;
    let agent = agent_cell(s);
    let mut out = String::new();
    if let Some(l) = direction_label(s) {
        out.push_str(&l);
        out.push('\n');
    }
    for y in 0..s.grid.height() as i64 {
        for x in 0..s.grid.width() as i64 {
            let c = if expl.highlighted.contains(&(x, y)) {
                '*'
            } else {
                match tile(s, x, y, agent) {
                    Tile::Agent => 'A',
                    Tile::Wall => '#',
                    Tile::Empty => '.',
                    Tile::Other(code) => other_char(s.env, code),
                }
            };
            out.push(c);
        }
        out.push('\n');
    }
    match (expl.action, &expl.error) {
        (Some(a), _) => out.push_str(&format!("action: {}\n", a.word())),
        (None, Some(e)) => out.push_str(&format!("error: {e}\n")),
        (None, None) => {}
    }
    out
}

fn render_svg(expl: &StepExplanation) -> String {
    let s = &expl.state;
    let agent = agent_cell(s);
    let (w, h) = (s.grid.width(), s.grid.height());
    let label = direction_label(s);
    let top = if label.is_some() { LABEL_HEIGHT } else { 0 };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        w * CELL,
        h * CELL + top,
        w * CELL,
        h * CELL + top
    );
    if let Some(l) = label {
        let _ = writeln!(out, r#"  <text x="4" y="17" font-family="monospace" font-size="14">{l}</text>"#);
    }
    for y in 0..h {
        for x in 0..w {
            let fill = match tile(s, x as i64, y as i64, agent) {
                Tile::Agent => AGENT_COLOR,
                Tile::Wall => WALL_COLOR,
                Tile::Empty => EMPTY_COLOR,
                Tile::Other(code) => other_color(s.env, code),
            };
            let _ = writeln!(
                out,
                r##"  <rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#404040"/>"##,
                x * CELL,
                y * CELL + top
            );
        }
    }
    for &(x, y) in &expl.highlighted {
        let _ = writeln!(
            out,
            r#"  <rect class="highlight" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{HIGHLIGHT_COLOR}" fill-opacity="0.6"/>"#,
            x as usize * CELL,
            y as usize * CELL + top
        );
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TraceStep<'a> {
    index: usize,
    action: Option<&'static str>,
    recorded_action: &'static str,
    events: &'a [TraceEvent],
    highlighted: Vec<(i64, i64)>,
    access_counts: Vec<((i64, i64), usize)>,
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct TraceFile<'a> {
    version: &'static str,
    steps: Vec<TraceStep<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub version: String,
    pub env: EnvTag,
    pub task_id: String,
    pub program: String,
    pub expanded_program: String,
    pub trace: String,
    pub panels: Vec<String>,
}

/// Writes `trace.json`, one panel per step in `format`, and `manifest.json` into `dir`.
pub fn write_bundle(
    dir: &Path,
    task_id: &str,
    env: EnvTag,
    program: &Term,
    lib: &[Abstraction],
    steps: &[Step],
    format: Format,
) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let expls: Vec<StepExplanation> = steps.iter().map(|s| trace_execution(program, &s.state(env))).collect();
    let ext = match format {
        Format::Ascii => "txt",
        Format::Svg => "svg",
    };
    let mut panels = Vec::with_capacity(expls.len());
    for (i, e) in expls.iter().enumerate() {
        let name = format!("step-{i:03}.{ext}");
        fs::write(dir.join(&name), render(e, format))?;
        panels.push(name);
    }
    let trace = TraceFile {
        version: TRACE_VERSION,
        steps: expls
            .iter()
            .zip(steps)
            .enumerate()
            .map(|(index, (e, s))| TraceStep {
                index,
                action: e.action.map(|a| a.word()),
                recorded_action: s.action.word(),
                events: &e.events,
                highlighted: e.highlighted.iter().copied().collect(),
                access_counts: e.access_counts.iter().map(|(k, v)| (*k, *v)).collect(),
                error: e.error.as_deref(),
            })
            .collect(),
    };
    fs::write(dir.join("trace.json"), serde_json::to_string_pretty(&trace)?)?;
    let manifest = Manifest {
        version: BUNDLE_VERSION.into(),
        env,
        task_id: task_id.to_string(),
        program: print_program(program),
        expanded_program: print_program(&expand(program, lib)?),
        trace: "trace.json".into(),
        panels,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_program, PrimTable};
    use crate::envs::Grid;

    const LISTING: &str = "(λ(x) (if (eq-obj? wall-obj (get x 1 0)) left-action forward-action))";

    fn state(wall: bool) -> GridState {
        let mut g = Grid::filled(5, 5, 1);
        if wall {
            g.set(1, 0, 2);
        }
        GridState::new(EnvTag::Maze, g, Some(0))
    }

    #[test]
    fn listing_trace() {
        let p = parse_program(LISTING, &PrimTable::base(EnvTag::Maze)).unwrap();
        let e = trace_execution(&p, &state(true));
        let names: Vec<&str> = e.events.iter().map(|e| e.callee.as_str()).collect();
        assert_eq!(names, ["get", "eq-obj?", "if"]);
        assert_eq!(e.events[0].accessed_cell, Some((1, 0)));
        assert_eq!(e.events[1].result, "true");
        assert_eq!(e.events[2].branch.as_ref().unwrap().taken, "then");
        assert_eq!(e.action, Some(Action::Left));
        assert_eq!(e.highlighted.iter().copied().collect::<Vec<_>>(), [(1, 0)]);
        let ascii = render(&e, Format::Ascii);
        assert_eq!(ascii.lines().nth(1), Some(".*..."));
        assert_eq!(ascii.lines().nth(3), Some("A...."));
    }

    #[test]
    fn constant_program_highlights_nothing() {
        let p = parse_program("(λ(m) forward-action)", &PrimTable::base(EnvTag::Maze)).unwrap();
        let e = trace_execution(&p, &state(false));
        assert!(e.events.is_empty() && e.highlighted.is_empty());
        assert!(!render(&e, Format::Svg).contains("highlight"));
    }

    #[test]
    fn errors_leave_a_partial_trace() {
        let p = parse_program(
            "(λ(x) (if (eq-obj? wall-obj (get x 1 0)) (if (eq-obj? wall-obj (get x 4 4)) left-action right-action) forward-action))",
            &PrimTable::base(EnvTag::Maze),
        )
        .unwrap();
        let mut g = Grid::filled(3, 3, 1);
        g.set(1, 0, 2);
        let e = trace_execution(&p, &GridState::new(EnvTag::Maze, g, Some(0)));
        assert!(e.action.is_none() && e.error.is_some());
        assert_eq!(e.events.len(), 2);
    }
}
