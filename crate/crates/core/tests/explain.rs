use gridsynth::data::collect_oracle_rollouts;
use gridsynth::dsl::{parse_program, Action, PrimTable};
use gridsynth::envs::{EnvTag, Grid, GridState};
use gridsynth::explain::{render, trace_execution, write_bundle, Format};

fn open_maze(wall: Option<usize>) -> GridState {
    let mut cells = vec![1u8; 25];
    if let Some(i) = wall {
        cells[i] = 2;
    }
    GridState::new(EnvTag::Maze, Grid::new(5, 5, cells), Some(0))
}

#[test]
fn repeated_reads_are_counted() {
    let prims = PrimTable::base(EnvTag::Maze);
    let src = "(λ(x) (λ(y) (if (or (eq-obj? wall-obj (get x 1 0)) (eq-obj? goal-obj (get x 1 0))) \
               left-action (if (eq-obj? wall-obj (get x 2 2)) right-action forward-action))))";
    let p = parse_program(src, &prims).unwrap();
    let e = trace_execution(&p, &open_maze(None));
    assert_eq!(e.action, Some(Action::Forward));
    assert_eq!(e.access_counts.get(&(1, 0)), Some(&2));
    assert_eq!(e.access_counts.get(&(2, 2)), Some(&1));
    assert_eq!(e.highlighted.len(), 2);
    assert!(e.error.is_none());

    // the first condition holds, so the else branch and its read never run
    let e = trace_execution(&p, &open_maze(Some(1)));
    assert_eq!(e.action, Some(Action::Left));
    assert!(!e.highlighted.contains(&(2, 2)));
    let branches: Vec<&str> = e.events.iter().filter_map(|ev| ev.branch.as_ref()).map(|b| b.taken.as_str()).collect();
    assert_eq!(branches, ["then"]);
}

#[test]
fn ascii_panel_marks_the_read_cell() {
    let prims = PrimTable::base(EnvTag::Maze);
    let p = parse_program("(λ(x) (λ(y) (if (eq-obj? wall-obj (get x 3 4)) left-action forward-action)))", &prims).unwrap();
    let text = render(&trace_execution(&p, &open_maze(None)), Format::Ascii);
    let rows: Vec<&str> = text.lines().collect();
    assert!(rows[0].contains("direction-0"));
    assert_eq!(rows[5].chars().nth(3), Some('*'), "{text}");
    assert_eq!(text.matches('*').count(), 1);
    assert!(rows.last().unwrap().contains("forward"));
}

#[test]
fn minatar_bundle_has_one_panel_per_step() {
    let env = EnvTag::SpaceInvaders;
    let prims = PrimTable::base(env);
    let p = parse_program("(λ(x) (if (eq-obj? alien-obj (get x 4 1)) fire-action left-action))", &prims).unwrap();
    let steps = collect_oracle_rollouts(env, 1, 2, Some(4)).remove(0).steps;
    let dir = tempfile::tempdir().unwrap();
    let m = write_bundle(dir.path(), "t0", env, &p, &[], &steps, Format::Svg).unwrap();
    assert_eq!(m.panels.len(), 4);
    for name in &m.panels {
        let svg = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(svg.matches("class=\"highlight\"").count(), 1);
    }
    assert!(dir.path().join("trace.json").exists());
}
