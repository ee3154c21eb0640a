use std::collections::BTreeMap;

use gridsynth::curriculum::{memory_from_json, memory_key, memory_to_json, Memory, MemoryEntry};
use gridsynth::dsl::{exec, parse_program, print_program, PrimTable, Term};
use gridsynth::envs::{EnvTag, Grid, GridState};
use gridsynth::grammar::Grammar;
use gridsynth::library::{compress, expand, library_from_json, library_report, library_to_json};

fn corpus(srcs: &[&str]) -> BTreeMap<String, Term> {
    let prims = PrimTable::base(EnvTag::Maze);
    srcs.iter().enumerate().map(|(i, s)| (format!("t{i}"), parse_program(s, &prims).unwrap())).collect()
}

const WALL_CHECKS: [&str; 6] = [
    "(λ(x) (λ(y) (if (eq-obj? wall-obj (get x 1 0)) left-action forward-action)))",
    "(λ(x) (λ(y) (if (eq-obj? wall-obj (get x 1 1)) right-action forward-action)))",
    "(λ(x) (λ(y) (if (eq-obj? wall-obj (get x 2 0)) left-action forward-action)))",
    "(λ(x) (λ(y) (if (eq-obj? wall-obj (get x 0 3)) right-action forward-action)))",
    "(λ(x) (λ(y) (if (eq-obj? wall-obj (get x 3 2)) left-action forward-action)))",
    "(λ(x) (λ(y) (if (eq-obj? wall-obj (get x 4 4)) right-action forward-action)))",
];

#[test]
fn shared_wall_test_becomes_a_function() {
    let c = compress(&corpus(&WALL_CHECKS), &Grammar::uniform(EnvTag::Maze), 3).unwrap();
    assert!(!c.abstractions.is_empty());
    assert!(c.dl_after < c.dl_before);
    let f = &c.abstractions[0];
    assert!(f.body_text().contains("eq-obj? wall-obj"), "{}", f.body_text());
    assert!(c.rewritten.values().all(|t| t.uses_invented()));

    let text = library_to_json(&c.abstractions);
    let back = library_from_json(&text, &PrimTable::base(EnvTag::Maze)).unwrap();
    assert_eq!(back, c.abstractions);
    let report = library_report(&back);
    assert!(report.contains(&format!("Number of extracted functions: {}", back.len())));
}

#[test]
fn expansion_restores_the_original_programs() {
    let original = corpus(&WALL_CHECKS);
    let c = compress(&original, &Grammar::uniform(EnvTag::Maze), 3).unwrap();
    let mut cells = vec![1u8; 25];
    for wall in [1usize, 6, 2, 15] {
        cells[wall] = 2;
    }
    let s = GridState::new(EnvTag::Maze, Grid::new(5, 5, cells), Some(1));
    for (k, t) in &c.rewritten {
        let flat = expand(t, &c.abstractions).unwrap();
        assert_eq!(flat, original[k], "{}", print_program(&flat));
        assert_eq!(exec(t, &s).unwrap(), exec(&original[k], &s).unwrap());
    }
}

#[test]
fn unrelated_programs_are_left_alone() {
    let c = compress(
        &corpus(&["(λ(x) (λ(y) left-action))", "(λ(x) (λ(y) (if (eq-direction? y direction-2) right-action forward-action)))"]),
        &Grammar::uniform(EnvTag::Maze),
        3,
    )
    .unwrap();
    assert!(c.abstractions.is_empty());
    assert_eq!(c.dl_after, c.dl_before);
}

#[test]
fn memory_round_trips_with_library_calls() {
    let c = compress(&corpus(&WALL_CHECKS), &Grammar::uniform(EnvTag::Maze), 3).unwrap();
    let mut memory = Memory::new();
    for (i, (k, t)) in c.rewritten.iter().enumerate() {
        let length = 3 + i % 2;
        memory.insert(memory_key(length, k), MemoryEntry { task_id: k.clone(), length, programs: vec![t.clone()] });
    }
    let text = memory_to_json(&memory);
    let back = memory_from_json(&text, &c.grammar.prims()).unwrap();
    assert_eq!(back, memory);
    assert!(back.contains_key("L4/t1"));
}
