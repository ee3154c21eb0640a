use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::term::Term;
use super::types::{BaseTy, Ty};
use crate::envs::EnvTag;

/// Discrete agent actions across all environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    #[serde(rename = "left")]
    Left,
    #[serde(rename = "right")]
    Right,
    #[serde(rename = "forward")]
    Forward,
    #[serde(rename = "up")]
    Up,
    #[serde(rename = "down")]
    Down,
    #[serde(rename = "fire")]
    Fire,
    #[serde(rename = "no-op")]
    NoOp,
}

impl Action {
    pub const ALL: [Action; 7] = [
        Action::Left,
        Action::Right,
        Action::Forward,
        Action::Up,
        Action::Down,
        Action::Fire,
        Action::NoOp,
    ];

    /// The action word used in trajectories and prompts.
    pub fn word(self) -> &'static str {
        match self {
            Action::Left => "left",
            Action::Right => "right",
            Action::Forward => "forward",
            Action::Up => "up",
            Action::Down => "down",
            Action::Fire => "fire",
            Action::NoOp => "no-op",
        }
    }

    /// The DSL constant naming this action.
    pub fn primitive_name(self) -> &'static str {
        match self {
            Action::Left => "left-action",
            Action::Right => "right-action",
            Action::Forward => "forward-action",
            Action::Up => "up-action",
            Action::Down => "down-action",
            Action::Fire => "fire-action",
            Action::NoOp => "no-op",
        }
    }

    pub fn from_word(s: &str) -> Option<Action> {
        Action::ALL.iter().copied().find(|a| a.word() == s)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// Built-in semantics of base primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Action(Action),
    Int(i64),
    Direction(u8),
    Object(u8),
    If,
    EqDirection,
    EqObj,
    Get,
    GetGameObj,
    Not,
    And,
    Or,
    GetX,
    GetY,
    EqX,
    EqY,
    GtX,
    GtY,
}

impl Builtin {
    pub fn arity(self) -> usize {
        match self {
            Builtin::Action(_) | Builtin::Int(_) | Builtin::Direction(_) | Builtin::Object(_) => 0,
            Builtin::GetGameObj | Builtin::Not | Builtin::GetX | Builtin::GetY => 1,
            Builtin::EqDirection
            | Builtin::EqObj
            | Builtin::And
            | Builtin::Or
            | Builtin::EqX
            | Builtin::EqY
            | Builtin::GtX
            | Builtin::GtY => 2,
            Builtin::If | Builtin::Get => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub enum PrimKind {
    Builtin(Builtin),
    /// A learned library function: a closed term `λ…λ. body`.
    Invented(Term),
}

#[derive(Debug)]
pub struct PrimDef {
    pub name: String,
    pub ty: Ty,
    pub kind: PrimKind,
}

/// Shared handle to a primitive or library function. Identity is the name.
#[derive(Clone)]
pub struct Prim(Arc<PrimDef>);

impl Prim {
    pub fn builtin(name: impl Into<String>, ty: Ty, b: Builtin) -> Prim {
        Prim(Arc::new(PrimDef { name: name.into(), ty, kind: PrimKind::Builtin(b) }))
    }

    pub fn invented(name: impl Into<String>, ty: Ty, body: Term) -> Prim {
        Prim(Arc::new(PrimDef { name: name.into(), ty, kind: PrimKind::Invented(body) }))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn ty(&self) -> &Ty {
        &self.0.ty
    }

    pub fn kind(&self) -> &PrimKind {
        &self.0.kind
    }

    pub fn arity(&self) -> usize {
        match &self.0.kind {
            PrimKind::Builtin(b) => b.arity(),
            PrimKind::Invented(_) => self.0.ty.arity(),
        }
    }

    pub fn is_invented(&self) -> bool {
        matches!(self.0.kind, PrimKind::Invented(_))
    }

    pub fn body(&self) -> Option<&Term> {
        match &self.0.kind {
            PrimKind::Invented(t) => Some(t),
            PrimKind::Builtin(_) => None,
        }
    }
}

impl fmt::Debug for Prim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.name)
    }
}

impl PartialEq for Prim {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.name == other.0.name
    }
}

impl Eq for Prim {}

impl Hash for Prim {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.name.hash(state)
    }
}

impl PartialOrd for Prim {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Prim {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.name.cmp(&other.0.name)
    }
}

/// The primitive set for one environment, plus any learned library functions.
#[derive(Debug, Clone)]
pub struct PrimTable {
    env: EnvTag,
    entries: Vec<Prim>,
    index: HashMap<String, usize>,
}

impl PrimTable {
    /// The initial DSL for an environment.
    pub fn base(env: EnvTag) -> PrimTable {
        use BaseTy::*;
        let b = |t: BaseTy| super::types::Ty::Base(t);
        let f = |args: &[BaseTy], ret: BaseTy| {
            super::types::Ty::function(&args.iter().map(|a| b(*a)).collect::<Vec<_>>(), b(ret))
        };
        let tv = super::types::Ty::Var(0);
        let mut entries = Vec::new();
        for a in env.actions() {
            entries.push(Prim::builtin(a.primitive_name(), b(Action), Builtin::Action(*a)));
        }
        for i in 0..=env.max_int() {
            entries.push(Prim::builtin(i.to_string(), b(Int), Builtin::Int(i)));
        }
        if env == EnvTag::Maze {
            for d in 0..4u8 {
                entries.push(Prim::builtin(format!("direction-{d}"), b(Direction), Builtin::Direction(d)));
            }
        }
        for (code, name) in env.objects() {
            entries.push(Prim::builtin(format!("{name}-obj"), b(Object), Builtin::Object(*code)));
        }
        let if_ty = super::types::Ty::function(&[b(Bool), tv.clone(), tv.clone()], tv);
        entries.push(Prim::builtin("if", if_ty, Builtin::If));
        if env == EnvTag::Maze {
            entries.push(Prim::builtin("eq-direction?", f(&[Direction, Direction], Bool), Builtin::EqDirection));
        }
        entries.push(Prim::builtin("eq-obj?", f(&[Object, MapObject], Bool), Builtin::EqObj));
        entries.push(Prim::builtin("get", f(&[Map, Int, Int], MapObject), Builtin::Get));
        entries.push(Prim::builtin("get-game-obj", f(&[MapObject], Object), Builtin::GetGameObj));
        entries.push(Prim::builtin("not", f(&[Bool], Bool), Builtin::Not));
        entries.push(Prim::builtin("and", f(&[Bool, Bool], Bool), Builtin::And));
        entries.push(Prim::builtin("or", f(&[Bool, Bool], Bool), Builtin::Or));
        entries.push(Prim::builtin("get-x", f(&[MapObject], Tx), Builtin::GetX));
        entries.push(Prim::builtin("get-y", f(&[MapObject], Ty), Builtin::GetY));
        entries.push(Prim::builtin("eq-x?", f(&[Tx, Tx], Bool), Builtin::EqX));
        entries.push(Prim::builtin("eq-y?", f(&[Ty, Ty], Bool), Builtin::EqY));
        entries.push(Prim::builtin("gt-x?", f(&[Tx, Tx], Bool), Builtin::GtX));
        entries.push(Prim::builtin("gt-y?", f(&[Ty, Ty], Bool), Builtin::GtY));
        PrimTable::from_entries(env, entries)
    }

    pub fn from_entries(env: EnvTag, entries: Vec<Prim>) -> PrimTable {
        let index = entries.iter().enumerate().map(|(i, p)| (p.name().to_string(), i)).collect();
        PrimTable { env, entries, index }
    }

    pub fn env(&self) -> EnvTag {
        self.env
    }

    pub fn entries(&self) -> &[Prim] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Prim> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// Returns a copy extended with a library function.
    pub fn with(&self, prim: Prim) -> PrimTable {
        let mut entries = self.entries.clone();
        entries.push(prim);
        PrimTable::from_entries(self.env, entries)
    }

    pub fn invented(&self) -> impl Iterator<Item = &Prim> {
        self.entries.iter().filter(|p| p.is_invented())
    }

    /// Looks up an object constant by map code.
    pub fn object_name(&self, code: u8) -> Option<&str> {
        self.env.objects().iter().find(|(c, _)| *c == code).map(|(_, n)| *n)
    }
}
