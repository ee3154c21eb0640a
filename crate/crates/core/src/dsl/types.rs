use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Ground types of the grid DSL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseTy {
    Action,
    Int,
    Map,
    Direction,
    Object,
    MapObject,
    Bool,
    Tx,
    Ty,
}

impl BaseTy {
    pub const ALL: [BaseTy; 9] = [
        BaseTy::Action,
        BaseTy::Int,
        BaseTy::Map,
        BaseTy::Direction,
        BaseTy::Object,
        BaseTy::MapObject,
        BaseTy::Bool,
        BaseTy::Tx,
        BaseTy::Ty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseTy::Action => "action",
            BaseTy::Int => "int",
            BaseTy::Map => "map",
            BaseTy::Direction => "direction",
            BaseTy::Object => "object",
            BaseTy::MapObject => "mapObject",
            BaseTy::Bool => "bool",
            BaseTy::Tx => "tx",
            BaseTy::Ty => "ty",
        }
    }

    pub fn from_name(s: &str) -> Option<BaseTy> {
        BaseTy::ALL.iter().copied().find(|b| b.name() == s)
    }
}

/// A DSL type. Arrows associate to the right.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ty {
    Base(BaseTy),
    Arrow(Box<Ty>, Box<Ty>),
    Var(u32),
}

impl Ty {
    pub fn arrow(from: Ty, to: Ty) -> Ty {
        Ty::Arrow(Box::new(from), Box::new(to))
    }

    /// Builds `a1 -> a2 -> ... -> ret`.
    pub fn function(args: &[Ty], ret: Ty) -> Ty {
        args.iter().rev().fold(ret, |acc, a| Ty::arrow(a.clone(), acc))
    }

    /// Splits an arrow chain into argument types and the final return type.
    pub fn uncurry(&self) -> (Vec<&Ty>, &Ty) {
        let mut args = Vec::new();
        let mut t = self;
        while let Ty::Arrow(a, b) = t {
            args.push(a.as_ref());
            t = b;
        }
        (args, t)
    }

    pub fn arity(&self) -> usize {
        self.uncurry().0.len()
    }

    pub fn as_base(&self) -> Option<BaseTy> {
        match self {
            Ty::Base(b) => Some(*b),
            _ => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Ty::Base(_) => true,
            Ty::Var(_) => false,
            Ty::Arrow(a, b) => a.is_ground() && b.is_ground(),
        }
    }

    fn occurs(&self, v: u32) -> bool {
        match self {
            Ty::Var(w) => *w == v,
            Ty::Base(_) => false,
            Ty::Arrow(a, b) => a.occurs(v) || b.occurs(v),
        }
    }

    /// Parses `map -> direction -> action`, with optional parentheses and `t0`-style variables.
    pub fn parse(text: &str) -> Result<Ty> {
        let tokens: Vec<String> = text
            .replace("->", " -> ")
            .replace('→', " -> ")
            .replace('(', " ( ")
            .replace(')', " ) ")
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let mut pos = 0;
        let ty = parse_arrow(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(Error::Syntax(format!("trailing tokens in type `{text}`")));
        }
        Ok(ty)
    }
}

fn parse_arrow(tokens: &[String], pos: &mut usize) -> Result<Ty> {
    let lhs = parse_atom(tokens, pos)?;
    if tokens.get(*pos).map(String::as_str) == Some("->") {
        *pos += 1;
        let rhs = parse_arrow(tokens, pos)?;
        Ok(Ty::arrow(lhs, rhs))
    } else {
        Ok(lhs)
    }
}

fn parse_atom(tokens: &[String], pos: &mut usize) -> Result<Ty> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Syntax("unexpected end of type".into()))?;
    *pos += 1;
    if tok == "(" {
        let t = parse_arrow(tokens, pos)?;
        if tokens.get(*pos).map(String::as_str) != Some(")") {
            return Err(Error::Syntax("unbalanced parenthesis in type".into()));
        }
        *pos += 1;
        return Ok(t);
    }
    if let Some(b) = BaseTy::from_name(tok) {
        return Ok(Ty::Base(b));
    }
    if let Some(n) = tok.strip_prefix('t').and_then(|n| n.parse().ok()) {
        return Ok(Ty::Var(n));
    }
    Err(Error::Syntax(format!("unknown type `{tok}`")))
}

impl fmt::Display for Ty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ty::Base(b) => f.write_str(b.name()),
            Ty::Var(v) => write!(f, "t{v}"),
            Ty::Arrow(a, b) => {
                if matches!(a.as_ref(), Ty::Arrow(..)) {
                    write!(f, "({a}) -> {b}")
                } else {
                    write!(f, "{a} -> {b}")
                }
            }
        }
    }
}

impl From<BaseTy> for Ty {
    fn from(b: BaseTy) -> Ty {
        Ty::Base(b)
    }
}

/// Unification state: fresh variable supply plus a triangular substitution.
#[derive(Debug, Default, Clone)]
pub struct TypeContext {
    next: u32,
    subst: HashMap<u32, Ty>,
}

impl TypeContext {
    pub fn fresh(&mut self) -> Ty {
        let v = self.next;
        self.next += 1;
        Ty::Var(v)
    }

    /// Renames the variables of a type scheme apart from everything allocated so far.
    pub fn instantiate(&mut self, t: &Ty) -> Ty {
        let mut map = HashMap::new();
        self.instantiate_with(t, &mut map)
    }

    fn instantiate_with(&mut self, t: &Ty, map: &mut HashMap<u32, Ty>) -> Ty {
        match t {
            Ty::Base(_) => t.clone(),
            Ty::Var(v) => map.entry(*v).or_insert_with(|| self.fresh()).clone(),
            Ty::Arrow(a, b) => Ty::arrow(self.instantiate_with(a, map), self.instantiate_with(b, map)),
        }
    }

    pub fn apply(&self, t: &Ty) -> Ty {
        match t {
            Ty::Base(_) => t.clone(),
            Ty::Var(v) => match self.subst.get(v) {
                Some(bound) => self.apply(bound),
                None => t.clone(),
            },
            Ty::Arrow(a, b) => Ty::arrow(self.apply(a), self.apply(b)),
        }
    }

    /// Unifies two types; on failure returns the pair that could not be reconciled.
    pub fn unify(&mut self, a: &Ty, b: &Ty) -> std::result::Result<(), (Ty, Ty)> {
        let a = self.apply(a);
        let b = self.apply(b);
        match (&a, &b) {
            (Ty::Base(x), Ty::Base(y)) if x == y => Ok(()),
            (Ty::Var(x), Ty::Var(y)) if x == y => Ok(()),
            (Ty::Var(v), other) | (other, Ty::Var(v)) => {
                if other.occurs(*v) {
                    return Err((a.clone(), b.clone()));
                }
                self.subst.insert(*v, other.clone());
                Ok(())
            }
            (Ty::Arrow(a1, b1), Ty::Arrow(a2, b2)) => {
                self.unify(a1, a2)?;
                self.unify(b1, b2)
            }
            _ => Err((a.clone(), b.clone())),
        }
    }
}

/// One-way matching of a (possibly polymorphic) return type against a ground hole type.
/// On success returns the instantiated argument types.
pub fn match_return(signature: &Ty, hole: &Ty) -> Option<Vec<Ty>> {
    let (args, ret) = signature.uncurry();
    let mut binding: HashMap<u32, Ty> = HashMap::new();
    if !bind(ret, hole, &mut binding) {
        return None;
    }
    let mut out = Vec::with_capacity(args.len());
    for a in args {
        let t = substitute(a, &binding);
        if !t.is_ground() {
            return None;
        }
        out.push(t);
    }
    Some(out)
}

fn bind(pattern: &Ty, ground: &Ty, binding: &mut HashMap<u32, Ty>) -> bool {
    match (pattern, ground) {
        (Ty::Var(v), g) => match binding.get(v) {
            Some(prev) => prev == g,
            None => {
                binding.insert(*v, g.clone());
                true
            }
        },
        (Ty::Base(a), Ty::Base(b)) => a == b,
        (Ty::Arrow(a1, b1), Ty::Arrow(a2, b2)) => bind(a1, a2, binding) && bind(b1, b2, binding),
        _ => false,
    }
}

fn substitute(t: &Ty, binding: &HashMap<u32, Ty>) -> Ty {
    match t {
        Ty::Var(v) => binding.get(v).cloned().unwrap_or_else(|| t.clone()),
        Ty::Base(_) => t.clone(),
        Ty::Arrow(a, b) => Ty::arrow(substitute(a, binding), substitute(b, binding)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_and_parse_agree() {
        let t = Ty::function(&[BaseTy::Map.into(), BaseTy::Direction.into()], BaseTy::Action.into());
        assert_eq!(t.to_string(), "map -> direction -> action");
        assert_eq!(Ty::parse("map -> direction -> action").unwrap(), t);
        assert_eq!(Ty::parse("map → action").unwrap().arity(), 1);
        let ho = Ty::arrow(Ty::arrow(Ty::Var(0), Ty::Var(0)), BaseTy::Int.into());
        assert_eq!(Ty::parse(&ho.to_string()).unwrap(), ho);
    }

    #[test]
    fn polymorphic_if_matches_any_hole() {
        let if_ty = Ty::function(&[BaseTy::Bool.into(), Ty::Var(0), Ty::Var(0)], Ty::Var(0));
        let args = match_return(&if_ty, &BaseTy::Object.into()).unwrap();
        assert_eq!(args, vec![BaseTy::Bool.into(), BaseTy::Object.into(), BaseTy::Object.into()]);
        let get_ty = Ty::function(
            &[BaseTy::Map.into(), BaseTy::Int.into(), BaseTy::Int.into()],
            BaseTy::MapObject.into(),
        );
        assert!(match_return(&get_ty, &BaseTy::Object.into()).is_none());
    }

    #[test]
    fn unify_detects_occurs_and_mismatch() {
        let mut cx = TypeContext::default();
        let a = cx.fresh();
        assert!(cx.unify(&a, &Ty::arrow(a.clone(), BaseTy::Int.into())).is_err());
        assert!(cx.unify(&BaseTy::Int.into(), &BaseTy::Bool.into()).is_err());
        let b = cx.fresh();
        cx.unify(&b, &BaseTy::Map.into()).unwrap();
        assert_eq!(cx.apply(&b), Ty::Base(BaseTy::Map));
    }
}
