use std::fmt;
use std::sync::Arc;

use super::prims::{Action, Builtin, Prim, PrimKind};
use super::term::Term;
use crate::envs::{EnvTag, Grid, GridState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Action(Action),
    Int(i64),
    Map(Arc<Grid>),
    Direction(u8),
    Obj(u8),
    MapObj { code: u8, x: i64, y: i64 },
    Bool(bool),
    Tx(i64),
    Ty(i64),
    Closure(Arc<Closure>),
}

#[derive(Debug, PartialEq)]
pub enum Closure {
    Lambda { body: Term, env: Vec<Value> },
    Partial { prim: Prim, args: Vec<Value> },
}

impl Value {
    /// Human-readable form; object codes are named after the environment's objects.
    pub fn render(&self, env: EnvTag) -> String {
        match self {
            Value::Action(a) => a.word().to_string(),
            Value::Int(i) => i.to_string(),
            Value::Map(g) => format!("<map {}x{}>", g.width(), g.height()),
            Value::Direction(d) => format!("direction-{d}"),
            Value::Obj(c) => object_label(env, *c),
            Value::MapObj { code, x, y } => format!("{}@({x},{y})", object_label(env, *code)),
            Value::Bool(b) => b.to_string(),
            Value::Tx(x) => format!("x={x}"),
            Value::Ty(y) => format!("y={y}"),
            Value::Closure(_) => "<closure>".to_string(),
        }
    }
}

fn object_label(env: EnvTag, code: u8) -> String {
    env.objects()
        .iter()
        .find(|(c, _)| *c == code)
        .map(|(_, n)| format!("{n}-obj"))
        .unwrap_or_else(|| format!("obj-{code}"))
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Obj(c) => write!(f, "obj-{c}"),
            Value::MapObj { code, x, y } => write!(f, "obj-{code}@({x},{y})"),
            other => f.write_str(&other.render(EnvTag::Maze)),
        }
    }
}

/// Observer hooks for instrumented evaluation. All methods default to no-ops so the
/// plain evaluator compiles down to the uninstrumented path.
pub trait Tracer {
    /// A primitive or library call is about to evaluate its arguments.
    fn enter(&mut self) {}
    /// The matching call finished. `branch` is the condition value for `if`.
    fn exit(&mut self, _callee: &Prim, _args: &[Value], _result: &Value, _branch: Option<bool>) {}
    /// Raw grid read, reported by `get` itself.
    fn cell_read(&mut self, _x: i64, _y: i64) {}
    /// Whether library calls should report their argument values. Arguments are passed
    /// by name, so reporting them costs a separate silent evaluation.
    fn wants_args(&self) -> bool {
        false
    }
}

impl Tracer for () {}

fn mismatch(msg: impl Into<String>) -> Error {
    Error::Runtime(msg.into())
}

fn lookup(env: &[Value], i: usize) -> Result<Value> {
    env.len()
        .checked_sub(1 + i)
        .map(|p| env[p].clone())
        .ok_or_else(|| mismatch(format!("unbound variable #{i}")))
}

/// Evaluates `t` in a de Bruijn environment (innermost binding last).
pub fn eval<T: Tracer>(t: &Term, env: &mut Vec<Value>, tr: &mut T) -> Result<Value> {
    match t {
        Term::Var(i) => lookup(env, *i),
        Term::Lambda(b) => Ok(Value::Closure(Arc::new(Closure::Lambda { body: (**b).clone(), env: env.clone() }))),
        Term::Prim(p) => {
            if p.arity() == 0 {
                call_prim(p, &[], env, tr)
            } else {
                Ok(Value::Closure(Arc::new(Closure::Partial { prim: p.clone(), args: Vec::new() })))
            }
        }
        Term::Apply(..) => {
            let (head, args) = t.spine();
            if let Term::Prim(p) = head {
                let n = p.arity();
                if n > 0 && args.len() >= n {
                    let mut v = call_prim(p, &args[..n], env, tr)?;
                    for a in &args[n..] {
                        let x = eval(a, env, tr)?;
                        v = apply(v, x, tr)?;
                    }
                    return Ok(v);
                }
            }
            let mut f = eval(head, env, tr)?;
            for a in args {
                let x = eval(a, env, tr)?;
                f = apply(f, x, tr)?;
            }
            Ok(f)
        }
    }
}

/// Saturated call with unevaluated arguments; `if`, `and`, `or` evaluate lazily.
fn call_prim<T: Tracer>(p: &Prim, args: &[&Term], env: &mut Vec<Value>, tr: &mut T) -> Result<Value> {
    match p.kind() {
        PrimKind::Builtin(Builtin::If) => {
            tr.enter();
            let c = as_bool(&eval(args[0], env, tr)?)?;
            let v = eval(if c { args[1] } else { args[2] }, env, tr)?;
            tr.exit(p, &[Value::Bool(c)], &v, Some(c));
            Ok(v)
        }
        PrimKind::Builtin(b @ (Builtin::And | Builtin::Or)) => {
            tr.enter();
            let a = as_bool(&eval(args[0], env, tr)?)?;
            let short = if *b == Builtin::And { !a } else { a };
            let (vals, r) = if short {
                (vec![Value::Bool(a)], a)
            } else {
                let c = as_bool(&eval(args[1], env, tr)?)?;
                (vec![Value::Bool(a), Value::Bool(c)], c)
            };
            let v = Value::Bool(r);
            tr.exit(p, &vals, &v, None);
            Ok(v)
        }
        PrimKind::Invented(body) => {
            // Call by name, so the laziness of `if`, `and` and `or` inside the body is kept.
            tr.enter();
            let inst = Term::app(body.clone(), args.iter().map(|a| (*a).clone())).beta_normal();
            let v = eval(&inst, env, tr)?;
            let shown: Vec<Value> = if tr.wants_args() {
                args.iter().filter_map(|a| eval(a, &mut env.clone(), &mut ()).ok()).collect()
            } else {
                Vec::new()
            };
            tr.exit(p, &shown, &v, None);
            Ok(v)
        }
        _ => {
            if args.is_empty() {
                if let PrimKind::Builtin(b) = p.kind() {
                    return constant(*b);
                }
            }
            tr.enter();
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                vals.push(eval(a, env, tr)?);
            }
            let v = call_values(p, &vals, tr)?;
            tr.exit(p, &vals, &v, None);
            Ok(v)
        }
    }
}

fn constant(b: Builtin) -> Result<Value> {
    Ok(match b {
        Builtin::Action(a) => Value::Action(a),
        Builtin::Int(i) => Value::Int(i),
        Builtin::Direction(d) => Value::Direction(d),
        Builtin::Object(c) => Value::Obj(c),
        other => return Err(mismatch(format!("{other:?} is not a constant"))),
    })
}

/// Saturated call with evaluated arguments (no enter/exit bookkeeping).
fn call_values<T: Tracer>(p: &Prim, vals: &[Value], tr: &mut T) -> Result<Value> {
    let b = match p.kind() {
        PrimKind::Invented(body) => {
            let mut inner = body;
            for _ in 0..vals.len() {
                match inner {
                    Term::Lambda(b) => inner = b,
                    _ => return Err(mismatch(format!("library function {} has too few binders", p.name()))),
                }
            }
            let mut env = vals.to_vec();
            return eval(inner, &mut env, tr);
        }
        PrimKind::Builtin(b) => *b,
    };
    let v = match b {
        Builtin::Action(_) | Builtin::Int(_) | Builtin::Direction(_) | Builtin::Object(_) => constant(b)?,
        Builtin::If => {
            if as_bool(&vals[0])? {
                vals[1].clone()
            } else {
                vals[2].clone()
            }
        }
        Builtin::And => Value::Bool(as_bool(&vals[0])? && as_bool(&vals[1])?),
        Builtin::Or => Value::Bool(as_bool(&vals[0])? || as_bool(&vals[1])?),
        Builtin::Not => Value::Bool(!as_bool(&vals[0])?),
        Builtin::EqDirection => match (&vals[0], &vals[1]) {
            (Value::Direction(a), Value::Direction(b)) => Value::Bool(a == b),
            _ => return Err(mismatch("eq-direction? expects directions")),
        },
        Builtin::EqObj => match (&vals[0], &vals[1]) {
            (Value::Obj(c), Value::MapObj { code, .. }) => Value::Bool(code == c),
            _ => return Err(mismatch("eq-obj? expects an object and a mapObject")),
        },
        Builtin::Get => match (&vals[0], &vals[1], &vals[2]) {
            (Value::Map(g), Value::Int(x), Value::Int(y)) => {
                let code = g.get(*x, *y).ok_or(Error::OutOfBoundsGet {
                    x: *x,
                    y: *y,
                    width: g.width(),
                    height: g.height(),
                })?;
                tr.cell_read(*x, *y);
                Value::MapObj { code, x: *x, y: *y }
            }
            _ => return Err(mismatch("get expects map, int, int")),
        },
        Builtin::GetGameObj => match &vals[0] {
            Value::MapObj { code, .. } => Value::Obj(*code),
            _ => return Err(mismatch("get-game-obj expects a mapObject")),
        },
        Builtin::GetX => match &vals[0] {
            Value::MapObj { x, .. } => Value::Tx(*x),
            _ => return Err(mismatch("get-x expects a mapObject")),
        },
        Builtin::GetY => match &vals[0] {
            Value::MapObj { y, .. } => Value::Ty(*y),
            _ => return Err(mismatch("get-y expects a mapObject")),
        },
        Builtin::EqX | Builtin::GtX => match (&vals[0], &vals[1]) {
            (Value::Tx(a), Value::Tx(c)) => Value::Bool(if b == Builtin::EqX { a == c } else { a > c }),
            _ => return Err(mismatch("x comparison expects tx values")),
        },
        Builtin::EqY | Builtin::GtY => match (&vals[0], &vals[1]) {
            (Value::Ty(a), Value::Ty(c)) => Value::Bool(if b == Builtin::EqY { a == c } else { a > c }),
            _ => return Err(mismatch("y comparison expects ty values")),
        },
    };
    Ok(v)
}

fn as_bool(v: &Value) -> Result<bool> {
    match v {
        Value::Bool(b) => Ok(*b),
        other => Err(mismatch(format!("expected bool, found {other}"))),
    }
}

/// Applies a function value to one argument.
pub fn apply<T: Tracer>(f: Value, x: Value, tr: &mut T) -> Result<Value> {
    let Value::Closure(c) = f else {
        return Err(mismatch(format!("cannot apply non-function {f}")));
    };
    match c.as_ref() {
        Closure::Lambda { body, env } => {
            let mut env = env.clone();
            env.push(x);
            eval(body, &mut env, tr)
        }
        Closure::Partial { prim, args } => {
            let mut args = args.clone();
            args.push(x);
            if args.len() == prim.arity() {
                tr.enter();
                let v = call_values(prim, &args, tr)?;
                let branch = matches!(prim.kind(), PrimKind::Builtin(Builtin::If)).then(|| args[0] == Value::Bool(true));
                tr.exit(prim, &args, &v, branch);
                Ok(v)
            } else {
                Ok(Value::Closure(Arc::new(Closure::Partial { prim: prim.clone(), args })))
            }
        }
    }
}

/// Runs a policy program on one observation, threading an observer through evaluation.
pub fn exec_traced<T: Tracer>(program: &Term, state: &GridState, tr: &mut T) -> Result<Action> {
    let map = Value::Map(state.grid.clone());
    let (binders, body) = program.strip_lambdas();
    let result = match binders {
        1 => eval(body, &mut vec![map], tr)?,
        2 => {
            let d = state
                .direction
                .ok_or_else(|| mismatch("program expects a direction but the state has none"))?;
            eval(body, &mut vec![map, Value::Direction(d)], tr)?
        }
        _ => {
            let f = eval(program, &mut Vec::new(), tr)?;
            let mut v = apply(f, map, tr)?;
            if let (Value::Closure(_), Some(d)) = (&v, state.direction) {
                v = apply(v, Value::Direction(d), tr)?;
            }
            v
        }
    };
    match result {
        Value::Action(a) => Ok(a),
        other => Err(mismatch(format!("program returned {other} instead of an action"))),
    }
}

/// The action chosen by `program` in `state`.
pub fn exec(program: &Term, state: &GridState) -> Result<Action> {
    exec_traced(program, state, &mut ())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_program, PrimTable};

    fn maze_state(wall_at: Option<(usize, usize)>) -> GridState {
        let mut cells = vec![1u8; 25];
        if let Some((x, y)) = wall_at {
            cells[y * 5 + x] = 2;
        }
        GridState::new(EnvTag::Maze, Grid::new(5, 5, cells), Some(0))
    }

    const LISTING: &str = "(λ(x) (if (eq-obj? wall-obj (get x 1 0)) left-action forward-action))";

    #[test]
    fn listing_turns_left_at_wall() {
        let prims = PrimTable::base(EnvTag::Maze);
        let p = parse_program(LISTING, &prims).unwrap();
        assert_eq!(exec(&p, &maze_state(Some((1, 0)))).unwrap(), Action::Left);
        assert_eq!(exec(&p, &maze_state(None)).unwrap(), Action::Forward);
        assert_eq!(exec(&p, &maze_state(Some((0, 1)))).unwrap(), Action::Forward);
    }

    #[test]
    fn constant_no_op_program() {
        let prims = PrimTable::base(EnvTag::SpaceInvaders);
        let p = parse_program("(λ(m) no-op)", &prims).unwrap();
        let s = GridState::new(EnvTag::SpaceInvaders, Grid::new(10, 10, vec![0; 100]), None);
        assert_eq!(exec(&p, &s).unwrap(), Action::NoOp);
    }

    #[test]
    fn out_of_bounds_get_fails() {
        let prims = PrimTable::base(EnvTag::Maze);
        let p = parse_program("(λ(x) (λ(y) (if (eq-obj? wall-obj (get x 5 0)) left-action forward-action)))", &prims)
            .unwrap();
        assert!(matches!(exec(&p, &maze_state(None)), Err(Error::OutOfBoundsGet { x: 5, y: 0, .. })));
    }

    #[test]
    fn two_argument_program_needs_direction() {
        let prims = PrimTable::base(EnvTag::Maze);
        let p = parse_program("(λ(x) (λ(y) (if (eq-direction? direction-0 y) right-action left-action)))", &prims)
            .unwrap();
        assert_eq!(exec(&p, &maze_state(None)).unwrap(), Action::Right);
        let mut s = maze_state(None);
        s.direction = None;
        assert!(exec(&p, &s).is_err());
    }

    #[test]
    fn beta_redex_and_partial_application_evaluate() {
        let prims = PrimTable::base(EnvTag::Maze);
        let p = parse_program("(λ(x) ((λ(a) (if (eq-obj? wall-obj a) left-action right-action)) (get x 1 0)))", &prims)
            .unwrap();
        assert_eq!(exec(&p, &maze_state(Some((1, 0)))).unwrap(), Action::Left);
        let q = parse_program("(λ(x) ((if (eq-obj? wall-obj (get x 1 0)) left-action) right-action))", &prims).unwrap();
        assert_eq!(exec(&q, &maze_state(None)).unwrap(), Action::Right);
    }
}
