//! S-expression concrete syntax for DSL programs.
//!
//! Binders are written `(λ(x) body)` or `(lambda (x y) body)`; a multi-name binder list
//! desugars to nested single binders. A parenthesised single expression `((if …))` is the
//! expression itself, so the bracketed program style `λ(x) ( (if …) )` parses as well.
//! Library bodies use `$0`, `$1`, `$2` for their argument slots.

use super::prims::PrimTable;
use super::term::Term;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' | ')' | 'λ' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn read(tokens: &[String], pos: &mut usize) -> Result<SExpr> {
    let tok = tokens
        .get(*pos)
        .ok_or_else(|| Error::Syntax("unexpected end of input (unbalanced parenthesis)".into()))?;
    *pos += 1;
    match tok.as_str() {
        "(" => {
            let mut items = Vec::new();
            loop {
                match tokens.get(*pos).map(String::as_str) {
                    None => return Err(Error::Syntax("unbalanced parenthesis: missing `)`".into())),
                    Some(")") => {
                        *pos += 1;
                        return Ok(SExpr::List(items));
                    }
                    Some(_) => items.push(read(tokens, pos)?),
                }
            }
        }
        ")" => Err(Error::Syntax("unexpected `)`".into())),
        _ => Ok(SExpr::Atom(tok.clone())),
    }
}

fn read_all(text: &str) -> Result<SExpr> {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Err(Error::Syntax("empty program".into()));
    }
    let mut pos = 0;
    let mut items = Vec::new();
    while pos < tokens.len() {
        items.push(read(&tokens, &mut pos)?);
    }
    if items.len() == 1 {
        Ok(items.pop().unwrap())
    } else {
        Ok(SExpr::List(items))
    }
}

fn is_binder_keyword(s: &SExpr) -> bool {
    matches!(s, SExpr::Atom(a) if a == "λ" || a == "lambda")
}

fn looks_like_variable(name: &str) -> bool {
    name.starts_with('$') || (name.len() <= 2 && name.chars().all(|c| c.is_ascii_lowercase()))
}

struct Converter<'a> {
    prims: &'a PrimTable,
    scope: Vec<String>,
}

impl Converter<'_> {
    fn convert(&mut self, e: &SExpr) -> Result<Term> {
        match e {
            SExpr::Atom(name) => {
                if let Some(pos) = self.scope.iter().rposition(|s| s == name) {
                    return Ok(Term::Var(self.scope.len() - 1 - pos));
                }
                if let Some(p) = self.prims.get(name) {
                    return Ok(Term::Prim(p.clone()));
                }
                if is_binder_keyword(e) {
                    return Err(Error::Syntax("binder keyword outside of a binder form".into()));
                }
                if looks_like_variable(name) {
                    Err(Error::UnboundVariable(name.clone()))
                } else {
                    Err(Error::UnknownPrimitive(name.clone()))
                }
            }
            SExpr::List(items) => {
                if items.is_empty() {
                    return Err(Error::Syntax("empty application `()`".into()));
                }
                if is_binder_keyword(&items[0]) {
                    return self.convert_lambda(items);
                }
                if items.len() == 1 {
                    return self.convert(&items[0]);
                }
                let head = self.convert(&items[0])?;
                let args = items[1..].iter().map(|a| self.convert(a)).collect::<Result<Vec<_>>>()?;
                Ok(Term::app(head, args))
            }
        }
    }

    fn convert_lambda(&mut self, items: &[SExpr]) -> Result<Term> {
        let names: Vec<String> = match items.get(1) {
            Some(SExpr::List(ns)) => ns
                .iter()
                .map(|n| match n {
                    SExpr::Atom(a) if !is_binder_keyword(n) => Ok(a.clone()),
                    _ => Err(Error::Syntax("binder names must be atoms".into())),
                })
                .collect::<Result<_>>()?,
            Some(SExpr::Atom(a)) if !is_binder_keyword(&items[1]) => vec![a.clone()],
            _ => return Err(Error::Syntax("malformed binder: expected `(λ(x) body)`".into())),
        };
        if names.is_empty() {
            return Err(Error::Syntax("binder with no names".into()));
        }
        let body_items = &items[2..];
        if body_items.is_empty() {
            return Err(Error::Syntax("binder without a body".into()));
        }
        let n = names.len();
        self.scope.extend(names);
        let body = if body_items.len() == 1 {
            self.convert(&body_items[0])
        } else {
            self.convert(&SExpr::List(body_items.to_vec()))
        };
        self.scope.truncate(self.scope.len() - n);
        Ok(Term::lambdas(n, body?))
    }
}

/// Parses program text into a de Bruijn term.
pub fn parse_program(text: &str, prims: &PrimTable) -> Result<Term> {
    let sexpr = read_all(text)?;
    Converter { prims, scope: Vec::new() }.convert(&sexpr)
}

/// Parses a library body written with `$0..$n` placeholders into `λ^arity. body`.
pub fn parse_slotted(text: &str, arity: usize, prims: &PrimTable) -> Result<Term> {
    let sexpr = read_all(text)?;
    let scope = (0..arity).map(|i| format!("${i}")).collect();
    let body = Converter { prims, scope }.convert(&sexpr)?;
    Ok(Term::lambdas(arity, body))
}

/// Canonical binder name for nesting level `level` (outermost = 0).
pub fn binder_name(level: usize) -> String {
    const NAMES: [&str; 6] = ["x", "y", "z", "u", "v", "w"];
    NAMES.get(level).map(|s| s.to_string()).unwrap_or_else(|| format!("v{level}"))
}

fn write_term(t: &Term, scope: &mut Vec<String>, out: &mut String) {
    match t {
        Term::Prim(p) => out.push_str(p.name()),
        Term::Var(i) => match scope.len().checked_sub(1 + i) {
            Some(pos) => out.push_str(&scope[pos]),
            None => out.push_str(&format!("$free{i}")),
        },
        Term::Lambda(b) => {
            let name = binder_name(scope.iter().filter(|s| !s.starts_with('$')).count());
            out.push_str("(λ(");
            out.push_str(&name);
            out.push_str(") ");
            scope.push(name);
            write_term(b, scope, out);
            scope.pop();
            out.push(')');
        }
        Term::Apply(..) => {
            let (head, args) = t.spine();
            out.push('(');
            write_term(head, scope, out);
            for a in args {
                out.push(' ');
                write_term(a, scope, out);
            }
            out.push(')');
        }
    }
}

/// Canonical text: binders named x, y, z, … outermost first; `λ` on output.
pub fn print_program(t: &Term) -> String {
    let mut out = String::new();
    write_term(t, &mut Vec::new(), &mut out);
    out
}

/// Prints `λ^arity. body` as its body with `$i` placeholders for the slots.
pub fn print_slotted(t: &Term, arity: usize) -> String {
    let mut body = t;
    for _ in 0..arity {
        match body {
            Term::Lambda(b) => body = b,
            _ => break,
        }
    }
    let mut scope: Vec<String> = (0..arity).map(|i| format!("${i}")).collect();
    let mut out = String::new();
    write_term(body, &mut scope, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvTag;

    const LISTING: &str = "(λ(x) (if (eq-obj? wall-obj (get x 1 0)) left-action forward-action))";

    #[test]
    fn listing_parses_with_var_at_get() {
        let prims = PrimTable::base(EnvTag::Maze);
        let t = parse_program(LISTING, &prims).unwrap();
        let (n, body) = t.strip_lambdas();
        assert_eq!(n, 1);
        let (head, args) = body.spine();
        assert_eq!(print_program(head), "if");
        let (_, cond_args) = args[0].spine();
        let (_, get_args) = cond_args[1].spine();
        assert_eq!(get_args[0], &Term::Var(0));
        assert_eq!(print_program(&t), LISTING);
    }

    #[test]
    fn bracketed_listing_layout_and_ascii_keyword() {
        let prims = PrimTable::base(EnvTag::Maze);
        let verbatim = "λ(x) ( \n  (if (eq-obj? wall-obj (get x 1 0))\n        left-action forward-action)\n)";
        assert_eq!(print_program(&parse_program(verbatim, &prims).unwrap()), LISTING);
        let ascii = "(lambda (x) (if (eq-obj? wall-obj (get x 1 0)) left-action forward-action))";
        assert_eq!(print_program(&parse_program(ascii, &prims).unwrap()), LISTING);
    }

    #[test]
    fn identity_and_nested_binders() {
        let prims = PrimTable::base(EnvTag::Maze);
        assert_eq!(parse_program("(λ(x) x)", &prims).unwrap(), Term::lambda(Term::Var(0)));
        let t = parse_program("(lambda (m d) (if (eq-direction? direction-3 d) left-action forward-action))", &prims)
            .unwrap();
        assert_eq!(
            print_program(&t),
            "(λ(x) (λ(y) (if (eq-direction? direction-3 y) left-action forward-action)))"
        );
    }

    #[test]
    fn syntax_errors() {
        let prims = PrimTable::base(EnvTag::Maze);
        assert!(matches!(parse_program("(λ(x) (get x 1 0", &prims), Err(Error::Syntax(_))));
        assert!(matches!(parse_program("(λ(x) left-action))", &prims), Err(Error::Syntax(_))));
        assert!(matches!(parse_program("()", &prims), Err(Error::Syntax(_))));
        assert!(matches!(parse_program("(λ(x) (get q 1 0))", &prims), Err(Error::UnboundVariable(_))));
        assert!(matches!(parse_program("(λ(x) jump-action)", &prims), Err(Error::UnknownPrimitive(_))));
    }

    #[test]
    fn slotted_bodies_round_trip() {
        let prims = PrimTable::base(EnvTag::Maze);
        let t = parse_slotted("(eq-obj? wall-obj (get $0 $1 $2))", 3, &prims).unwrap();
        assert_eq!(t.strip_lambdas().0, 3);
        assert_eq!(print_slotted(&t, 3), "(eq-obj? wall-obj (get $0 $1 $2))");
        assert_eq!(print_program(&t), "(λ(x) (λ(y) (λ(z) (eq-obj? wall-obj (get x y z)))))");
    }
}
