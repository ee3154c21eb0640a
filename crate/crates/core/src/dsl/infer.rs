use super::syntax::print_program;
use super::term::Term;
use super::types::{Ty, TypeContext};
use crate::error::{Error, Result};

fn infer(t: &Term, env: &mut Vec<Ty>, cx: &mut TypeContext) -> Result<Ty> {
    match t {
        Term::Prim(p) => Ok(cx.instantiate(p.ty())),
        Term::Var(i) => env
            .len()
            .checked_sub(1 + i)
            .map(|pos| env[pos].clone())
            .ok_or_else(|| Error::UnboundVariable(format!("#{i}"))),
        Term::Lambda(b) => {
            let arg = cx.fresh();
            env.push(arg.clone());
            let body = infer(b, env, cx);
            env.pop();
            Ok(Ty::arrow(arg, body?))
        }
        Term::Apply(f, x) => {
            let ft = infer(f, env, cx)?;
            let xt = infer(x, env, cx)?;
            let ret = cx.fresh();
            let expected = Ty::arrow(xt.clone(), ret.clone());
            if cx.unify(&ft, &expected).is_err() {
                let found = cx.apply(&ft);
                // Report the argument position when the function side is already an arrow.
                let (exp, fnd) = match &found {
                    Ty::Arrow(param, _) => (cx.apply(param), cx.apply(&xt)),
                    _ => (cx.apply(&expected), found.clone()),
                };
                return Err(Error::TypeMismatch { expected: exp, found: fnd, location: print_program(t) });
            }
            Ok(ret)
        }
    }
}

/// Most general type of a closed term; variables are renumbered from `t0`.
pub fn infer_type(t: &Term) -> Result<Ty> {
    let mut cx = TypeContext::default();
    let ty = infer(t, &mut Vec::new(), &mut cx)?;
    Ok(canonicalize(&cx.apply(&ty)))
}

/// Type of `t` under a context of argument types (innermost last), ground where possible.
pub fn infer_in_context(t: &Term, context: &[Ty]) -> Result<Ty> {
    let mut cx = TypeContext::default();
    let mut env = context.to_vec();
    let ty = infer(t, &mut env, &mut cx)?;
    Ok(canonicalize(&cx.apply(&ty)))
}

/// Checks `t` against a requested type, returning the unified type.
pub fn check_type(t: &Term, request: &Ty) -> Result<Ty> {
    let mut cx = TypeContext::default();
    let ty = infer(t, &mut Vec::new(), &mut cx)?;
    let want = cx.instantiate(request);
    if cx.unify(&ty, &want).is_err() {
        return Err(Error::TypeMismatch {
            expected: request.clone(),
            found: canonicalize(&cx.apply(&ty)),
            location: print_program(t),
        });
    }
    Ok(canonicalize(&cx.apply(&ty)))
}

fn canonicalize(t: &Ty) -> Ty {
    fn go(t: &Ty, map: &mut Vec<u32>) -> Ty {
        match t {
            Ty::Base(_) => t.clone(),
            Ty::Var(v) => {
                let idx = match map.iter().position(|w| w == v) {
                    Some(i) => i,
                    None => {
                        map.push(*v);
                        map.len() - 1
                    }
                };
                Ty::Var(idx as u32)
            }
            Ty::Arrow(a, b) => {
                let a = go(a, map);
                Ty::arrow(a, go(b, map))
            }
        }
    }
    go(t, &mut Vec::new())
}
