//! Library learning: abstractions proposed by anti-unification and kept when they shrink
//! the total description length of the solved corpus.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::{match_return, parse_slotted, print_program, print_slotted, BaseTy, Prim, PrimTable, Term, Ty};
use crate::enumerate::COST_EPS;
use crate::error::{Error, Result};
use crate::grammar::{Grammar, HoleTable};

pub const LIBRARY_VERSION: &str = "gridsynth-library-v1";
pub const MAX_ARITY: usize = 3;
/// Distinct subterms considered for pairing, most widespread first.
const MAX_SUBTERMS: usize = 300;
/// Placeholder variables for slots while a pattern is being built.
const SLOT_BASE: usize = 1 << 20;

/// A learned library function `λ$0…λ$n-1. body`.
#[derive(Debug, Clone, PartialEq)]
pub struct Abstraction {
    pub name: String,
    pub arity: usize,
    pub ty: Ty,
    /// Closed term with `arity` leading binders.
    pub body: Term,
    pub use_count: usize,
    pub children: Vec<String>,
}

impl Abstraction {
    pub fn prim(&self) -> Prim {
        Prim::invented(self.name.clone(), self.ty.clone(), self.body.clone())
    }

    /// Body text with `$i` placeholders for the arguments.
    pub fn body_text(&self) -> String {
        print_slotted(&self.body, self.arity)
    }
}

/// A candidate pattern before it is named.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub arity: usize,
    pub ty: Ty,
    pub body: Term,
    /// Canonical text used for de-duplication and tie-breaking.
    pub key: String,
}

impl Proposal {
    fn ret(&self) -> BaseTy {
        self.ty.uncurry().1.as_base().expect("patterns return base types")
    }

    fn inner(&self) -> &Term {
        self.body.strip_lambdas().1
    }
}

#[derive(Debug, Clone)]
pub struct CompressionResult {
    pub grammar: Grammar,
    pub abstractions: Vec<Abstraction>,
    pub rewritten: BTreeMap<String, Term>,
    /// Corpus description length before compression.
    pub dl_before: f64,
    /// Rewritten corpus length plus the description length of every new body.
    pub dl_after: f64,
}

/// Every saturated primitive application in a body, with the type of its hole.
fn typed_subterms(t: &Term, hole: BaseTy, out: &mut Vec<(Term, BaseTy)>) {
    let (head, args) = t.spine();
    let Term::Prim(p) = head else { return };
    if args.is_empty() || args.len() != p.arity() {
        return;
    }
    let Some(arg_tys) = match_return(p.ty(), &Ty::Base(hole)) else { return };
    out.push((t.clone(), hole));
    for (a, ty) in args.iter().zip(arg_tys) {
        if let Some(b) = ty.as_base() {
            typed_subterms(a, b, out);
        }
    }
}

fn program_body<'t>(t: &'t Term, request: &Ty) -> Option<(&'t Term, BaseTy)> {
    let (args, ret) = request.uncurry();
    let mut body = t;
    for _ in 0..args.len() {
        match body {
            Term::Lambda(b) => body = b,
            _ => return None,
        }
    }
    Some((body, ret.as_base()?))
}

struct AntiUnifier {
    slots: Vec<(Term, Term, BaseTy)>,
    max_arity: usize,
}

impl AntiUnifier {
    fn slot(&mut self, a: &Term, b: &Term, ty: BaseTy) -> Option<Term> {
        if let Some(j) = self.slots.iter().position(|(x, y, t)| x == a && y == b && *t == ty) {
            return Some(Term::Var(SLOT_BASE + j));
        }
        if self.slots.len() == self.max_arity {
            return None;
        }
        self.slots.push((a.clone(), b.clone(), ty));
        Some(Term::Var(SLOT_BASE + self.slots.len() - 1))
    }

    /// Most specific generalization; variables of the programs always become slots.
    fn unify(&mut self, a: &Term, b: &Term, ty: BaseTy) -> Option<Term> {
        let (ha, aa) = a.spine();
        let (hb, ab) = b.spine();
        match (ha, hb) {
            (Term::Prim(p), Term::Prim(q)) if p == q && aa.len() == ab.len() && aa.len() == p.arity() => {
                if aa.is_empty() {
                    return Some(a.clone());
                }
                let arg_tys = match_return(p.ty(), &Ty::Base(ty))?;
                let mut args = Vec::with_capacity(aa.len());
                for ((x, y), t) in aa.iter().zip(&ab).zip(arg_tys) {
                    args.push(self.unify(x, y, t.as_base()?)?);
                }
                Some(Term::app(ha.clone(), args))
            }
            _ => self.slot(a, b, ty),
        }
    }
}

fn count_prims(t: &Term) -> usize {
    t.prim_refs().len()
}

/// Replaces placeholder slots by the binders of `λ^n`.
fn close_slots(t: &Term, n: usize) -> Term {
    match t {
        Term::Var(i) if *i >= SLOT_BASE => Term::Var(n - 1 - (i - SLOT_BASE)),
        Term::Var(_) | Term::Prim(_) => t.clone(),
        Term::Lambda(b) => Term::lambda(close_slots(b, n)),
        Term::Apply(f, x) => Term::apply(close_slots(f, n), close_slots(x, n)),
    }
}

fn make_proposal(a: &Term, b: &Term, ty: BaseTy, max_arity: usize) -> Option<Proposal> {
    let mut au = AntiUnifier { slots: Vec::new(), max_arity };
    let pattern = au.unify(a, b, ty)?;
    if count_prims(&pattern) < 2 {
        return None;
    }
    let n = au.slots.len();
    let body = Term::lambdas(n, close_slots(&pattern, n));
    let slot_tys: Vec<Ty> = au.slots.iter().map(|s| Ty::Base(s.2)).collect();
    let fty = Ty::function(&slot_tys, Ty::Base(ty));
    let key = format!("{fty} :: {}", print_slotted(&body, n));
    Some(Proposal { arity: n, ty: fty, body, key })
}

/// Binds pattern slots against `t`. Slot `j` is the pattern variable `n-1-j`.
fn match_pattern(pat: &Term, t: &Term, n: usize, binds: &mut [Option<Term>]) -> bool {
    if let Term::Var(k) = pat {
        let j = n - 1 - k;
        return match &binds[j] {
            Some(b) => b == t,
            None => {
                binds[j] = Some(t.clone());
                true
            }
        };
    }
    let (hp, ap) = pat.spine();
    let (ht, at) = t.spine();
    if ap.len() != at.len() || hp != ht {
        return false;
    }
    ap.iter().zip(at).all(|(x, y)| match_pattern(x, y, n, binds))
}

fn slot_types(p: &Proposal) -> Vec<BaseTy> {
    p.ty.uncurry().0.iter().map(|t| t.as_base().expect("slots are base typed")).collect()
}

/// Rewrites every outermost instance of the proposal's pattern into a call of `f`.
fn rewrite_body(t: &Term, hole: BaseTy, p: &Proposal, f: &Term, slot_tys: &[BaseTy]) -> Term {
    if hole == p.ret() {
        let mut binds = vec![None; p.arity];
        if match_pattern(p.inner(), t, p.arity, &mut binds) {
            let args = binds
                .into_iter()
                .zip(slot_tys)
                .map(|(b, ty)| rewrite_body(&b.expect("every slot occurs in the pattern"), *ty, p, f, slot_tys));
            return Term::app(f.clone(), args);
        }
    }
    let (head, args) = t.spine();
    let Term::Prim(prim) = head else { return t.clone() };
    if args.is_empty() {
        return t.clone();
    }
    let Some(arg_tys) = match_return(prim.ty(), &Ty::Base(hole)) else { return t.clone() };
    let new_args = args
        .iter()
        .zip(arg_tys)
        .map(|(a, ty)| match ty.as_base() {
            Some(b) => rewrite_body(a, b, p, f, slot_tys),
            None => (*a).clone(),
        });
    Term::app(head.clone(), new_args)
}

fn rewrite_program(t: &Term, request: &Ty, p: &Proposal, f: &Term) -> Term {
    let (binders, _) = t.strip_lambdas();
    match program_body(t, request) {
        Some((body, hole)) => Term::lambdas(binders, rewrite_body(body, hole, p, f, &slot_types(p))),
        None => t.clone(),
    }
}

fn occurs_in(t: &Term, hole: BaseTy, p: &Proposal) -> bool {
    let mut subs = Vec::new();
    typed_subterms(t, hole, &mut subs);
    subs.iter().any(|(s, ty)| *ty == p.ret() && match_pattern(p.inner(), s, p.arity, &mut vec![None; p.arity]))
}

/// Candidate abstractions from pairwise anti-unification of same-typed subterms. Only
/// patterns that occur in at least two corpus programs are returned, ordered by key.
pub fn propose_candidates(corpus: &[Term], request: &Ty, max_arity: usize) -> Vec<Proposal> {
    let max_arity = max_arity.min(MAX_ARITY);
    let bodies: Vec<(&Term, BaseTy)> = corpus.iter().filter_map(|t| program_body(t, request)).collect();
    // distinct subterms, ranked by how many programs contain them
    let mut spread: HashMap<(Term, BaseTy), usize> = HashMap::new();
    for (body, hole) in &bodies {
        let mut subs = Vec::new();
        typed_subterms(body, *hole, &mut subs);
        let unique: HashSet<(Term, BaseTy)> = subs.into_iter().collect();
        for s in unique {
            *spread.entry(s).or_default() += 1;
        }
    }
    let mut ranked: Vec<((Term, BaseTy), usize, String)> =
        spread.into_iter().map(|(k, c)| { let s = print_program(&k.0); (k, c, s) }).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(b.0 .0.size().cmp(&a.0 .0.size())).then(a.2.cmp(&b.2)));
    ranked.truncate(MAX_SUBTERMS);
    let subterms: Vec<(Term, BaseTy)> = ranked.into_iter().map(|r| r.0).collect();

    let mut proposals: BTreeMap<String, Proposal> = BTreeMap::new();
    for i in 0..subterms.len() {
        for j in i..subterms.len() {
            let ((a, ta), (b, tb)) = (&subterms[i], &subterms[j]);
            if ta != tb {
                continue;
            }
            if let Some(p) = make_proposal(a, b, *ta, max_arity) {
                proposals.entry(p.key.clone()).or_insert(p);
            }
        }
    }
    proposals
        .into_values()
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter(|p| bodies.iter().filter(|(b, h)| occurs_in(b, *h, p)).take(2).count() >= 2)
        .collect()
}

fn corpus_dl(g: &Grammar, corpus: &[Term], request: &Ty, table: &HoleTable) -> Result<f64> {
    let mut total = 0.0;
    for t in corpus {
        let (body, hole) = program_body(t, request)
            .ok_or_else(|| Error::NotDerivable(format!("{} does not match the request", print_program(t))))?;
        total += g.body_description_length(body, hole, table)?;
    }
    Ok(total)
}

fn request_table(g: &Grammar, request: &Ty) -> HoleTable {
    let ctx: Vec<Ty> = request.uncurry().0.into_iter().cloned().collect();
    g.hole_table(&ctx, 0)
}

struct Scored {
    gain: f64,
    body_dl: f64,
    key: String,
    index: usize,
}

/// Greedy MDL compression: repeatedly adds the proposal with the largest description
/// length saving (corpus before, minus rewritten corpus plus the new body) while positive.
pub fn compress(corpus: &BTreeMap<String, Term>, g: &Grammar, max_arity: usize) -> Result<CompressionResult> {
    let request = g.request();
    let ids: Vec<String> = corpus.keys().cloned().collect();
    let mut programs: Vec<Term> = corpus.values().cloned().collect();
    let mut grammar = g.clone();
    let dl_before = corpus_dl(&grammar, &programs, &request, &request_table(&grammar, &request))?;
    let mut current = dl_before;
    let mut library_cost = 0.0;
    let mut added: Vec<Abstraction> = Vec::new();
    let mut next_index = g.abstractions().count();
    loop {
        let proposals = propose_candidates(&programs, &request, max_arity);
        let scored: Vec<Scored> = proposals
            .par_iter()
            .enumerate()
            .filter_map(|(index, p)| {
                let f = Prim::invented(format!("f{next_index}"), p.ty.clone(), p.body.clone());
                let g2 = grammar.with_abstraction(f.clone());
                let call = Term::Prim(f);
                let rewritten: Vec<Term> = programs.iter().map(|t| rewrite_program(t, &request, p, &call)).collect();
                let after = corpus_dl(&g2, &rewritten, &request, &request_table(&g2, &request)).ok()?;
                let body_dl = grammar.description_length(&p.body, &p.ty).ok()?;
                Some(Scored { gain: current - (after + library_cost + body_dl), body_dl, key: p.key.clone(), index })
            })
            .collect();
        let best = scored
            .into_iter()
            .filter(|s| s.gain > COST_EPS)
            .min_by(|a, b| b.gain.total_cmp(&a.gain).then_with(|| a.key.cmp(&b.key)));
        let Some(best) = best else { break };
        let p = &proposals[best.index];
        let name = format!("f{next_index}");
        next_index += 1;
        let prim = Prim::invented(name.clone(), p.ty.clone(), p.body.clone());
        let call = Term::Prim(prim.clone());
        programs = programs.iter().map(|t| rewrite_program(t, &request, p, &call)).collect();
        grammar = grammar.with_abstraction(prim);
        library_cost += best.body_dl;
        current = corpus_dl(&grammar, &programs, &request, &request_table(&grammar, &request))? + library_cost;
        let mut children: Vec<String> =
            p.body.prim_refs().iter().filter(|q| q.is_invented()).map(|q| q.name().to_string()).collect();
        children.sort();
        children.dedup();
        added.push(Abstraction { name, arity: p.arity, ty: p.ty.clone(), body: p.body.clone(), use_count: 0, children });
    }
    let counts = call_counts(&programs, &grammar);
    for a in &mut added {
        a.use_count = counts.get(&a.name).copied().unwrap_or(0);
    }
    Ok(CompressionResult {
        grammar,
        abstractions: added,
        rewritten: ids.into_iter().zip(programs).collect(),
        dl_before,
        dl_after: current,
    })
}

/// How often each library function is called when the corpus runs, counting calls made
/// from inside other library functions.
pub fn call_counts(programs: &[Term], g: &Grammar) -> BTreeMap<String, usize> {
    let direct = |t: &Term| {
        let mut m: BTreeMap<String, usize> = BTreeMap::new();
        for p in t.prim_refs() {
            if p.is_invented() {
                *m.entry(p.name().to_string()).or_default() += 1;
            }
        }
        m
    };
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in programs {
        for (k, v) in direct(t) {
            *counts.entry(k).or_default() += v;
        }
    }
    // later functions may call earlier ones, never the reverse
    let fs: Vec<&Prim> = g.abstractions().collect();
    for f in fs.iter().rev() {
        let calls = counts.get(f.name()).copied().unwrap_or(0);
        if calls == 0 {
            continue;
        }
        for (k, v) in direct(f.body().expect("library functions have bodies")) {
            *counts.entry(k).or_default() += v * calls;
        }
    }
    counts
}

fn inline(t: &Term, known: &HashSet<&str>) -> Result<Term> {
    Ok(match t {
        Term::Prim(p) if p.is_invented() => {
            if !known.contains(p.name()) {
                return Err(Error::UnknownAbstraction(p.name().to_string()));
            }
            inline(p.body().expect("library functions have bodies"), known)?
        }
        Term::Prim(_) | Term::Var(_) => t.clone(),
        Term::Lambda(b) => Term::lambda(inline(b, known)?),
        Term::Apply(f, x) => Term::apply(inline(f, known)?, inline(x, known)?),
    })
}

/// Inlines every library call and β-reduces, leaving only base primitives.
pub fn expand(t: &Term, lib: &[Abstraction]) -> Result<Term> {
    let known: HashSet<&str> = lib.iter().map(|a| a.name.as_str()).collect();
    Ok(inline(t, &known)?.beta_normal())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct FunctionFile {
    name: String,
    arity: usize,
    #[serde(rename = "type")]
    ty: String,
    body: String,
    children: Vec<String>,
    use_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct LibraryFile {
    version: String,
    functions: Vec<FunctionFile>,
}

pub fn library_to_json(lib: &[Abstraction]) -> String {
    let file = LibraryFile {
        version: LIBRARY_VERSION.to_string(),
        functions: lib
            .iter()
            .map(|a| FunctionFile {
                name: a.name.clone(),
                arity: a.arity,
                ty: a.ty.to_string(),
                body: a.body_text(),
                children: a.children.clone(),
                use_count: a.use_count,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("library serializes")
}

/// Reads a library written by [`library_to_json`]; functions are resolved in order on top
/// of `base`.
pub fn library_from_json(text: &str, base: &PrimTable) -> Result<Vec<Abstraction>> {
    let file: LibraryFile = serde_json::from_str(text)?;
    if file.version != LIBRARY_VERSION {
        return Err(Error::Invalid(format!("unsupported library version {}", file.version)));
    }
    let mut table = base.clone();
    let mut out = Vec::with_capacity(file.functions.len());
    for f in file.functions {
        let body = parse_slotted(&f.body, f.arity, &table)?;
        let a = Abstraction { name: f.name, arity: f.arity, ty: Ty::parse(&f.ty)?, body, use_count: f.use_count, children: f.children };
        table = table.with(a.prim());
        out.push(a);
    }
    Ok(out)
}

/// One line per function with its fully expanded definition, then a count line.
pub fn library_report(lib: &[Abstraction]) -> String {
    let mut out = String::new();
    for a in lib {
        let expanded = expand(&a.body, lib).map(|t| print_slotted(&t, a.arity)).unwrap_or_else(|e| e.to_string());
        out.push_str(&format!(
            "{} : {} (uses {}) = {}\n    expanded: {}\n",
            a.name,
            a.ty,
            a.use_count,
            a.body_text(),
            expanded
        ));
    }
    out.push_str(&format!("Number of extracted functions: {}\n", lib.len()));
    out
}

/// Library functions of a grammar, in order, with recorded use counts.
pub fn library_of(g: &Grammar, use_counts: &BTreeMap<String, usize>) -> Vec<Abstraction> {
    g.abstractions()
        .map(|p| {
            let body = p.body().expect("library functions have bodies").clone();
            let mut children: Vec<String> =
                body.prim_refs().iter().filter(|q| q.is_invented()).map(|q| q.name().to_string()).collect();
            children.sort();
            children.dedup();
            Abstraction {
                name: p.name().to_string(),
                arity: p.ty().arity(),
                ty: p.ty().clone(),
                body,
                use_count: use_counts.get(p.name()).copied().unwrap_or(0),
                children,
            }
        })
        .collect()
}
