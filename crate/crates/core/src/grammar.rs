//! Probabilistic grammar over DSL primitives and learned abstractions.
//!
//! Programs are derived top-down in β-normal, η-long form: an arrow-typed request
//! introduces binders, and every base-typed hole is filled by a fully applied primitive
//! or by a bound variable. Each hole normalizes the weights of the type-compatible
//! choices, so description lengths are exact negative log-probabilities in nats.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsl::{match_return, parse_program, print_program, BaseTy, Prim, PrimTable, Term, Ty};
use crate::envs::{rng, EnvTag};
use crate::error::{Error, Result};

pub const GRAMMAR_VERSION: &str = "gridsynth-grammar-v1";

#[derive(Debug, Clone)]
pub struct Production {
    pub prim: Prim,
    pub logp: f64,
}

/// One way of filling a hole.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    /// Index into the grammar's productions.
    Prim(usize),
    /// de Bruijn index of a bound variable.
    Var(usize),
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub choice: Choice,
    /// Negative log-probability of this choice at the hole, in nats.
    pub cost: f64,
    pub args: Vec<BaseTy>,
}

#[derive(Debug, Clone)]
pub struct Grammar {
    env: EnvTag,
    productions: Vec<Production>,
    log_variable: f64,
}

const N_BASE: usize = BaseTy::ALL.len();

pub(crate) fn slot(b: BaseTy) -> usize {
    b as usize
}

/// Candidate lists and depth/cost bounds for every base hole type under one binder context.
#[derive(Debug, Clone)]
pub struct HoleTable {
    cands: Vec<Vec<Candidate>>,
    min_depth: [usize; N_BASE],
    /// `min_cost[d][t]`: cheapest derivation of type `t` within depth `d`.
    min_cost: Vec<[f64; N_BASE]>,
    /// `min_size[d][t]`: fewest nodes of a derivation of type `t` within depth `d`.
    min_size: Vec<[usize; N_BASE]>,
}

impl HoleTable {
    pub fn candidates(&self, hole: BaseTy) -> &[Candidate] {
        &self.cands[slot(hole)]
    }

    /// Smallest depth at which `hole` can be filled (`usize::MAX` if never).
    pub fn min_depth(&self, hole: BaseTy) -> usize {
        self.min_depth[slot(hole)]
    }

    pub fn candidate_min_depth(&self, c: &Candidate) -> usize {
        c.args
            .iter()
            .map(|a| self.min_depth[slot(*a)])
            .max()
            .map_or(1, |d| d.saturating_add(1))
    }

    /// Cheapest cost of any `hole` derivation within `depth` (infinite if none).
    pub fn min_cost(&self, hole: BaseTy, depth: usize) -> f64 {
        let d = depth.min(self.min_cost.len() - 1);
        self.min_cost[d][slot(hole)]
    }

    pub fn max_depth(&self) -> usize {
        self.min_cost.len() - 1
    }

    /// Fewest nodes of any `hole` derivation within `depth` (`usize::MAX` if none).
    pub fn min_size(&self, hole: BaseTy, depth: usize) -> usize {
        let d = depth.min(self.min_size.len() - 1);
        self.min_size[d][slot(hole)]
    }

    fn candidate_min_size(&self, c: &Candidate, depth: usize) -> usize {
        if depth == 0 {
            return usize::MAX;
        }
        c.args.iter().fold(1usize, |acc, a| acc.saturating_add(self.min_size(*a, depth - 1)))
    }
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Sampling parameters. `d_max` counts every node including binders.
#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub d_max: usize,
    pub request: Ty,
    pub seed: u64,
    /// Upper bound on leaves plus binders.
    pub max_nodes: usize,
}

/// Node cap for sampled programs. Uniform MinAtar grammars are supercritical at depth 20.
pub const DEFAULT_MAX_NODES: usize = 64;

impl SampleConfig {
    pub fn new(d_max: usize, request: Ty, seed: u64) -> SampleConfig {
        SampleConfig { d_max, request, seed, max_nodes: DEFAULT_MAX_NODES }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ProductionFile {
    name: String,
    #[serde(rename = "type")]
    ty: String,
    logp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    body: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct GrammarFile {
    version: String,
    env: EnvTag,
    /// Depth limits used with this grammar count λ-binders as nodes.
    depth_counts_binders: bool,
    log_variable: f64,
    productions: Vec<ProductionFile>,
}

impl Grammar {
    /// Uniform distribution over the environment's base primitives.
    pub fn uniform(env: EnvTag) -> Grammar {
        Grammar::from_table(&PrimTable::base(env))
    }

    pub fn from_table(table: &PrimTable) -> Grammar {
        Grammar {
            env: table.env(),
            productions: table.entries().iter().map(|p| Production { prim: p.clone(), logp: 0.0 }).collect(),
            log_variable: 0.0,
        }
    }

    pub fn env(&self) -> EnvTag {
        self.env
    }

    pub fn request(&self) -> Ty {
        self.env.request()
    }

    pub fn productions(&self) -> &[Production] {
        &self.productions
    }

    pub fn log_variable(&self) -> f64 {
        self.log_variable
    }

    pub fn prims(&self) -> PrimTable {
        PrimTable::from_entries(self.env, self.productions.iter().map(|p| p.prim.clone()).collect())
    }

    pub fn production(&self, name: &str) -> Option<&Production> {
        self.productions.iter().find(|p| p.prim.name() == name)
    }

    /// Learned library functions in the order they were added.
    pub fn abstractions(&self) -> impl Iterator<Item = &Prim> {
        self.productions.iter().map(|p| &p.prim).filter(|p| p.is_invented())
    }

    /// Adds a library function with weight `logp = 0` (the uniform prior weight).
    pub fn with_abstraction(&self, prim: Prim) -> Grammar {
        let mut g = self.clone();
        g.productions.push(Production { prim, logp: 0.0 });
        g
    }

    /// Type-compatible choices at a base hole, with normalized costs. `ctx` lists the
    /// binder types, innermost last.
    pub fn candidates(&self, hole: BaseTy, ctx: &[Ty]) -> Vec<Candidate> {
        let hole_ty = Ty::Base(hole);
        let mut raw: Vec<(Choice, f64, Vec<BaseTy>)> = Vec::new();
        for (i, p) in self.productions.iter().enumerate() {
            let Some(args) = match_return(p.prim.ty(), &hole_ty) else { continue };
            let Some(args) = args.iter().map(Ty::as_base).collect::<Option<Vec<_>>>() else { continue };
            raw.push((Choice::Prim(i), p.logp, args));
        }
        let vars: Vec<usize> = ctx
            .iter()
            .rev()
            .enumerate()
            .filter(|(_, t)| **t == hole_ty)
            .map(|(i, _)| i)
            .collect();
        if !vars.is_empty() {
            let w = self.log_variable - (vars.len() as f64).ln();
            raw.extend(vars.into_iter().map(|i| (Choice::Var(i), w, Vec::new())));
        }
        let z = logsumexp(raw.iter().map(|r| r.1));
        raw.into_iter().map(|(choice, w, args)| Candidate { choice, cost: z - w, args }).collect()
    }

    /// Candidate tables for every base type under `ctx`, with bounds up to `max_depth`.
    pub fn hole_table(&self, ctx: &[Ty], max_depth: usize) -> HoleTable {
        let cands: Vec<Vec<Candidate>> = BaseTy::ALL.iter().map(|b| self.candidates(*b, ctx)).collect();
        let mut min_depth = [usize::MAX; N_BASE];
        loop {
            let mut changed = false;
            for (t, cs) in cands.iter().enumerate() {
                for c in cs {
                    let d = c
                        .args
                        .iter()
                        .map(|a| min_depth[slot(*a)])
                        .max()
                        .map_or(1, |d| d.saturating_add(1));
                    if d < min_depth[t] {
                        min_depth[t] = d;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut min_cost = vec![[f64::INFINITY; N_BASE]];
        for d in 1..=max_depth {
            let prev = min_cost[d - 1];
            let mut row = [f64::INFINITY; N_BASE];
            for (t, cs) in cands.iter().enumerate() {
                for c in cs {
                    let total = c.cost + c.args.iter().map(|a| prev[slot(*a)]).sum::<f64>();
                    if total < row[t] {
                        row[t] = total;
                    }
                }
            }
            min_cost.push(row);
        }
        let mut min_size = vec![[usize::MAX; N_BASE]];
        for d in 1..=max_depth {
            let prev = min_size[d - 1];
            let mut row = [usize::MAX; N_BASE];
            for (t, cs) in cands.iter().enumerate() {
                for c in cs {
                    let n = c.args.iter().fold(1usize, |acc, a| acc.saturating_add(prev[slot(*a)]));
                    row[t] = row[t].min(n);
                }
            }
            min_size.push(row);
        }
        HoleTable { cands, min_depth, min_cost, min_size }
    }

    /// Description length of `t` as a derivation of `request`, in nats.
    pub fn description_length(&self, t: &Term, request: &Ty) -> Result<f64> {
        let (args, ret) = request.uncurry();
        let ctx: Vec<Ty> = args.into_iter().cloned().collect();
        let mut body = t;
        for _ in 0..ctx.len() {
            match body {
                Term::Lambda(b) => body = b,
                _ => return Err(Error::NotDerivable(format!("{} lacks binders for {request}", print_program(t)))),
            }
        }
        let hole = ret
            .as_base()
            .ok_or_else(|| Error::NotDerivable(format!("request {request} does not end in a base type")))?;
        let table = self.hole_table(&ctx, 0);
        self.body_dl(body, hole, &table)
    }

    /// Description length of a body (binders already stripped) filling `hole`, using a
    /// precomputed table for the binder context.
    pub fn body_description_length(&self, body: &Term, hole: BaseTy, table: &HoleTable) -> Result<f64> {
        self.body_dl(body, hole, table)
    }

    /// Description length under this grammar's environment request.
    pub fn dl(&self, t: &Term) -> Result<f64> {
        self.description_length(t, &self.request())
    }

    fn body_dl(&self, t: &Term, hole: BaseTy, table: &HoleTable) -> Result<f64> {
        let (head, args) = t.spine();
        let cand = table.candidates(hole).iter().find(|c| match (c.choice, head) {
            (Choice::Prim(i), Term::Prim(p)) => self.productions[i].prim == *p,
            (Choice::Var(i), Term::Var(j)) => i == *j,
            _ => false,
        });
        let Some(cand) = cand else {
            return Err(Error::NotDerivable(format!("{} cannot fill a {} hole", print_program(head), hole.name())));
        };
        if cand.args.len() != args.len() {
            return Err(Error::NotDerivable(format!(
                "{} applied to {} arguments, expected {}",
                print_program(head),
                args.len(),
                cand.args.len()
            )));
        }
        let mut rest = 0.0;
        for (a, ty) in args.iter().zip(&cand.args).rev() {
            rest = self.body_dl(a, *ty, table)? + rest;
        }
        Ok(cand.cost + rest)
    }

    /// Laplace-smoothed (α = 1) usage frequencies over the solved corpus. Every primitive
    /// occurrence in a β-normal, η-long term is one derivation choice.
    pub fn refit(&self, solved: &[Term]) -> Grammar {
        let mut counts = vec![0usize; self.productions.len()];
        let mut var_count = 0usize;
        let table = self.prims();
        for t in solved {
            t.walk(&mut |n| match n {
                Term::Prim(p) => {
                    if let Some(i) = table.position(p.name()) {
                        counts[i] += 1;
                    }
                }
                Term::Var(_) => var_count += 1,
                _ => {}
            });
        }
        Grammar {
            env: self.env,
            productions: self
                .productions
                .iter()
                .zip(&counts)
                .map(|(p, c)| Production { prim: p.prim.clone(), logp: ((c + 1) as f64).ln() })
                .collect(),
            log_variable: ((var_count + 1) as f64).ln(),
        }
    }

    /// Draws a program of `cfg.request` within `cfg.d_max` depth and `cfg.max_nodes`
    /// nodes. Each node renormalizes over the choices whose smallest completion still fits
    /// the remaining depth and node budget, so a draw never has to be rejected.
    pub fn sample_program(&self, cfg: &SampleConfig) -> Result<Term> {
        let mut r = rng(cfg.seed);
        self.sample_with(&cfg.request, cfg.d_max, cfg.max_nodes, &mut r)
    }

    pub fn sample_with<R: Rng>(&self, request: &Ty, d_max: usize, max_nodes: usize, r: &mut R) -> Result<Term> {
        let table = self.request_table(request, d_max)?;
        let (args, ret) = request.uncurry();
        let hole = ret.as_base().expect("checked by request_table");
        let depth = d_max - args.len();
        let budget = max_nodes.saturating_sub(args.len());
        if table.min_size(hole, depth) > budget {
            return Err(Error::DepthUnsatisfiable { request: request.clone(), depth: d_max });
        }
        let (body, _) = self.sample_body(hole, depth, budget, &table, r);
        Ok(Term::lambdas(args.len(), body))
    }

    /// Hole table for the body of `request`, or `DepthUnsatisfiable` if nothing fits.
    pub fn request_table(&self, request: &Ty, d_max: usize) -> Result<HoleTable> {
        let (args, ret) = request.uncurry();
        let unsat = || Error::DepthUnsatisfiable { request: request.clone(), depth: d_max };
        let hole = ret.as_base().ok_or_else(unsat)?;
        if args.iter().any(|a| a.as_base().is_none()) || d_max <= args.len() {
            return Err(unsat());
        }
        let ctx: Vec<Ty> = args.into_iter().cloned().collect();
        let table = self.hole_table(&ctx, d_max - ctx.len());
        if table.min_depth(hole) > d_max - ctx.len() {
            return Err(unsat());
        }
        Ok(table)
    }

    /// Returns the sampled subtree and its node count.
    fn sample_body<R: Rng>(&self, hole: BaseTy, depth: usize, budget: usize, table: &HoleTable, r: &mut R) -> (Term, usize) {
        let feasible: Vec<&Candidate> = table
            .candidates(hole)
            .iter()
            .filter(|c| table.candidate_min_size(c, depth) <= budget)
            .collect();
        let total: f64 = feasible.iter().map(|c| (-c.cost).exp()).sum();
        let mut u = r.random::<f64>() * total;
        let mut pick = feasible[feasible.len() - 1];
        for c in &feasible {
            u -= (-c.cost).exp();
            if u < 0.0 {
                pick = c;
                break;
            }
        }
        match pick.choice {
            Choice::Var(i) => (Term::Var(i), 1),
            Choice::Prim(i) => {
                let head = Term::Prim(self.productions[i].prim.clone());
                let mut used = 1;
                let mut args = Vec::with_capacity(pick.args.len());
                for (k, a) in pick.args.iter().enumerate() {
                    let reserve: usize = pick.args[k + 1..].iter().map(|b| table.min_size(*b, depth - 1)).sum();
                    let (t, n) = self.sample_body(*a, depth - 1, budget - used - reserve, table, r);
                    used += n;
                    args.push(t);
                }
                (Term::app(head, args), used)
            }
        }
    }

    pub fn to_json(&self) -> String {
        let file = GrammarFile {
            version: GRAMMAR_VERSION.to_string(),
            env: self.env,
            depth_counts_binders: true,
            log_variable: self.log_variable,
            productions: self
                .productions
                .iter()
                .map(|p| ProductionFile {
                    name: p.prim.name().to_string(),
                    ty: p.prim.ty().to_string(),
                    logp: p.logp,
                    body: p.prim.body().map(print_program),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("grammar serializes")
    }

    pub fn from_json(text: &str) -> Result<Grammar> {
        let file: GrammarFile = serde_json::from_str(text)?;
        if file.version != GRAMMAR_VERSION {
            return Err(Error::Invalid(format!("unsupported grammar version {}", file.version)));
        }
        let base = PrimTable::base(file.env);
        let mut table = PrimTable::from_entries(file.env, Vec::new());
        let mut productions = Vec::with_capacity(file.productions.len());
        for p in file.productions {
            let prim = match p.body {
                Some(body) => {
                    let term = parse_program(&body, &table)?;
                    Prim::invented(p.name.clone(), Ty::parse(&p.ty)?, term)
                }
                None => base.get(&p.name).cloned().ok_or_else(|| Error::UnknownPrimitive(p.name.clone()))?,
            };
            table = table.with(prim.clone());
            productions.push(Production { prim, logp: p.logp });
        }
        Ok(Grammar { env: file.env, productions, log_variable: file.log_variable })
    }
}
