use super::prims::Prim;

/// A program in the DSL. Variables are de Bruijn indices (0 = innermost binder).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Prim(Prim),
    Var(usize),
    Lambda(Box<Term>),
    Apply(Box<Term>, Box<Term>),
}

impl Term {
    pub fn lambda(body: Term) -> Term {
        Term::Lambda(Box::new(body))
    }

    /// Wraps `body` in `n` binders.
    pub fn lambdas(n: usize, body: Term) -> Term {
        (0..n).fold(body, |t, _| Term::lambda(t))
    }

    pub fn apply(f: Term, x: Term) -> Term {
        Term::Apply(Box::new(f), Box::new(x))
    }

    /// Curried application of `head` to `args`.
    pub fn app(head: Term, args: impl IntoIterator<Item = Term>) -> Term {
        args.into_iter().fold(head, Term::apply)
    }

    /// Decomposes an application spine into its head and arguments (left to right).
    pub fn spine(&self) -> (&Term, Vec<&Term>) {
        let mut args = Vec::new();
        let mut t = self;
        while let Term::Apply(f, x) = t {
            args.push(x.as_ref());
            t = f;
        }
        args.reverse();
        (t, args)
    }

    /// Peels leading binders, returning their count and the body.
    pub fn strip_lambdas(&self) -> (usize, &Term) {
        let mut n = 0;
        let mut t = self;
        while let Term::Lambda(b) = t {
            n += 1;
            t = b;
        }
        (n, t)
    }

    /// AST depth counted in nodes, with an application spine treated as one node whose
    /// children are its arguments. Binders count as nodes.
    pub fn depth(&self) -> usize {
        match self {
            Term::Prim(_) | Term::Var(_) => 1,
            Term::Lambda(b) => 1 + b.depth(),
            Term::Apply(..) => {
                let (head, args) = self.spine();
                let below = args.iter().map(|a| a.depth()).max().unwrap_or(0);
                let head_depth = match head {
                    Term::Lambda(_) => head.depth(),
                    _ => 1,
                };
                head_depth.max(1 + below)
            }
        }
    }

    /// Number of leaves and binders, i.e. nodes in the n-ary view.
    pub fn size(&self) -> usize {
        match self {
            Term::Prim(_) | Term::Var(_) => 1,
            Term::Lambda(b) => 1 + b.size(),
            Term::Apply(f, x) => f.size() + x.size(),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed_under(0)
    }

    fn closed_under(&self, depth: usize) -> bool {
        match self {
            Term::Prim(_) => true,
            Term::Var(i) => *i < depth,
            Term::Lambda(b) => b.closed_under(depth + 1),
            Term::Apply(f, x) => f.closed_under(depth) && x.closed_under(depth),
        }
    }

    /// Whether any variable of this term refers outside of it.
    pub fn has_free_vars(&self) -> bool {
        !self.is_closed()
    }

    /// Shifts free variables (index ≥ `cutoff`) by `by`.
    pub fn shift(&self, by: isize, cutoff: usize) -> Term {
        match self {
            Term::Prim(_) => self.clone(),
            Term::Var(i) => {
                if *i >= cutoff {
                    Term::Var((*i as isize + by) as usize)
                } else {
                    self.clone()
                }
            }
            Term::Lambda(b) => Term::lambda(b.shift(by, cutoff + 1)),
            Term::Apply(f, x) => Term::apply(f.shift(by, cutoff), x.shift(by, cutoff)),
        }
    }

    /// Capture-avoiding substitution of `value` for variable `index`, removing that binder.
    pub fn substitute(&self, index: usize, value: &Term) -> Term {
        match self {
            Term::Prim(_) => self.clone(),
            Term::Var(i) => match (*i).cmp(&index) {
                std::cmp::Ordering::Equal => value.shift(index as isize, 0),
                std::cmp::Ordering::Greater => Term::Var(i - 1),
                std::cmp::Ordering::Less => self.clone(),
            },
            Term::Lambda(b) => Term::lambda(b.substitute(index + 1, value)),
            Term::Apply(f, x) => Term::apply(f.substitute(index, value), x.substitute(index, value)),
        }
    }

    /// Normal-order β-reduction to normal form. Terminates on the simply-typed fragment.
    pub fn beta_normal(&self) -> Term {
        match self {
            Term::Prim(_) | Term::Var(_) => self.clone(),
            Term::Lambda(b) => Term::lambda(b.beta_normal()),
            Term::Apply(f, x) => {
                let f = f.beta_normal();
                match f {
                    Term::Lambda(body) => body.substitute(0, x).beta_normal(),
                    f => Term::apply(f, x.beta_normal()),
                }
            }
        }
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Term)) {
        f(self);
        match self {
            Term::Lambda(b) => b.walk(f),
            Term::Apply(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    /// Names of all primitives referenced, in pre-order, with repetition.
    pub fn prim_refs(&self) -> Vec<&Prim> {
        let mut out = Vec::new();
        self.walk(&mut |t| {
            if let Term::Prim(p) = t {
                out.push(p);
            }
        });
        out
    }

    pub fn uses_invented(&self) -> bool {
        self.prim_refs().iter().any(|p| p.is_invented())
    }
}
