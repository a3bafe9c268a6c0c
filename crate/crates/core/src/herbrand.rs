//! First-order Herbrand terms, idempotent substitutions, most-general
//! unification, one-sided matching and guard entailment.
//!
//! This is the underlying constraint solver that the CHR engine extends.
//! Variables carry a freshness stamp next to their source name; renaming a
//! rule apart from a store is done by handing every rule variable a new stamp.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::chr::ClassConstraint;

/// Constructor name of the function arrow.
pub const ARROW: &str = "->";
/// Constructor name of the list type `[t]`.
pub const LIST: &str = "[]";
/// Constructor name of type-level application of a type variable (`f a`).
pub const TYAPP: &str = "@";
/// Prefix marking a rigid (skolem) constant produced from a signature variable.
pub const SKOLEM_PREFIX: char = '\'';

/// Constructor name of an n-ary tuple, `(,)` for pairs.
pub fn tuple_name(arity: usize) -> String {
    format!("({})", ",".repeat(arity.saturating_sub(1)))
}

pub fn is_tuple_name(name: &str) -> bool {
    name.len() >= 3 && name.starts_with('(') && name.ends_with(')') && name[1..name.len() - 1].chars().all(|c| c == ',')
}

/// A logic variable. Two variables are equal when both name and stamp agree.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var {
    name: Arc<str>,
    stamp: u32,
}

impl Var {
    pub fn new(name: impl AsRef<str>) -> Self {
        Var { name: Arc::from(name.as_ref()), stamp: 0 }
    }

    pub fn with_stamp(name: impl AsRef<str>, stamp: u32) -> Self {
        Var { name: Arc::from(name.as_ref()), stamp }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stamp(&self) -> u32 {
        self.stamp
    }

    /// Same source name, new stamp.
    pub fn restamp(&self, stamp: u32) -> Var {
        Var { name: self.name.clone(), stamp }
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.stamp == 0 {
            write!(f, "{}", self.name)
        } else {
            write!(f, "{}#{}", self.name, self.stamp)
        }
    }
}

/// A first-order term: a variable or a constructor applied to arguments.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Var),
    App(Arc<str>, Vec<Term>),
}

impl Term {
    pub fn var(name: impl AsRef<str>) -> Term {
        Term::Var(Var::new(name))
    }

    pub fn con(name: impl AsRef<str>) -> Term {
        Term::App(Arc::from(name.as_ref()), Vec::new())
    }

    pub fn app(name: impl AsRef<str>, args: Vec<Term>) -> Term {
        Term::App(Arc::from(name.as_ref()), args)
    }

    pub fn arrow(from: Term, to: Term) -> Term {
        Term::app(ARROW, vec![from, to])
    }

    /// `a1 -> a2 -> ... -> result`
    pub fn arrows(args: impl IntoIterator<Item = Term>, result: Term) -> Term {
        let args: Vec<Term> = args.into_iter().collect();
        args.into_iter().rev().fold(result, |acc, a| Term::arrow(a, acc))
    }

    pub fn list(elem: Term) -> Term {
        Term::app(LIST, vec![elem])
    }

    pub fn tuple(elems: Vec<Term>) -> Term {
        Term::app(tuple_name(elems.len()), elems)
    }

    /// A rigid constant standing for the signature variable `name`.
    pub fn skolem(name: &str) -> Term {
        Term::con(format!("{SKOLEM_PREFIX}{name}"))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            Term::App(..) => None,
        }
    }

    pub fn head(&self) -> Option<&str> {
        match self {
            Term::Var(_) => None,
            Term::App(name, _) => Some(name),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(_) => false,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn occurs(&self, v: &Var) -> bool {
        match self {
            Term::Var(w) => w == v,
            Term::App(_, args) => args.iter().any(|a| a.occurs(v)),
        }
    }

    /// Number of constructor nodes.
    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) => 1,
            Term::App(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
        }
    }

    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    /// Variables in first-occurrence order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn max_stamp(&self) -> u32 {
        match self {
            Term::Var(v) => v.stamp,
            Term::App(_, args) => args.iter().map(Term::max_stamp).max().unwrap_or(0),
        }
    }

    /// Apply a variable-to-variable map (used for renaming apart).
    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> Term {
        match self {
            Term::Var(v) => Term::Var(map.get(v).cloned().unwrap_or_else(|| v.clone())),
            Term::App(name, args) => Term::App(name.clone(), args.iter().map(|a| a.rename(map)).collect()),
        }
    }

    /// Visit every constructor with its arity.
    pub fn for_each_constructor(&self, f: &mut impl FnMut(&str, usize)) {
        if let Term::App(name, args) = self {
            f(name, args.len());
            args.iter().for_each(|a| a.for_each_constructor(f));
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl From<Var> for Term {
    fn from(v: Var) -> Self {
        Term::Var(v)
    }
}

/// A syntactic equation between two terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Equation {
    pub left: Term,
    pub right: Term,
}

impl Equation {
    pub fn new(left: Term, right: Term) -> Self {
        Equation { left, right }
    }
}

/// Guard atoms of a CHR rule.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Guard {
    Eq(Term, Term),
    /// Disequality, decided by a constructor-clash test.
    Neq(Term, Term),
}

impl Guard {
    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        let (Guard::Eq(a, b) | Guard::Neq(a, b)) = self;
        a.collect_vars(out);
        b.collect_vars(out);
    }

    pub fn map_terms(&self, f: impl Fn(&Term) -> Term) -> Guard {
        match self {
            Guard::Eq(a, b) => Guard::Eq(f(a), f(b)),
            Guard::Neq(a, b) => Guard::Neq(f(a), f(b)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum UnifyError {
    #[error("cannot unify `{0}` with `{1}`")]
    Clash(Term, Term),
    #[error("occurs check: `{0}` occurs in `{1}`")]
    Occurs(Var, Term),
    #[error("rigid variable `{0}` cannot be bound to `{1}`")]
    Rigid(Var, Term),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("substitution is not idempotent: `{0}` occurs in an image")]
pub struct NotIdempotent(pub Var);

/// A finite, idempotent mapping from variables to terms.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Substitution {
    map: BTreeMap<Var, Term>,
}

/// A substitution over rule (pattern) variables produced by matching.
pub type Matcher = Substitution;

impl Substitution {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from explicit bindings, rejecting anything that is not idempotent.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Var, Term)>) -> Result<Self, NotIdempotent> {
        let mut map = BTreeMap::new();
        for (v, t) in pairs {
            if t != Term::Var(v.clone()) {
                map.insert(v, t);
            }
        }
        for t in map.values() {
            let mut vs = Vec::new();
            t.collect_vars(&mut vs);
            if let Some(v) = vs.into_iter().find(|v| map.contains_key(v)) {
                return Err(NotIdempotent(v));
            }
        }
        Ok(Substitution { map })
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn get(&self, v: &Var) -> Option<&Term> {
        self.map.get(v)
    }

    pub fn contains(&self, v: &Var) -> bool {
        self.map.contains_key(v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.map.iter()
    }

    pub fn domain(&self) -> impl Iterator<Item = &Var> {
        self.map.keys()
    }

    pub fn apply(&self, t: &Term) -> Term {
        if self.map.is_empty() {
            return t.clone();
        }
        match t {
            Term::Var(v) => self.map.get(v).cloned().unwrap_or_else(|| t.clone()),
            Term::App(name, args) => Term::App(name.clone(), args.iter().map(|a| self.apply(a)).collect()),
        }
    }

    pub fn apply_var(&self, v: &Var) -> Term {
        self.map.get(v).cloned().unwrap_or_else(|| Term::Var(v.clone()))
    }

    pub fn apply_constraint(&self, c: &ClassConstraint) -> ClassConstraint {
        ClassConstraint { class: c.class.clone(), args: c.args.iter().map(|a| self.apply(a)).collect() }
    }

    /// Keep only the bindings of the given variables.
    pub fn restrict<'a>(&self, vars: impl IntoIterator<Item = &'a Var>) -> Substitution {
        let mut map = BTreeMap::new();
        for v in vars {
            if let Some(t) = self.map.get(v) {
                map.insert(v.clone(), t.clone());
            }
        }
        Substitution { map }
    }

    /// Add `v := t` where `t` is already normalised under `self`.
    fn bind(&mut self, v: Var, t: Term) -> Result<(), UnifyError> {
        if t.occurs(&v) {
            return Err(UnifyError::Occurs(v, t));
        }
        let single = Substitution { map: BTreeMap::from([(v.clone(), t.clone())]) };
        for image in self.map.values_mut() {
            if image.occurs(&v) {
                *image = single.apply(image);
            }
        }
        self.map.insert(v, t);
        Ok(())
    }

    /// Unify `a` and `b` into `self`, only ever binding variables accepted by `can_bind`.
    pub fn unify_with(&mut self, a: &Term, b: &Term, can_bind: &dyn Fn(&Var) -> bool) -> Result<(), UnifyError> {
        let a = self.apply(a);
        let b = self.apply(b);
        self.unify_normalised(&a, &b, can_bind)
    }

    fn unify_normalised(&mut self, a: &Term, b: &Term, can_bind: &dyn Fn(&Var) -> bool) -> Result<(), UnifyError> {
        match (a, b) {
            (Term::Var(x), Term::Var(y)) if x == y => Ok(()),
            (Term::Var(x), t) if can_bind(x) => self.bind(x.clone(), t.clone()),
            (t, Term::Var(y)) if can_bind(y) => self.bind(y.clone(), t.clone()),
            (Term::Var(x), t) | (t, Term::Var(x)) => Err(UnifyError::Rigid(x.clone(), t.clone())),
            (Term::App(f, xs), Term::App(g, ys)) => {
                if f != g || xs.len() != ys.len() {
                    return Err(UnifyError::Clash(a.clone(), b.clone()));
                }
                for (x, y) in xs.iter().zip(ys) {
                    // earlier arguments may have bound variables of later ones
                    let x = self.apply(x);
                    let y = self.apply(y);
                    self.unify_normalised(&x, &y, can_bind)?;
                }
                Ok(())
            }
        }
    }

    pub fn unify_terms(&mut self, a: &Term, b: &Term) -> Result<(), UnifyError> {
        self.unify_with(a, b, &|_| true)
    }

    /// Variables occurring anywhere in the substitution (domain and images).
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = Vec::new();
        for (v, t) in &self.map {
            out.push(v.clone());
            t.collect_vars(&mut out);
        }
        out.into_iter().collect()
    }

    /// `self` followed by `other`: the result maps x to other(self(x)).
    pub fn then(&self, other: &Substitution) -> Substitution {
        let mut map: BTreeMap<Var, Term> = self.map.iter().map(|(v, t)| (v.clone(), other.apply(t))).collect();
        for (v, t) in &other.map {
            map.entry(v.clone()).or_insert_with(|| t.clone());
        }
        map.retain(|v, t| *t != Term::Var(v.clone()));
        Substitution { map }
    }
}

impl fmt::Debug for Substitution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (v, t)) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v} := {t}")?;
        }
        write!(f, "}}")
    }
}

/// Most general unifier of `eqs` extending `base`.
pub fn unify(eqs: &[Equation], base: &Substitution) -> Result<Substitution, UnifyError> {
    let mut s = base.clone();
    for eq in eqs {
        s.unify_terms(&eq.left, &eq.right)?;
    }
    Ok(s)
}

/// Whether `a` and `b` have any common instance.
pub fn unifiable(a: &Term, b: &Term) -> bool {
    Substitution::new().unify_terms(a, b).is_ok()
}

/// One-sided matching of `pattern` against `target`, extending `theta`.
/// Only pattern variables get bound; `target` is taken literally.
pub fn match_term(pattern: &Term, target: &Term, theta: &mut Matcher) -> bool {
    match pattern {
        Term::Var(p) => match theta.map.get(p) {
            Some(bound) => bound == target,
            None => {
                theta.map.insert(p.clone(), target.clone());
                true
            }
        },
        Term::App(f, ps) => match target {
            Term::App(g, ts) if f == g && ps.len() == ts.len() => ps.iter().zip(ts).all(|(p, t)| match_term(p, t, theta)),
            _ => false,
        },
    }
}

/// Match a rule head constraint against a store constraint under `h`.
pub fn match_head(pattern: &ClassConstraint, candidate: &ClassConstraint, h: &Substitution) -> Option<Matcher> {
    match_head_with(pattern, candidate, h, &Matcher::new())
}

/// As [`match_head`], extending an existing matcher (multi-headed rules).
pub fn match_head_with(pattern: &ClassConstraint, candidate: &ClassConstraint, h: &Substitution, theta: &Matcher) -> Option<Matcher> {
    if pattern.class != candidate.class || pattern.args.len() != candidate.args.len() {
        return None;
    }
    let mut theta = theta.clone();
    for (p, c) in pattern.args.iter().zip(&candidate.args) {
        if !match_term(p, &h.apply(c), &mut theta) {
            return None;
        }
    }
    Some(theta)
}

/// Three-valued outcome of a guard check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entailment {
    Entailed,
    /// The guard can never hold, whatever the store learns later.
    Refuted,
    /// Neither provable nor refutable with the current store.
    Unknown,
}

/// Disequalities the built-in store assumes (critical-pair states carry the
/// guards of the overlapping rules this way).
pub type Disequalities = [(Term, Term)];

/// Decide `h -> exists locals. theta(g)`; locals are guard variables outside `theta`.
pub fn guard_status(guards: &[Guard], theta: &Matcher, h: &Substitution, assumed: &Disequalities) -> Entailment {
    if guards.is_empty() {
        return Entailment::Entailed;
    }
    let mut locals = Vec::new();
    for g in guards {
        g.collect_vars(&mut locals);
    }
    locals.retain(|v| !theta.contains(v));
    let is_local = |v: &Var| locals.contains(v);

    let inst = |t: &Term| h.apply(&theta.apply(t));
    let mut local_bindings = Substitution::new();
    let mut result = Entailment::Entailed;
    for g in guards {
        match g {
            Guard::Eq(a, b) => {
                let (a, b) = (local_bindings.apply(&inst(a)), local_bindings.apply(&inst(b)));
                let mut trial = local_bindings.clone();
                if trial.unify_with(&a, &b, &is_local).is_ok() {
                    local_bindings = trial;
                } else if unifiable(&a, &b) {
                    result = Entailment::Unknown;
                } else {
                    return Entailment::Refuted;
                }
            }
            Guard::Neq(a, b) => {
                let (a, b) = (local_bindings.apply(&inst(a)), local_bindings.apply(&inst(b)));
                if a == b {
                    return Entailment::Refuted;
                }
                if !unifiable(&a, &b) {
                    continue;
                }
                let assumed_here = assumed.iter().any(|(x, y)| {
                    let (x, y) = (h.apply(x), h.apply(y));
                    (x == a && y == b) || (x == b && y == a)
                });
                if !assumed_here {
                    result = Entailment::Unknown;
                }
            }
        }
    }
    result
}

/// Whether `h` entails the guard under `theta`. Never modifies `h`.
pub fn guard_entailed(guards: &[Guard], theta: &Matcher, h: &Substitution) -> bool {
    guard_status(guards, theta, h, &[]) == Entailment::Entailed
}
