use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::herbrand::{Equation, Guard, Substitution, Term, Var};

/// A user-defined (class) constraint `C t1 .. tn`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassConstraint {
    pub class: String,
    pub args: Vec<Term>,
}

impl ClassConstraint {
    pub fn new(class: impl Into<String>, args: Vec<Term>) -> Self {
        ClassConstraint { class: class.into(), args }
    }

    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        self.args.iter().for_each(|a| a.collect_vars(out));
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn rename(&self, map: &BTreeMap<Var, Var>) -> ClassConstraint {
        ClassConstraint { class: self.class.clone(), args: self.args.iter().map(|a| a.rename(map)).collect() }
    }

    pub fn map_args(&self, f: impl Fn(&Term) -> Term) -> ClassConstraint {
        ClassConstraint { class: self.class.clone(), args: self.args.iter().map(f).collect() }
    }

    pub fn size(&self) -> usize {
        self.args.iter().map(Term::size).sum()
    }
}

/// An item of a goal or rule body: a class constraint or an equation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GoalItem {
    Class(ClassConstraint),
    Eq(Equation),
}

impl GoalItem {
    pub fn eq(left: Term, right: Term) -> GoalItem {
        GoalItem::Eq(Equation::new(left, right))
    }

    pub fn collect_vars(&self, out: &mut Vec<Var>) {
        match self {
            GoalItem::Class(c) => c.collect_vars(out),
            GoalItem::Eq(e) => {
                e.left.collect_vars(out);
                e.right.collect_vars(out);
            }
        }
    }

    pub fn map_terms(&self, f: &impl Fn(&Term) -> Term) -> GoalItem {
        match self {
            GoalItem::Class(c) => GoalItem::Class(c.map_args(f)),
            GoalItem::Eq(e) => GoalItem::Eq(Equation::new(f(&e.left), f(&e.right))),
        }
    }

    pub fn apply(&self, s: &Substitution) -> GoalItem {
        self.map_terms(&|t| s.apply(t))
    }
}

impl From<ClassConstraint> for GoalItem {
    fn from(c: ClassConstraint) -> Self {
        GoalItem::Class(c)
    }
}

impl From<Equation> for GoalItem {
    fn from(e: Equation) -> Self {
        GoalItem::Eq(e)
    }
}

/// Right-hand side of a rule.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Body {
    /// The distinguished body `False`: firing the rule makes the state unsatisfiable.
    False,
    /// A conjunction; empty means `True`.
    Items(Vec<GoalItem>),
}

impl Body {
    pub fn truth() -> Body {
        Body::Items(Vec::new())
    }

    pub fn items(&self) -> &[GoalItem] {
        match self {
            Body::False => &[],
            Body::Items(items) => items,
        }
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Body::False)
    }

    pub fn map_terms(&self, f: &impl Fn(&Term) -> Term) -> Body {
        match self {
            Body::False => Body::False,
            Body::Items(items) => Body::Items(items.iter().map(|i| i.map_terms(f)).collect()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleKind {
    /// `H <=> g | B`
    Simplification,
    /// `H ==> g | B`
    Propagation,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChrRule {
    pub name: String,
    pub kind: RuleKind,
    pub head: Vec<ClassConstraint>,
    pub guard: Vec<Guard>,
    pub body: Body,
}

impl ChrRule {
    pub fn simplification(name: impl Into<String>, head: Vec<ClassConstraint>, guard: Vec<Guard>, body: Body) -> Self {
        ChrRule { name: name.into(), kind: RuleKind::Simplification, head, guard, body }
    }

    pub fn propagation(name: impl Into<String>, head: Vec<ClassConstraint>, guard: Vec<Guard>, body: Body) -> Self {
        ChrRule { name: name.into(), kind: RuleKind::Propagation, head, guard, body }
    }

    pub fn is_propagation(&self) -> bool {
        self.kind == RuleKind::Propagation
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.head.iter().for_each(|c| c.collect_vars(&mut out));
        self.guard.iter().for_each(|g| g.collect_vars(&mut out));
        self.body.items().iter().for_each(|i| i.collect_vars(&mut out));
        out
    }

    pub fn max_stamp(&self) -> u32 {
        self.vars().iter().map(Var::stamp).max().unwrap_or(0)
    }

    /// A copy whose variables all carry fresh stamps drawn from `next_stamp`.
    pub fn rename_apart(&self, next_stamp: &mut u32) -> ChrRule {
        let map: BTreeMap<Var, Var> = self
            .vars()
            .into_iter()
            .map(|v| {
                let fresh = v.restamp(*next_stamp);
                *next_stamp += 1;
                (v, fresh)
            })
            .collect();
        self.map_terms(&|t| t.rename(&map))
    }

    pub fn map_terms(&self, f: &impl Fn(&Term) -> Term) -> ChrRule {
        ChrRule {
            name: self.name.clone(),
            kind: self.kind,
            head: self.head.iter().map(|c| c.map_args(f)).collect(),
            guard: self.guard.iter().map(|g| g.map_terms(f)).collect(),
            body: self.body.map_terms(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("duplicate rule name `{0}`")]
    DuplicateName(String),
    #[error("rule `{0}` has an empty head")]
    EmptyHead(String),
    #[error("propagation rule `{0}` has body False; write it as a simplification")]
    PropagatingFalse(String),
    #[error("class `{class}` used with {found} arguments in rule `{rule}` but elsewhere with {expected}")]
    Arity { rule: String, class: String, expected: usize, found: usize },
}

/// An immutable CHR program: rules in program order, indexed by head class.
#[derive(Clone, Debug, Default)]
pub struct Program {
    rules: Vec<ChrRule>,
    /// class name -> (rule index, head position)
    index: BTreeMap<String, Vec<(usize, usize)>>,
}

impl Program {
    pub fn new(rules: Vec<ChrRule>) -> Result<Self, ProgramError> {
        let mut names = BTreeSet::new();
        let mut arities: BTreeMap<&str, usize> = BTreeMap::new();
        for r in &rules {
            if !names.insert(r.name.as_str()) {
                return Err(ProgramError::DuplicateName(r.name.clone()));
            }
            if r.head.is_empty() {
                return Err(ProgramError::EmptyHead(r.name.clone()));
            }
            if r.is_propagation() && r.body.is_false() {
                return Err(ProgramError::PropagatingFalse(r.name.clone()));
            }
            let body_classes = r.body.items().iter().filter_map(|i| match i {
                GoalItem::Class(c) => Some(c),
                GoalItem::Eq(_) => None,
            });
            for c in r.head.iter().chain(body_classes) {
                let expected = *arities.entry(c.class.as_str()).or_insert(c.args.len());
                if expected != c.args.len() {
                    return Err(ProgramError::Arity { rule: r.name.clone(), class: c.class.clone(), expected, found: c.args.len() });
                }
            }
        }
        let mut index: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
        for (ri, r) in rules.iter().enumerate() {
            for (hi, c) in r.head.iter().enumerate() {
                index.entry(c.class.clone()).or_default().push((ri, hi));
            }
        }
        Ok(Program { rules, index })
    }

    pub fn empty() -> Self {
        Program::default()
    }

    pub fn rules(&self) -> &[ChrRule] {
        &self.rules
    }

    pub fn rule(&self, name: &str) -> Option<&ChrRule> {
        self.rules.iter().find(|r| r.name == name)
    }

    pub fn rule_index(&self, name: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.name == name)
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    /// Head occurrences of `class` as (rule index, head position).
    pub fn occurrences(&self, class: &str) -> &[(usize, usize)] {
        self.index.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The sub-program of the selected rules, in program order.
    pub fn filter(&self, keep: impl Fn(&ChrRule) -> bool) -> Program {
        Program::new(self.rules.iter().filter(|r| keep(r)).cloned().collect()).expect("sub-program of a valid program")
    }

    pub fn max_stamp(&self) -> u32 {
        self.rules.iter().map(ChrRule::max_stamp).max().unwrap_or(0)
    }

    /// Class names mentioned anywhere, with their arities.
    pub fn classes(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rules {
            for c in &r.head {
                out.insert(c.class.clone(), c.args.len());
            }
            for i in r.body.items() {
                if let GoalItem::Class(c) = i {
                    out.insert(c.class.clone(), c.args.len());
                }
            }
        }
        out
    }
}
