use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::herbrand::{Substitution, Term, Var};

use super::rule::{ClassConstraint, GoalItem, Program};

pub type EntryId = u64;

/// A constraint in the store together with its identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoreEntry {
    pub id: EntryId,
    pub constraint: ClassConstraint,
}

/// A pending propagation: rule plus the store entries filling its head, in head order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token {
    /// Position of the rule in its program; orders tokens in program order.
    pub rule_index: usize,
    pub rule: String,
    pub ids: Vec<EntryId>,
}

/// The state `<goal, store, herbrand, tokens>` with protected variables `v`.
///
/// Syntactically equal constraints may sit in the store under distinct ids;
/// each keeps its own tokens.
#[derive(Clone, Debug)]
pub struct ChrState {
    pub(crate) goal: VecDeque<GoalItem>,
    pub(crate) store: BTreeMap<EntryId, ClassConstraint>,
    pub(crate) herbrand: Substitution,
    pub(crate) tokens: BTreeSet<Token>,
    pub(crate) protected: BTreeSet<Var>,
    /// Disequalities assumed by the built-in store.
    pub(crate) disequalities: Vec<(Term, Term)>,
    pub(crate) next_id: EntryId,
    pub(crate) next_stamp: u32,
}

impl ChrState {
    pub fn new(goal: Vec<GoalItem>, protected: BTreeSet<Var>) -> Self {
        let mut stamp = protected.iter().map(Var::stamp).max().unwrap_or(0);
        let mut vars = Vec::new();
        goal.iter().for_each(|g| g.collect_vars(&mut vars));
        stamp = stamp.max(vars.iter().map(Var::stamp).max().unwrap_or(0));
        ChrState {
            goal: goal.into(),
            store: BTreeMap::new(),
            herbrand: Substitution::new(),
            tokens: BTreeSet::new(),
            protected,
            disequalities: Vec::new(),
            next_id: 0,
            next_stamp: stamp + 1,
        }
    }

    /// Start from a non-trivial Herbrand store.
    pub fn with_herbrand(mut self, h: Substitution) -> Self {
        let max = h.vars().iter().map(Var::stamp).max().unwrap_or(0);
        self.next_stamp = self.next_stamp.max(max + 1);
        self.herbrand = h;
        self
    }

    pub fn with_disequalities(mut self, diseqs: Vec<(Term, Term)>) -> Self {
        for (a, b) in &diseqs {
            self.next_stamp = self.next_stamp.max(a.max_stamp().max(b.max_stamp()) + 1);
        }
        self.disequalities = diseqs;
        self
    }

    /// Make sure fresh stamps stay clear of the program's own variables.
    pub(crate) fn reserve_stamps(&mut self, program: &Program) {
        self.next_stamp = self.next_stamp.max(program.max_stamp() + 1);
    }

    pub fn goal(&self) -> impl Iterator<Item = &GoalItem> {
        self.goal.iter()
    }

    pub fn store(&self) -> impl Iterator<Item = StoreEntry> + '_ {
        self.store.iter().map(|(id, c)| StoreEntry { id: *id, constraint: c.clone() })
    }

    /// Store constraints with the Herbrand store applied, in id order.
    pub fn normalised_store(&self) -> Vec<ClassConstraint> {
        self.store.values().map(|c| self.herbrand.apply_constraint(c)).collect()
    }

    pub fn herbrand(&self) -> &Substitution {
        &self.herbrand
    }

    pub fn tokens(&self) -> &BTreeSet<Token> {
        &self.tokens
    }

    pub fn protected(&self) -> &BTreeSet<Var> {
        &self.protected
    }

    pub fn disequalities(&self) -> &[(Term, Term)] {
        &self.disequalities
    }

    pub fn is_goal_empty(&self) -> bool {
        self.goal.is_empty()
    }
}
