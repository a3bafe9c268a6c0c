use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::herbrand::{guard_status, match_head_with, Entailment, Equation, Guard, Matcher, Substitution, Term, UnifyError, Var};
use crate::pretty;

use super::canon::{canonicalize, CanonicalForm};
use super::rule::{Body, ChrRule, ClassConstraint, GoalItem, Program, RuleKind};
use super::state::{ChrState, EntryId, StoreEntry, Token};

/// Default step budget for a derivation.
pub const DEFAULT_FUEL: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transition {
    Solve,
    Introduce,
    Simplify,
    Propagate,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transition::Solve => "solve",
            Transition::Introduce => "introduce",
            Transition::Simplify => "simplify",
            Transition::Propagate => "propagate",
        })
    }
}

/// One line of a derivation trace: the transition taken and the state it produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub index: usize,
    pub transition: Transition,
    pub rule: Option<String>,
    pub goal: String,
    pub store: String,
    pub herbrand: String,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {}: {} {} | goal: {} | store: {} | h: {}",
            self.index,
            self.transition,
            self.rule.as_deref().unwrap_or("-"),
            self.goal,
            self.store,
            self.herbrand
        )
    }
}

/// Render a trace in the line-oriented export format.
pub fn render_trace(trace: &[TraceStep]) -> String {
    trace.iter().map(|s| format!("{s}\n")).collect()
}

/// Why a derivation failed.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum UnsatReason {
    #[error("equation `{} = {}` is unsolvable: {error}", equation.left, equation.right)]
    Clash { equation: Equation, error: UnifyError },
    #[error("rule `{rule}` derived False")]
    FalseBody { rule: String },
    #[error("assumed disequality `{0} /= {1}` violated")]
    Disequality(Term, Term),
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DeriveError {
    #[error("unsatisfiable: {reason}")]
    Unsatisfiable { reason: UnsatReason, trace: Vec<TraceStep> },
    #[error("no final state within {fuel} steps")]
    FuelExceeded { fuel: usize, trace: Vec<TraceStep> },
}

impl DeriveError {
    pub fn trace(&self) -> &[TraceStep] {
        match self {
            DeriveError::Unsatisfiable { trace, .. } | DeriveError::FuelExceeded { trace, .. } => trace,
        }
    }
}

/// How the next transition is chosen.
///
/// `Leftmost` takes the leftmost goal item; with an empty goal it tries
/// simplification rules, then propagation tokens, each in program order and
/// lowest store ids first. `Random` picks uniformly among every enabled
/// transition and exists for order-independence testing.
#[derive(Clone, Debug)]
pub enum SelectionPolicy {
    Leftmost,
    Random(StdRng),
}

impl SelectionPolicy {
    pub fn seeded(seed: u64) -> Self {
        SelectionPolicy::Random(StdRng::seed_from_u64(seed))
    }
}

/// A successful derivation.
#[derive(Clone, Debug)]
pub struct FinalState {
    state: ChrState,
    trace: Vec<TraceStep>,
    notes: Vec<String>,
}

impl FinalState {
    pub fn state(&self) -> &ChrState {
        &self.state
    }

    /// Store constraints normalised by the Herbrand store, duplicates removed, in id order.
    pub fn constraints(&self) -> Vec<ClassConstraint> {
        let mut out: Vec<ClassConstraint> = Vec::new();
        for c in self.state.normalised_store() {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    pub fn herbrand(&self) -> &Substitution {
        &self.state.herbrand
    }

    /// The Herbrand store restricted to the protected variables.
    pub fn residual(&self) -> Substitution {
        self.state.herbrand.restrict(self.state.protected.iter())
    }

    pub fn protected(&self) -> &BTreeSet<Var> {
        &self.state.protected
    }

    pub fn trace(&self) -> &[TraceStep] {
        &self.trace
    }

    /// Diagnostics gathered along the way (undecided disequality guards).
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn steps(&self) -> usize {
        self.trace.len()
    }

    pub fn canonical(&self) -> CanonicalForm {
        canonicalize(&self.state.normalised_store(), &self.state.herbrand, &self.state.protected)
    }
}

/// Runs derivations of one program.
#[derive(Clone, Debug)]
pub struct Engine<'p> {
    program: &'p Program,
    fuel: usize,
    record_trace: bool,
}

impl<'p> Engine<'p> {
    pub fn new(program: &'p Program) -> Self {
        Engine { program, fuel: DEFAULT_FUEL, record_trace: true }
    }

    pub fn fuel(mut self, fuel: usize) -> Self {
        self.fuel = fuel;
        self
    }

    pub fn record_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn program(&self) -> &Program {
        self.program
    }

    pub fn run(&self, state: ChrState) -> Result<FinalState, DeriveError> {
        self.run_with(state, &mut SelectionPolicy::Leftmost)
    }

    pub fn run_with(&self, mut state: ChrState, policy: &mut SelectionPolicy) -> Result<FinalState, DeriveError> {
        state.reserve_stamps(self.program);
        let mut trace = Vec::new();
        let mut notes = BTreeSet::new();
        for index in 1..=self.fuel {
            match fire(&mut state, self.program, policy, &mut notes) {
                Fired::Step(transition, rule) => {
                    if self.record_trace {
                        trace.push(snapshot(&state, index, transition, rule));
                    }
                }
                Fired::Final => return Ok(FinalState { state, trace, notes: notes.into_iter().collect() }),
                Fired::Unsat(reason) => return Err(DeriveError::Unsatisfiable { reason, trace }),
            }
        }
        // the budget may run out exactly on the last productive step
        match fire(&mut state, self.program, policy, &mut notes) {
            Fired::Final => Ok(FinalState { state, trace, notes: notes.into_iter().collect() }),
            _ => Err(DeriveError::FuelExceeded { fuel: self.fuel, trace }),
        }
    }
}

/// Derive `goal` to a final state under the default selection policy.
pub fn derive(goal: Vec<GoalItem>, program: &Program, protected: BTreeSet<Var>, fuel: usize) -> Result<FinalState, DeriveError> {
    Engine::new(program).fuel(fuel).run(ChrState::new(goal, protected))
}

/// Result of a single transition.
#[derive(Clone, Debug)]
pub enum Step {
    Next { state: ChrState, transition: Transition, rule: Option<String> },
    Final,
    Unsatisfiable(UnsatReason),
}

/// Apply exactly one transition under the default selection policy.
pub fn step(state: &ChrState, program: &Program) -> Step {
    let mut next = state.clone();
    next.reserve_stamps(program);
    match fire(&mut next, program, &mut SelectionPolicy::Leftmost, &mut BTreeSet::new()) {
        Fired::Step(transition, rule) => Step::Next { state: next, transition, rule },
        Fired::Final => Step::Final,
        Fired::Unsat(reason) => Step::Unsatisfiable(reason),
    }
}

/// Tokens created by moving `entry` into the store of `state`.
///
/// A token is created for every propagation rule and every assignment of
/// store entries (including `entry`) to the rule's head positions whose
/// constraints unify with the head under the Herbrand store. Firing later
/// still requires a match.
pub fn tokens_for(entry: &StoreEntry, state: &ChrState, program: &Program) -> BTreeSet<Token> {
    let mut stamp = state.next_stamp.max(program.max_stamp() + 1);
    let mut out = BTreeSet::new();
    for &(ri, pos) in program.occurrences(&entry.constraint.class) {
        let template = &program.rules()[ri];
        if template.kind != RuleKind::Propagation {
            continue;
        }
        let rule = template.rename_apart(&mut stamp);
        let mut slots: Vec<Option<EntryId>> = vec![None; rule.head.len()];
        slots[pos] = Some(entry.id);
        let mut unifier = state.herbrand.clone();
        if unify_constraints(&mut unifier, &rule.head[pos], &entry.constraint) {
            collect_tokens(ri, &rule, 0, &mut slots, &unifier, entry, state, &mut out);
        }
    }
    out
}

fn unify_constraints(s: &mut Substitution, a: &ClassConstraint, b: &ClassConstraint) -> bool {
    a.class == b.class && a.args.len() == b.args.len() && a.args.iter().zip(&b.args).all(|(x, y)| s.unify_terms(x, y).is_ok())
}

#[allow(clippy::too_many_arguments)]
fn collect_tokens(
    ri: usize,
    rule: &ChrRule,
    pos: usize,
    slots: &mut Vec<Option<EntryId>>,
    unifier: &Substitution,
    entry: &StoreEntry,
    state: &ChrState,
    out: &mut BTreeSet<Token>,
) {
    if pos == rule.head.len() {
        let ids = slots.iter().map(|s| s.expect("all slots filled")).collect();
        out.insert(Token { rule_index: ri, rule: rule.name.clone(), ids });
        return;
    }
    if slots[pos].is_some() {
        collect_tokens(ri, rule, pos + 1, slots, unifier, entry, state, out);
        return;
    }
    for (id, c) in &state.store {
        if *id == entry.id || slots.contains(&Some(*id)) || c.class != rule.head[pos].class {
            continue;
        }
        let mut u = unifier.clone();
        if unify_constraints(&mut u, &rule.head[pos], c) {
            slots[pos] = Some(*id);
            collect_tokens(ri, rule, pos + 1, slots, &u, entry, state, out);
            slots[pos] = None;
        }
    }
}

enum Fired {
    Step(Transition, Option<String>),
    Final,
    Unsat(UnsatReason),
}

enum Choice {
    Goal(usize),
    Simplify { rule: ChrRule, ids: Vec<EntryId>, theta: Matcher },
    Propagate { token: Token, rule: ChrRule, theta: Matcher },
}

fn fire(state: &mut ChrState, program: &Program, policy: &mut SelectionPolicy, notes: &mut BTreeSet<String>) -> Fired {
    let choice = match policy {
        SelectionPolicy::Leftmost => {
            if !state.goal.is_empty() {
                Some(Choice::Goal(0))
            } else {
                first_simplification(state, program, notes).or_else(|| first_propagation(state, program, notes))
            }
        }
        SelectionPolicy::Random(rng) => {
            let mut choices: Vec<Choice> = (0..state.goal.len()).map(Choice::Goal).collect();
            choices.extend(all_simplifications(state, program, notes));
            choices.extend(all_propagations(state, program, notes));
            if choices.is_empty() {
                None
            } else {
                let k = rng.gen_range(0..choices.len());
                Some(choices.swap_remove(k))
            }
        }
    };
    let Some(choice) = choice else { return Fired::Final };
    match choice {
        Choice::Goal(i) => {
            let item = state.goal.remove(i).expect("goal index in range");
            match item {
                GoalItem::Eq(eq) => match state.herbrand.unify_terms(&eq.left, &eq.right) {
                    Ok(()) => {
                        if let Some((a, b)) = violated_disequality(state) {
                            return Fired::Unsat(UnsatReason::Disequality(a, b));
                        }
                        Fired::Step(Transition::Solve, None)
                    }
                    Err(error) => Fired::Unsat(UnsatReason::Clash { equation: eq, error }),
                },
                GoalItem::Class(c) => {
                    let entry = StoreEntry { id: state.next_id, constraint: c };
                    state.next_id += 1;
                    let tokens = tokens_for(&entry, state, program);
                    state.store.insert(entry.id, entry.constraint);
                    state.tokens.extend(tokens);
                    Fired::Step(Transition::Introduce, None)
                }
            }
        }
        Choice::Simplify { rule, ids, theta } => {
            for id in &ids {
                state.store.remove(id);
            }
            state.tokens.retain(|t| !t.ids.iter().any(|i| ids.contains(i)));
            match push_body(state, &rule, &theta) {
                Some(()) => Fired::Step(Transition::Simplify, Some(rule.name)),
                None => Fired::Unsat(UnsatReason::FalseBody { rule: rule.name }),
            }
        }
        Choice::Propagate { token, rule, theta } => {
            state.tokens.remove(&token);
            match push_body(state, &rule, &theta) {
                Some(()) => Fired::Step(Transition::Propagate, Some(rule.name)),
                None => Fired::Unsat(UnsatReason::FalseBody { rule: rule.name }),
            }
        }
    }
}

/// Prepend the instantiated body to the goal; `None` for the body `False`.
fn push_body(state: &mut ChrState, rule: &ChrRule, theta: &Matcher) -> Option<()> {
    match &rule.body {
        Body::False => None,
        Body::Items(items) => {
            let inst: Vec<GoalItem> = items.iter().map(|i| i.apply(theta)).collect();
            let mut goal: VecDeque<GoalItem> = inst.into();
            goal.append(&mut state.goal);
            state.goal = goal;
            Some(())
        }
    }
}

fn violated_disequality(state: &ChrState) -> Option<(Term, Term)> {
    state.disequalities.iter().find(|(a, b)| state.herbrand.apply(a) == state.herbrand.apply(b)).cloned()
}

fn note_unknown(rule: &ChrRule, status: Entailment, notes: &mut BTreeSet<String>) {
    if status == Entailment::Unknown && rule.guard.iter().any(|g| matches!(g, Guard::Neq(..))) {
        notes.insert(format!("disequality guard of rule `{}` is undecided; rule not applied", rule.name));
    }
}

/// All ways to fill `rule`'s head with distinct store entries so that the
/// head matches and the guard is entailed, lowest ids first.
fn head_matches(rule: &ChrRule, state: &ChrState, first_only: bool, notes: &mut BTreeSet<String>) -> Vec<(Vec<EntryId>, Matcher)> {
    let mut out = Vec::new();
    let mut chosen = Vec::new();
    extend_match(rule, 0, state, &mut chosen, &Matcher::new(), first_only, &mut out, notes);
    out
}

#[allow(clippy::too_many_arguments)]
fn extend_match(
    rule: &ChrRule,
    pos: usize,
    state: &ChrState,
    chosen: &mut Vec<EntryId>,
    theta: &Matcher,
    first_only: bool,
    out: &mut Vec<(Vec<EntryId>, Matcher)>,
    notes: &mut BTreeSet<String>,
) {
    if pos == rule.head.len() {
        let status = guard_status(&rule.guard, theta, &state.herbrand, &state.disequalities);
        if status == Entailment::Entailed {
            out.push((chosen.clone(), theta.clone()));
        } else {
            note_unknown(rule, status, notes);
        }
        return;
    }
    for (id, c) in &state.store {
        if chosen.contains(id) || c.class != rule.head[pos].class {
            continue;
        }
        if let Some(next) = match_head_with(&rule.head[pos], c, &state.herbrand, theta) {
            chosen.push(*id);
            extend_match(rule, pos + 1, state, chosen, &next, first_only, out, notes);
            chosen.pop();
            if first_only && !out.is_empty() {
                return;
            }
        }
    }
}

fn first_simplification(state: &mut ChrState, program: &Program, notes: &mut BTreeSet<String>) -> Option<Choice> {
    for template in program.rules() {
        if template.kind != RuleKind::Simplification {
            continue;
        }
        let rule = template.rename_apart(&mut state.next_stamp);
        if let Some((ids, theta)) = head_matches(&rule, state, true, notes).into_iter().next() {
            return Some(Choice::Simplify { rule, ids, theta });
        }
    }
    None
}

fn all_simplifications(state: &mut ChrState, program: &Program, notes: &mut BTreeSet<String>) -> Vec<Choice> {
    let mut out = Vec::new();
    for template in program.rules() {
        if template.kind != RuleKind::Simplification {
            continue;
        }
        let rule = template.rename_apart(&mut state.next_stamp);
        for (ids, theta) in head_matches(&rule, state, false, notes) {
            out.push(Choice::Simplify { rule: rule.clone(), ids, theta });
        }
    }
    out
}

/// Match a token's entries against its rule, in head order.
fn token_match(token: &Token, rule: &ChrRule, state: &ChrState, notes: &mut BTreeSet<String>) -> Option<Matcher> {
    let mut theta = Matcher::new();
    for (pattern, id) in rule.head.iter().zip(&token.ids) {
        let c = state.store.get(id)?;
        theta = match_head_with(pattern, c, &state.herbrand, &theta)?;
    }
    let status = guard_status(&rule.guard, &theta, &state.herbrand, &state.disequalities);
    if status == Entailment::Entailed {
        Some(theta)
    } else {
        note_unknown(rule, status, notes);
        None
    }
}

fn first_propagation(state: &mut ChrState, program: &Program, notes: &mut BTreeSet<String>) -> Option<Choice> {
    let tokens: Vec<Token> = state.tokens.iter().cloned().collect();
    for token in tokens {
        let rule = program.rules()[token.rule_index].rename_apart(&mut state.next_stamp);
        if let Some(theta) = token_match(&token, &rule, state, notes) {
            return Some(Choice::Propagate { token, rule, theta });
        }
    }
    None
}

fn all_propagations(state: &mut ChrState, program: &Program, notes: &mut BTreeSet<String>) -> Vec<Choice> {
    let tokens: Vec<Token> = state.tokens.iter().cloned().collect();
    let mut out = Vec::new();
    for token in tokens {
        let rule = program.rules()[token.rule_index].rename_apart(&mut state.next_stamp);
        if let Some(theta) = token_match(&token, &rule, state, notes) {
            out.push(Choice::Propagate { token, rule, theta });
        }
    }
    out
}

fn snapshot(state: &ChrState, index: usize, transition: Transition, rule: Option<String>) -> TraceStep {
    let goal: Vec<GoalItem> = state.goal.iter().map(|g| g.apply(&state.herbrand)).collect();
    TraceStep {
        index,
        transition,
        rule,
        goal: pretty::conjunction(&goal),
        store: pretty::conjunction(&state.normalised_store()),
        herbrand: pretty::substitution(&state.herbrand),
    }
}
