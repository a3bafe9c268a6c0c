//! Critical pairs, joinability, the confluence verdict and the syntactic
//! termination precheck.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::chr::{canonicalize, Body, CanonicalForm, ChrRule, ChrState, ClassConstraint, DeriveError, Engine, GoalItem, Program, TraceStep};
use crate::herbrand::{Guard, Substitution, Term, Var};
use crate::pretty;
use crate::syntax::SurfaceProgram;

/// Two rules applied to a shared store, and the two states that result.
#[derive(Clone, Debug)]
pub struct CriticalPair {
    pub first: String,
    pub second: String,
    /// The overlapping head constraints, instantiated by the unifier.
    pub overlap: Vec<ClassConstraint>,
    /// The combined head store both rules were applied to.
    pub heads: Vec<ClassConstraint>,
    /// Unifier of the overlapping heads and equation guards.
    pub unifier: Substitution,
    pub protected: BTreeSet<Var>,
    pub disequalities: Vec<(Term, Term)>,
    /// Goal after the first rule fired; `None` when its body is `False`.
    pub after_first: Option<Vec<GoalItem>>,
    /// Goal after the second rule fired.
    pub after_second: Option<Vec<GoalItem>>,
}

impl CriticalPair {
    fn state(&self, goal: &Option<Vec<GoalItem>>) -> Option<ChrState> {
        goal.as_ref()
            .map(|g| ChrState::new(g.clone(), self.protected.clone()).with_disequalities(self.disequalities.clone()))
    }

    /// Successor state of the first rule (`None` for a `False` body).
    pub fn first_state(&self) -> Option<ChrState> {
        self.state(&self.after_first)
    }

    pub fn second_state(&self) -> Option<ChrState> {
        self.state(&self.after_second)
    }
}

impl fmt::Display for CriticalPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |g: &Option<Vec<GoalItem>>| g.as_ref().map_or("False".to_string(), |g| pretty::conjunction(g));
        write!(
            f,
            "{} / {} on {} (store {}): {} vs {}",
            self.first,
            self.second,
            pretty::conjunction(&self.overlap),
            pretty::conjunction(&self.heads),
            show(&self.after_first),
            show(&self.after_second)
        )
    }
}

/// Where one side of a critical pair ends up.
#[derive(Clone, Debug)]
pub struct PairOutcome {
    pub canonical: CanonicalForm,
    pub trace: Vec<TraceStep>,
    /// Set when the side derived `False` or failed to unify.
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub enum Joinability {
    Joinable,
    NotJoinable { first: PairOutcome, second: PairOutcome },
    /// A side exhausted its fuel.
    Inconclusive { fuel: usize },
}

/// A critical pair that is not joinable, with both normal forms and traces.
#[derive(Clone, Debug)]
pub struct Witness {
    pub pair: CriticalPair,
    pub first: PairOutcome,
    pub second: PairOutcome,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "critical pair: {}", self.pair)?;
        for (label, rule, side) in [("first", &self.pair.first, &self.first), ("second", &self.pair.second, &self.second)] {
            writeln!(f, "{label} ({rule} fires first):")?;
            for s in &side.trace {
                writeln!(f, "  {s}")?;
            }
            match &side.failure {
                Some(why) => writeln!(f, "  result: False ({why})")?,
                None => writeln!(f, "  result: {}", side.canonical)?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum ConfluenceVerdict {
    Confluent { pairs: usize },
    NonConfluent(Box<Witness>),
    Inconclusive { reason: String },
}

impl ConfluenceVerdict {
    pub fn is_confluent(&self) -> bool {
        matches!(self, ConfluenceVerdict::Confluent { .. })
    }

    pub fn witness(&self) -> Option<&Witness> {
        match self {
            ConfluenceVerdict::NonConfluent(w) => Some(w),
            _ => None,
        }
    }
}

impl fmt::Display for ConfluenceVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfluenceVerdict::Confluent { pairs } => write!(f, "confluent ({pairs} critical pairs joinable)"),
            ConfluenceVerdict::NonConfluent(w) => write!(f, "not confluent\n{w}"),
            ConfluenceVerdict::Inconclusive { reason } => write!(f, "inconclusive: {reason}"),
        }
    }
}

/// Give every variable of a pair its plain source name where that is unambiguous.
fn tidy_names(vars: &[Var]) -> BTreeMap<Var, Var> {
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut map = BTreeMap::new();
    for v in vars {
        if map.contains_key(v) {
            continue;
        }
        let base = v.name().to_string();
        let mut name = base.clone();
        let mut k = 1;
        while used.contains(&name) {
            name = format!("{base}{k}");
            k += 1;
        }
        used.insert(name.clone());
        map.insert(v.clone(), Var::new(name));
    }
    map
}

/// Injective partial maps from heads of `r1` to heads of `r2` with equal
/// class names, nonempty.
fn overlaps(r1: &ChrRule, r2: &ChrRule) -> Vec<Vec<(usize, usize)>> {
    fn go(r1: &ChrRule, r2: &ChrRule, i: usize, used: &mut Vec<usize>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if i == r1.head.len() {
            if !cur.is_empty() {
                out.push(cur.clone());
            }
            return;
        }
        go(r1, r2, i + 1, used, cur, out);
        for j in 0..r2.head.len() {
            if used.contains(&j) || r1.head[i].class != r2.head[j].class || r1.head[i].args.len() != r2.head[j].args.len() {
                continue;
            }
            used.push(j);
            cur.push((i, j));
            go(r1, r2, i + 1, used, cur, out);
            cur.pop();
            used.pop();
        }
    }
    let mut out = Vec::new();
    go(r1, r2, 0, &mut Vec::new(), &mut Vec::new(), &mut out);
    out
}

fn equation_guards(r: &ChrRule) -> impl Iterator<Item = (&Term, &Term)> {
    r.guard.iter().filter_map(|g| match g {
        Guard::Eq(a, b) => Some((a, b)),
        Guard::Neq(..) => None,
    })
}

fn disequation_guards(r: &ChrRule) -> impl Iterator<Item = (&Term, &Term)> {
    r.guard.iter().filter_map(|g| match g {
        Guard::Neq(a, b) => Some((a, b)),
        Guard::Eq(..) => None,
    })
}

fn successor(fired: &ChrRule, other_rest: &[ClassConstraint], all_heads: &[ClassConstraint], theta: &Substitution) -> Option<Vec<GoalItem>> {
    let Body::Items(items) = &fired.body else { return None };
    let mut goal: Vec<GoalItem> = Vec::new();
    if fired.is_propagation() {
        goal.extend(all_heads.iter().map(|c| GoalItem::Class(c.clone())));
    } else {
        goal.extend(other_rest.iter().map(|c| GoalItem::Class(c.clone())));
    }
    goal.extend(items.iter().map(|i| i.apply(theta)));
    Some(goal)
}

fn pairs_of(r1: &ChrRule, r2: &ChrRule, out: &mut Vec<CriticalPair>) {
    let mut stamp = 1;
    let a = r1.rename_apart(&mut stamp);
    let b = r2.rename_apart(&mut stamp);
    for overlap in overlaps(&a, &b) {
        let mut theta = Substitution::new();
        let unified = overlap
            .iter()
            .all(|&(i, j)| a.head[i].args.iter().zip(&b.head[j].args).all(|(x, y)| theta.unify_terms(x, y).is_ok()))
            && equation_guards(&a).chain(equation_guards(&b)).all(|(x, y)| theta.unify_terms(x, y).is_ok());
        if !unified {
            continue;
        }
        let diseqs: Vec<(Term, Term)> =
            disequation_guards(&a).chain(disequation_guards(&b)).map(|(x, y)| (theta.apply(x), theta.apply(y))).collect();
        if diseqs.iter().any(|(x, y)| x == y) {
            continue;
        }
        let inst = |c: &ClassConstraint| theta.apply_constraint(c);
        let overlapped_b: Vec<usize> = overlap.iter().map(|&(_, j)| j).collect();
        let overlapped_a: Vec<usize> = overlap.iter().map(|&(i, _)| i).collect();
        let b_rest: Vec<ClassConstraint> = (0..b.head.len()).filter(|j| !overlapped_b.contains(j)).map(|j| inst(&b.head[j])).collect();
        let a_rest: Vec<ClassConstraint> = (0..a.head.len()).filter(|i| !overlapped_a.contains(i)).map(|i| inst(&a.head[i])).collect();
        let heads: Vec<ClassConstraint> = a.head.iter().map(inst).chain(b_rest.iter().cloned()).collect();

        let mut order = Vec::new();
        heads.iter().for_each(|c| c.collect_vars(&mut order));
        let mut rest = Vec::new();
        for item in a.body.items().iter().chain(b.body.items()) {
            item.apply(&theta).collect_vars(&mut rest);
        }
        for (x, y) in &diseqs {
            x.collect_vars(&mut rest);
            y.collect_vars(&mut rest);
        }
        order.extend(rest);
        let names = tidy_names(&order);
        let rn = |t: &Term| t.rename(&names);
        let rn_goal = |g: Option<Vec<GoalItem>>| g.map(|g| g.iter().map(|i| i.map_terms(&rn)).collect::<Vec<_>>());

        let protected: BTreeSet<Var> = heads.iter().flat_map(|c| c.vars()).map(|v| names[&v].clone()).collect();
        let after_first = rn_goal(successor(&a, &b_rest, &heads, &theta));
        let after_second = rn_goal(successor(&b, &a_rest, &heads, &theta));
        let unifier = Substitution::from_pairs(theta.iter().map(|(v, t)| (names.get(v).cloned().unwrap_or_else(|| v.clone()), rn(t))))
            .expect("renaming preserves idempotence");
        out.push(CriticalPair {
            first: r1.name.clone(),
            second: r2.name.clone(),
            overlap: overlap.iter().map(|&(i, _)| inst(&a.head[i]).map_args(rn)).collect(),
            heads: heads.iter().map(|c| c.map_args(rn)).collect(),
            unifier,
            protected,
            disequalities: diseqs.iter().map(|(x, y)| (rn(x), rn(y))).collect(),
            after_first,
            after_second,
        });
    }
}

/// All critical pairs of `program`: every unordered pair of rules, a rule
/// with a renamed copy of itself included, and every nonempty head overlap
/// whose unification (with the equation guards) succeeds and whose
/// disequality guards are not refuted by it.
pub fn critical_pairs(program: &Program) -> Vec<CriticalPair> {
    let rules = program.rules();
    let mut out = Vec::new();
    for i in 0..rules.len() {
        for j in i..rules.len() {
            pairs_of(&rules[i], &rules[j], &mut out);
        }
    }
    out
}

fn run_side(state: Option<ChrState>, program: &Program, fuel: usize, trace: bool) -> Result<PairOutcome, usize> {
    let Some(state) = state else {
        return Ok(PairOutcome { canonical: CanonicalForm::Unsatisfiable, trace: Vec::new(), failure: Some("the rule body is False".into()) });
    };
    match Engine::new(program).fuel(fuel).record_trace(trace).run(state) {
        Ok(fin) => Ok(PairOutcome {
            canonical: canonicalize(&fin.state().normalised_store(), fin.herbrand(), fin.protected()),
            trace: fin.trace().to_vec(),
            failure: None,
        }),
        Err(DeriveError::Unsatisfiable { reason, trace }) => {
            Ok(PairOutcome { canonical: CanonicalForm::Unsatisfiable, trace, failure: Some(reason.to_string()) })
        }
        Err(DeriveError::FuelExceeded { fuel, .. }) => Err(fuel),
    }
}

fn judge(pair: &CriticalPair, program: &Program, fuel: usize, trace: bool) -> Joinability {
    let first = match run_side(pair.first_state(), program, fuel, trace) {
        Ok(o) => o,
        Err(fuel) => return Joinability::Inconclusive { fuel },
    };
    let second = match run_side(pair.second_state(), program, fuel, trace) {
        Ok(o) => o,
        Err(fuel) => return Joinability::Inconclusive { fuel },
    };
    if first.canonical == second.canonical {
        Joinability::Joinable
    } else {
        Joinability::NotJoinable { first, second }
    }
}

/// Derive both sides of `pair` to final states and compare them up to variants.
/// `False` on both sides counts as joinable.
pub fn joinable(pair: &CriticalPair, program: &Program, fuel: usize) -> Joinability {
    judge(pair, program, fuel, true)
}

/// Check every critical pair; the first non-joinable one (in rule order) is the witness.
pub fn check_confluence(program: &Program, fuel: usize) -> ConfluenceVerdict {
    let pairs = critical_pairs(program);
    let mut inconclusive = None;
    for pair in &pairs {
        match judge(pair, program, fuel, false) {
            Joinability::Joinable => {}
            Joinability::NotJoinable { .. } => {
                // replay with traces for the report
                return match judge(pair, program, fuel, true) {
                    Joinability::NotJoinable { first, second } => {
                        ConfluenceVerdict::NonConfluent(Box::new(Witness { pair: pair.clone(), first, second }))
                    }
                    _ => unreachable!("derivations are deterministic"),
                };
            }
            Joinability::Inconclusive { fuel } => {
                inconclusive.get_or_insert_with(|| format!("critical pair {} / {} did not reach a final state within {fuel} steps", pair.first, pair.second));
            }
        }
    }
    match inconclusive {
        Some(reason) => ConfluenceVerdict::Inconclusive { reason },
        None => ConfluenceVerdict::Confluent { pairs: pairs.len() },
    }
}

/// Outcome of the syntactic termination precheck.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TerminationReport {
    /// Why the declarations may lead to a non-terminating program.
    pub failures: Vec<String>,
    /// Raw rules: not covered by the check, run under the fuel limit.
    pub raw_rules: Vec<String>,
}

impl TerminationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn find_cycle(graph: &BTreeMap<String, BTreeSet<String>>) -> Option<Vec<String>> {
    fn visit(
        n: &str,
        graph: &BTreeMap<String, BTreeSet<String>>,
        state: &mut BTreeMap<String, u8>,
        path: &mut Vec<String>,
    ) -> Option<Vec<String>> {
        match state.get(n) {
            Some(2) => return None,
            Some(1) => {
                let start = path.iter().position(|p| p == n).expect("node on path");
                let mut cycle = path[start..].to_vec();
                cycle.push(n.to_string());
                return Some(cycle);
            }
            _ => {}
        }
        state.insert(n.to_string(), 1);
        path.push(n.to_string());
        for m in graph.get(n).into_iter().flatten() {
            if let Some(c) = visit(m, graph, state, path) {
                return Some(c);
            }
        }
        path.pop();
        state.insert(n.to_string(), 2);
        None
    }
    let mut state = BTreeMap::new();
    for n in graph.keys() {
        if let Some(c) = visit(n, graph, &mut state, &mut Vec::new()) {
            return Some(c);
        }
    }
    None
}

/// Haskell-98 style conditions that make the translated program terminate:
/// an acyclic superclass graph, and instance contexts that are strictly
/// smaller (in constructor nodes) than the instance head and mention only
/// head variables.
pub fn check_termination_syntactic(decls: &SurfaceProgram) -> TerminationReport {
    let mut report = TerminationReport::default();
    let mut graph: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for c in decls.classes() {
        graph.entry(c.name.clone()).or_default().extend(c.context.iter().map(|d| d.class.clone()));
    }
    if let Some(cycle) = find_cycle(&graph) {
        report.failures.push(format!("cyclic superclass hierarchy: {}", cycle.join(" -> ")));
    }
    for inst in decls.instances() {
        let head = inst.head();
        let head_vars: BTreeSet<Var> = head.vars().into_iter().collect();
        for d in &inst.context {
            if let Some(v) = d.vars().into_iter().find(|v| !head_vars.contains(v)) {
                report.failures.push(format!("{}: instance context `{d}` mentions `{v}`, which is not in the head `{head}`", inst.loc));
            } else if d.size() >= head.size() {
                report.failures.push(format!(
                    "{}: instance context `{d}` is not smaller than the head `{head}` ({} vs {} constructors)",
                    inst.loc,
                    d.size(),
                    head.size()
                ));
            }
        }
    }
    report.raw_rules = decls.rules().map(|r| r.rule.name.clone()).collect();
    report
}
