//! Type inference: constraint generation, CHR solving, generalisation,
//! presentation, ambiguity and signature checks.

mod expr;
mod generate;
mod render;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::chr::{ChrState, ClassConstraint, DeriveError, Engine, GoalItem, TraceStep, UnsatReason, DEFAULT_FUEL};
use crate::desugar::RuleSet;
use crate::herbrand::{match_head, match_head_with, Substitution, Term, Var};
use crate::syntax::{Loc, SurfaceProgram};

pub use expr::*;
pub use generate::{generate, Generator};
pub use render::{alpha_equivalent, display_renaming, display_scheme, render_scheme, scheme_key, unskolemize};

/// Term variables and method names in scope.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeEnv {
    bindings: BTreeMap<String, TypeScheme>,
}

impl TypeEnv {
    pub fn new() -> Self {
        TypeEnv::default()
    }

    /// The class methods of a rule set.
    pub fn from_rules(rules: &RuleSet) -> Self {
        let mut env = TypeEnv::new();
        for (name, m) in &rules.methods {
            env.insert(name.clone(), rules.prepare_scheme(&m.scheme));
        }
        env
    }

    /// Class methods plus primitives: signatures without a binding.
    pub fn for_program(program: &SurfaceProgram, rules: &RuleSet) -> Self {
        let mut env = TypeEnv::from_rules(rules);
        let defined: BTreeSet<&str> = program.bindings().map(|b| b.name.as_str()).collect();
        for s in program.signatures() {
            if !defined.contains(s.name.as_str()) {
                env.insert(s.name.clone(), rules.prepare_scheme(&s.scheme));
            }
        }
        env
    }

    pub fn insert(&mut self, name: impl Into<String>, scheme: TypeScheme) {
        self.bindings.insert(name.into(), scheme);
    }

    pub fn get(&self, name: &str) -> Option<&TypeScheme> {
        self.bindings.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TypeScheme)> {
        self.bindings.iter()
    }

    /// Free type variables of the bindings: the monomorphic ones.
    pub fn protected(&self) -> BTreeSet<Var> {
        self.bindings.values().flat_map(TypeScheme::free_vars).collect()
    }

    pub(crate) fn all_vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for s in self.bindings.values() {
            s.body.collect_vars(&mut out);
            s.context.iter().for_each(|c| c.collect_vars(&mut out));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("variable `{name}` is not in scope")]
    UnboundVariable { name: String },
    #[error("unsatisfiable constraints: {reason}{}", origin.as_ref().map(|o| format!(" ({o})")).unwrap_or_default())]
    Unsatisfiable { binding: String, reason: UnsatReason, origin: Option<String>, trace: Vec<TraceStep> },
    #[error("no instance for `{constraint}`")]
    NoInstance { binding: String, constraint: String },
    #[error("constraint solving did not finish within {fuel} steps")]
    FuelExceeded { binding: String, fuel: usize },
}

impl TypeError {
    pub(crate) fn from_derive(binding: &str, e: DeriveError, rules: &RuleSet) -> TypeError {
        match e {
            DeriveError::Unsatisfiable { reason, trace } => {
                let origin = match &reason {
                    UnsatReason::FalseBody { rule } => Some(rules.origin(rule)),
                    _ => None,
                };
                TypeError::Unsatisfiable { binding: binding.to_string(), reason, origin, trace }
            }
            DeriveError::FuelExceeded { fuel, .. } => TypeError::FuelExceeded { binding: binding.to_string(), fuel },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            TypeError::FuelExceeded { .. } => 4,
            _ => 2,
        }
    }

    pub fn trace(&self) -> &[TraceStep] {
        match self {
            TypeError::Unsatisfiable { trace, .. } => trace,
            _ => &[],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("the inferred type `{inferred}` does not match the declared `{declared}`")]
    BodyMismatch { declared: String, inferred: String },
    #[error("could not deduce `{constraint}` from the declared context `{declared}`")]
    Unentailed { constraint: String, declared: String },
    #[error(transparent)]
    Type(#[from] TypeError),
}

impl SignatureError {
    pub fn exit_code(&self) -> i32 {
        match self {
            SignatureError::Type(e) => e.exit_code(),
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Ambiguity {
    Unambiguous,
    /// The check could not show these quantified variables to be determined
    /// by the type.
    PossiblyAmbiguous(Vec<Var>),
}

impl Ambiguity {
    pub fn is_unambiguous(&self) -> bool {
        matches!(self, Ambiguity::Unambiguous)
    }
}

impl fmt::Display for Ambiguity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ambiguity::Unambiguous => write!(f, "unambiguous"),
            Ambiguity::PossiblyAmbiguous(vs) => write!(f, "possibly ambiguous in {}", crate::pretty::comma_list(vs)),
        }
    }
}

/// Settings for one inference run.
#[derive(Clone, Debug)]
pub struct InferOptions {
    pub fuel: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions { fuel: DEFAULT_FUEL }
    }
}

/// Solve `goal`, then generalise `ty` over everything not protected by `env`.
pub fn solve_and_generalize(ty: &Term, goal: Vec<GoalItem>, env: &TypeEnv, rules: &RuleSet, fuel: usize) -> Result<TypeScheme, TypeError> {
    let mut g = Generator::new(rules, fuel);
    g.reserve(env.all_vars());
    let protected = env.protected();
    let fin = g.solve(goal, protected.clone()).map_err(|e| TypeError::from_derive("expression", e, rules))?;
    let h = fin.herbrand();
    let fixed: BTreeSet<Var> = protected.iter().flat_map(|v| h.apply_var(v).vars()).collect();
    let store = fin.constraints();
    if let Some(c) = store.iter().find(|c| c.vars().is_empty()) {
        return Err(TypeError::NoInstance { binding: "expression".into(), constraint: unskolemize_constraint(c).to_string() });
    }
    let (scheme, _) = generate::close_over(h.apply(ty), &store, &fixed);
    Ok(scheme)
}

/// Drop constraints implied by others via the presentation rules.
pub fn present(scheme: &TypeScheme, rules: &RuleSet, fuel: usize) -> TypeScheme {
    if rules.presentation.is_empty() || scheme.context.is_empty() {
        return scheme.clone();
    }
    let goal = scheme.context.iter().cloned().map(GoalItem::Class).collect();
    let mut protected: BTreeSet<Var> = scheme.vars.iter().cloned().collect();
    protected.extend(scheme.free_vars());
    match Engine::new(&rules.presentation).fuel(fuel).record_trace(false).run(ChrState::new(goal, protected)) {
        Ok(fin) => {
            let h = fin.herbrand();
            TypeScheme { vars: scheme.vars.clone(), context: fin.constraints(), body: h.apply(&scheme.body) }
        }
        Err(_) => scheme.clone(),
    }
}

/// Solve `D ∧ ρD ∧ τ = ρτ` for a fresh renaming ρ of the quantified
/// variables; every variable whose copy is not forced equal to it is
/// reported.
pub fn check_ambiguity(scheme: &TypeScheme, rules: &RuleSet, fuel: usize) -> Ambiguity {
    let mut g = Generator::new(rules, fuel);
    let mut vars = scheme.vars.clone();
    vars.extend(scheme.free_vars());
    g.reserve(vars.clone());
    let rho: BTreeMap<Var, Var> = scheme.vars.iter().map(|v| (v.clone(), g.fresh_var(v.name()))).collect();
    let mut goal: Vec<GoalItem> = scheme.context.iter().cloned().map(GoalItem::Class).collect();
    goal.extend(scheme.context.iter().map(|c| GoalItem::Class(c.rename(&rho))));
    goal.push(GoalItem::eq(scheme.body.clone(), scheme.body.rename(&rho)));
    let protected: BTreeSet<Var> = scheme.vars.iter().chain(rho.values()).cloned().collect();
    let undetermined = |fixed: &dyn Fn(&Var) -> bool| -> Vec<Var> { scheme.vars.iter().filter(|v| !fixed(v)).cloned().collect() };
    match g.solve(goal, protected) {
        Ok(fin) => {
            let h = fin.herbrand();
            let open = undetermined(&|v| h.apply_var(v) == h.apply_var(&rho[v]));
            if open.is_empty() {
                Ambiguity::Unambiguous
            } else {
                Ambiguity::PossiblyAmbiguous(open)
            }
        }
        Err(_) => {
            let body = scheme.body.vars();
            let open = undetermined(&|v| body.contains(v));
            if open.is_empty() {
                Ambiguity::Unambiguous
            } else {
                Ambiguity::PossiblyAmbiguous(open)
            }
        }
    }
}

fn unskolemize_constraint(c: &ClassConstraint) -> ClassConstraint {
    c.map_args(unskolemize)
}

/// Check `e` against a declared scheme: the inferred type must match the
/// declared body, and every inferred constraint must lie in the closure of
/// the declared context under the propagation rules.
pub fn check_signature(declared: &TypeScheme, e: &Expr, env: &TypeEnv, rules: &RuleSet, fuel: usize) -> Result<(), SignatureError> {
    let sk: BTreeMap<Var, Term> = declared.vars.iter().map(|v| (v.clone(), Term::skolem(&v.to_string()))).collect();
    let skolemize = |t: &Term| substitute(t, &sk);
    let context: Vec<ClassConstraint> = declared.context.iter().map(|c| c.map_args(skolemize)).collect();
    let body = skolemize(&declared.body);
    let shown = || format!("{}", display_scheme(declared));

    let mut g = Generator::new(rules, fuel);
    g.reserve(env.all_vars());
    g.reserve(declared.vars.iter().cloned());
    let ty = g.generate(e, env)?;
    let mut goal = g.take_constraints();

    // shape first, so a mismatch is reported as such
    let eqs: Vec<GoalItem> = goal.iter().filter(|i| matches!(i, GoalItem::Eq(_))).cloned().chain([GoalItem::eq(ty.clone(), body.clone())]).collect();
    let empty = crate::chr::Program::empty();
    if let Err(DeriveError::Unsatisfiable { .. }) = Engine::new(&empty).record_trace(false).run(ChrState::new(eqs.clone(), BTreeSet::new())) {
        let inferred = Engine::new(&empty)
            .record_trace(false)
            .run(ChrState::new(eqs[..eqs.len() - 1].to_vec(), BTreeSet::new()))
            .map(|f| f.herbrand().apply(&ty))
            .unwrap_or(ty.clone());
        let inferred = TypeScheme::closed(Vec::new(), unskolemize(&inferred));
        return Err(SignatureError::BodyMismatch { declared: shown(), inferred: display_scheme(&inferred).to_string() });
    }

    let closure = Engine::new(&rules.solving.filter(|r| r.is_propagation()))
        .fuel(fuel)
        .record_trace(false)
        .run(ChrState::new(context.iter().cloned().map(GoalItem::Class).collect(), BTreeSet::new()))
        .map_err(|e| TypeError::from_derive("signature context", e, rules))?;
    let closure = closure.constraints();

    goal.push(GoalItem::eq(ty, body));
    goal.extend(context.iter().cloned().map(GoalItem::Class));
    let fin = g.solve(goal, BTreeSet::new()).map_err(|e| TypeError::from_derive("signature", e, rules))?;
    // variables left in the residual are not determined by the type (the
    // declared ones are skolems): they may be chosen to fit the context
    let rigid = env.protected();
    let (open, closed): (Vec<ClassConstraint>, Vec<ClassConstraint>) =
        fin.constraints().into_iter().partition(|c| c.vars().iter().any(|v| !rigid.contains(v)));
    for c in closed {
        if !closure.contains(&c) {
            return Err(SignatureError::Unentailed { constraint: unskolemize_constraint(&c).to_string(), declared: shown() });
        }
    }
    if !entailed_by_choice(&open, &closure, &rigid, &Substitution::new()) {
        let c = open.iter().find(|c| !closure.iter().any(|d| match_head(c, d, &Substitution::new()).is_some())).unwrap_or(&open[0]);
        return Err(SignatureError::Unentailed { constraint: unskolemize_constraint(c).to_string(), declared: shown() });
    }
    Ok(())
}

/// Whether some instantiation of the non-rigid variables of `cs` puts every
/// constraint in `closure`.
fn entailed_by_choice(cs: &[ClassConstraint], closure: &[ClassConstraint], rigid: &BTreeSet<Var>, theta: &Substitution) -> bool {
    let Some((c, rest)) = cs.split_first() else { return true };
    closure.iter().any(|d| match match_head_with(c, d, &Substitution::new(), theta) {
        Some(next) => next.domain().all(|v| !rigid.contains(v)) && entailed_by_choice(rest, closure, rigid, &next),
        None => false,
    })
}

fn substitute(t: &Term, map: &BTreeMap<Var, Term>) -> Term {
    match t {
        Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| t.clone()),
        Term::App(f, args) => Term::App(f.clone(), args.iter().map(|a| substitute(a, map)).collect()),
    }
}

/// Strongly connected components of `0..n`, dependencies first.
pub(crate) fn sccs(n: usize, deps: impl Fn(usize) -> Vec<usize>) -> Vec<Vec<usize>> {
    struct Tarjan<'a> {
        deps: &'a dyn Fn(usize) -> Vec<usize>,
        index: Vec<Option<usize>>,
        low: Vec<usize>,
        on_stack: Vec<bool>,
        stack: Vec<usize>,
        next: usize,
        out: Vec<Vec<usize>>,
    }
    impl Tarjan<'_> {
        fn visit(&mut self, v: usize) {
            self.index[v] = Some(self.next);
            self.low[v] = self.next;
            self.next += 1;
            self.stack.push(v);
            self.on_stack[v] = true;
            for w in (self.deps)(v) {
                match self.index[w] {
                    None => {
                        self.visit(w);
                        self.low[v] = self.low[v].min(self.low[w]);
                    }
                    Some(i) if self.on_stack[w] => self.low[v] = self.low[v].min(i),
                    Some(_) => {}
                }
            }
            if Some(self.low[v]) == self.index[v] {
                let mut group = Vec::new();
                loop {
                    let w = self.stack.pop().expect("on stack");
                    self.on_stack[w] = false;
                    group.push(w);
                    if w == v {
                        break;
                    }
                }
                group.sort_unstable();
                self.out.push(group);
            }
        }
    }
    let mut t = Tarjan { deps: &deps, index: vec![None; n], low: vec![0; n], on_stack: vec![false; n], stack: Vec::new(), next: 0, out: Vec::new() };
    for v in 0..n {
        if t.index[v].is_none() {
            t.visit(v);
        }
    }
    t.out
}

/// Result of typing one top-level binding.
#[derive(Clone, Debug)]
pub struct Inferred {
    /// The solved scheme before presentation.
    pub solved: TypeScheme,
    /// The scheme as displayed.
    pub presented: TypeScheme,
    pub ambiguity: Ambiguity,
    /// Whether the binding carried a signature (which was then checked).
    pub declared: bool,
}

#[derive(Clone, Debug)]
pub enum BindingError {
    Type(TypeError),
    Signature(SignatureError),
}

impl fmt::Display for BindingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BindingError::Type(e) => write!(f, "type error: {e}"),
            BindingError::Signature(e) => write!(f, "signature error: {e}"),
        }
    }
}

impl BindingError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BindingError::Type(e) => e.exit_code(),
            BindingError::Signature(e) => e.exit_code(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BindingReport {
    pub name: String,
    pub loc: Loc,
    pub result: Result<Inferred, BindingError>,
}

impl BindingReport {
    pub fn scheme(&self) -> Option<&TypeScheme> {
        self.result.as_ref().ok().map(|i| &i.presented)
    }

    pub fn rendered(&self) -> Option<String> {
        self.scheme().map(|s| render_scheme(&self.name, s))
    }
}

/// Ambiguity verdict for a class method.
#[derive(Clone, Debug)]
pub struct MethodReport {
    pub name: String,
    pub class: String,
    pub scheme: TypeScheme,
    pub ambiguity: Ambiguity,
}

#[derive(Clone, Debug, Default)]
pub struct ProgramReport {
    pub methods: Vec<MethodReport>,
    pub bindings: Vec<BindingReport>,
}

impl ProgramReport {
    pub fn binding(&self, name: &str) -> Option<&BindingReport> {
        self.bindings.iter().find(|b| b.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// 0 ok, 2 type/signature error, 3 ambiguity (strict mode), 4 inconclusive.
    pub fn exit_code(&self, strict_ambiguity: bool) -> i32 {
        let mut code = 0;
        for b in &self.bindings {
            match &b.result {
                Err(e) => code = code.max(if e.exit_code() == 4 { 4 } else { 2 }),
                Ok(i) if strict_ambiguity && !i.ambiguity.is_unambiguous() => code = code.max(3),
                Ok(_) => {}
            }
        }
        if strict_ambiguity && self.methods.iter().any(|m| !m.ambiguity.is_unambiguous()) {
            code = code.max(3);
        }
        // a type error outranks an ambiguity, inconclusive outranks both
        if code == 3 && self.bindings.iter().any(|b| matches!(&b.result, Err(e) if e.exit_code() == 2)) {
            code = 2;
        }
        code
    }
}

/// Infer every top-level binding of `program`, in dependency order.
pub fn infer_program(program: &SurfaceProgram, rules: &RuleSet, opts: &InferOptions) -> ProgramReport {
    let fuel = opts.fuel;
    let mut report = ProgramReport::default();
    for (name, m) in &rules.methods {
        let scheme = rules.prepare_scheme(&m.scheme);
        let ambiguity = check_ambiguity(&scheme, rules, fuel);
        report.methods.push(MethodReport { name: name.clone(), class: m.class.clone(), scheme, ambiguity });
    }

    let mut env = TypeEnv::for_program(program, rules);
    let bindings: Vec<_> = program.bindings().collect();
    let defined: BTreeSet<&str> = bindings.iter().map(|b| b.name.as_str()).collect();
    let signatures: BTreeMap<&str, TypeScheme> = program.signatures().map(|s| (s.name.as_str(), rules.prepare_scheme(&s.scheme))).collect();
    for (name, s) in &signatures {
        if defined.contains(name) {
            env.insert(name.to_string(), s.clone());
        }
    }

    let index: BTreeMap<&str, usize> = bindings.iter().enumerate().map(|(i, b)| (b.name.as_str(), i)).collect();
    let deps: Vec<Vec<usize>> = bindings
        .iter()
        .map(|b| {
            b.body.free_vars().iter().filter(|x| !signatures.contains_key(x.as_str())).filter_map(|x| index.get(x.as_str()).copied()).collect()
        })
        .collect();
    let mut results: BTreeMap<usize, Result<Inferred, BindingError>> = BTreeMap::new();
    let mut failed: BTreeSet<String> = BTreeSet::new();
    for group in sccs(bindings.len(), |i| deps[i].clone()) {
        let (plain, signed): (Vec<usize>, Vec<usize>) = group.into_iter().partition(|&i| !signatures.contains_key(bindings[i].name.as_str()));
        if !plain.is_empty() {
            let blocked = plain.iter().flat_map(|&i| bindings[i].body.free_vars()).find(|x| failed.contains(x));
            let outcome = match blocked {
                Some(x) => Err(TypeError::Unsatisfiable {
                    binding: bindings[plain[0]].name.clone(),
                    reason: UnsatReason::FalseBody { rule: format!("(depends on ill-typed `{x}`)") },
                    origin: None,
                    trace: Vec::new(),
                }),
                None => infer_group(&plain.iter().map(|&i| bindings[i]).collect::<Vec<_>>(), &env, rules, fuel),
            };
            match outcome {
                Ok(schemes) => {
                    for (&i, solved) in plain.iter().zip(schemes) {
                        let presented = present(&solved, rules, fuel);
                        let ambiguity = check_ambiguity(&solved, rules, fuel);
                        env.insert(bindings[i].name.clone(), presented.clone());
                        results.insert(i, Ok(Inferred { solved, presented, ambiguity, declared: false }));
                    }
                }
                Err(e) => {
                    for &i in &plain {
                        failed.insert(bindings[i].name.clone());
                        results.insert(i, Err(BindingError::Type(e.clone())));
                    }
                }
            }
        }
        for i in signed {
            let b = bindings[i];
            let declared = signatures[b.name.as_str()].clone();
            let result = check_signature(&declared, &b.body, &env, rules, fuel)
                .map(|()| Inferred {
                    presented: present(&declared, rules, fuel),
                    ambiguity: check_ambiguity(&declared, rules, fuel),
                    solved: declared,
                    declared: true,
                })
                .map_err(BindingError::Signature);
            results.insert(i, result);
        }
    }
    for (i, result) in results {
        report.bindings.push(BindingReport { name: bindings[i].name.clone(), loc: bindings[i].loc, result });
    }
    report
}

fn infer_group(group: &[&crate::syntax::Binding], env: &TypeEnv, rules: &RuleSet, fuel: usize) -> Result<Vec<TypeScheme>, TypeError> {
    let name = &group[0].name;
    let mut g = Generator::new(rules, fuel);
    g.reserve(env.all_vars());
    let mut mono = env.clone();
    let tys: Vec<Term> = group.iter().map(|_| g.fresh()).collect();
    for (b, t) in group.iter().zip(&tys) {
        mono.insert(b.name.clone(), TypeScheme::mono(t.clone()));
    }
    for (b, t) in group.iter().zip(&tys) {
        let tb = g.generate(&b.body, &mono)?;
        g.push(GoalItem::eq(t.clone(), tb));
    }
    let goal = g.take_constraints();
    let fin = g.solve(goal, env.protected()).map_err(|e| TypeError::from_derive(name, e, rules))?;
    let h = fin.herbrand();
    let store = fin.constraints();
    if let Some(c) = store.iter().find(|c| c.vars().is_empty()) {
        return Err(TypeError::NoInstance { binding: name.clone(), constraint: c.to_string() });
    }
    let fixed: BTreeSet<Var> = env.protected().iter().flat_map(|v| h.apply_var(v).vars()).collect();
    Ok(tys.iter().map(|t| generate::close_over(h.apply(t), &store, &fixed).0).collect())
}
