//! Translation of class, instance and functional-dependency declarations
//! into CHR solving and presentation rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::chr::{Body, ChrRule, ClassConstraint, GoalItem, Program, ProgramError, DEFAULT_FUEL};
use crate::confluence::{check_confluence, check_termination_syntactic, ConfluenceVerdict, TerminationReport, Witness};
use crate::herbrand::{Guard, Term, Var, TYAPP};
use crate::inference::TypeScheme;
use crate::syntax::{parse_rule, ClassDecl, Decl, InstanceDecl, Loc, SurfaceProgram};

/// Where a rule came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Origin {
    pub loc: Option<Loc>,
    pub description: String,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.loc {
            Some(loc) => write!(f, "{} at {loc}", self.description),
            None => write!(f, "{}", self.description),
        }
    }
}

#[derive(Clone, Debug, Error)]
pub enum DeclError {
    #[error("{loc}: class `{name}` is declared twice")]
    DuplicateClass { name: String, loc: Loc },
    #[error("{loc}: method `{name}` is declared twice")]
    DuplicateMethod { name: String, loc: Loc },
    #[error("{loc}: class `{class}` repeats the parameter `{var}`")]
    DuplicateParam { class: String, var: Var, loc: Loc },
    #[error("{loc}: instance of undeclared class `{class}`")]
    UnknownClass { class: String, loc: Loc },
    #[error("{loc}: class `{class}` takes {expected} arguments, the instance gives {found}")]
    InstanceArity { class: String, expected: usize, found: usize, loc: Loc },
    #[error("{loc}: functional dependency of `{class}` mentions `{var}`, which is not a class parameter")]
    FunDepVar { class: String, var: Var, loc: Loc },
    #[error("{loc}: context of class `{class}` mentions `{var}`, which is not a class parameter")]
    ClassContextVar { class: String, var: Var, loc: Loc },
    #[error("{loc}: method `{method}` of class `{class}` mentions no class parameter, so every use would be ambiguous")]
    MethodWithoutParam { class: String, method: String, loc: Loc },
    #[error("{loc}: instance context `{constraint}` mentions `{var}`, which does not occur in the instance head")]
    InstanceContextVar { constraint: String, var: Var, loc: Loc },
    #[error("{origin}: {error}")]
    Program { error: ProgramError, origin: String },
    #[error("the class and instance declarations are inconsistent: rules `{}` ({}) and `{}` ({}) are not confluent\n{witness}",
        witness.pair.first, origins.0, witness.pair.second, origins.1)]
    NonConfluent { witness: Box<Witness>, origins: (String, String) },
    #[error("confluence check inconclusive: {0}")]
    Inconclusive(String),
}

impl DeclError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            DeclError::Inconclusive(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DesugarOptions {
    pub kind_constraints: bool,
    pub fuel: usize,
    /// Run the confluence check (and reject non-confluent programs).
    pub check_confluence: bool,
}

impl Default for DesugarOptions {
    fn default() -> Self {
        DesugarOptions { kind_constraints: false, fuel: DEFAULT_FUEL, check_confluence: true }
    }
}

/// A class method: its class and the scheme it enters the environment with.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Method {
    pub class: String,
    pub scheme: TypeScheme,
    pub loc: Loc,
}

/// The CHR program of a source program.
#[derive(Clone, Debug)]
pub struct RuleSet {
    pub solving: Program,
    /// Applied only when presenting inferred types.
    pub presentation: Program,
    pub classes: BTreeMap<String, ClassDecl>,
    pub origins: BTreeMap<String, Origin>,
    pub methods: BTreeMap<String, Method>,
    pub termination: TerminationReport,
    pub confluence: Option<ConfluenceVerdict>,
    pub warnings: Vec<String>,
    pub kind_constraints: bool,
}

impl RuleSet {
    pub fn origin(&self, rule: &str) -> String {
        self.origins.get(rule).map_or_else(|| "builtin".to_string(), ToString::to_string)
    }

    /// Bring a user-written scheme into the form the solver expects
    /// (type-variable applications become `Kind1` constraints when enabled).
    pub fn prepare_scheme(&self, scheme: &TypeScheme) -> TypeScheme {
        if self.kind_constraints {
            desugar_scheme(scheme)
        } else {
            scheme.clone()
        }
    }

    /// All rules in dump order: solving rules, then presentation rules.
    pub fn all_rules(&self) -> impl Iterator<Item = &ChrRule> {
        self.solving.rules().iter().chain(self.presentation.rules())
    }
}

/// Rules generated from one class declaration.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassRules {
    /// `C x̄ ==> d1, .., dm`, absent for an empty context.
    pub superclass: Option<ChrRule>,
    /// One guard-folded rule per functional dependency.
    pub fundeps: Vec<ChrRule>,
    /// `C x̄, d_i <=> C x̄` per context constraint.
    pub presentation: Vec<ChrRule>,
}

impl ClassRules {
    pub fn solving(&self) -> impl Iterator<Item = &ChrRule> {
        self.superclass.iter().chain(&self.fundeps)
    }
}

/// Translate a class declaration. Rules are named by the declaration's
/// labels in order (superclass, fundeps, presentation), else `C_super`,
/// `C_fd<i>`, `C_pres<i>`.
pub fn translate_class(decl: &ClassDecl) -> ClassRules {
    let head = decl.head();
    let mut labels = decl.labels.iter().cloned();
    let mut name = |default: String| labels.next().unwrap_or(default);
    let superclass = (!decl.context.is_empty()).then(|| {
        let body = Body::Items(decl.context.iter().cloned().map(GoalItem::Class).collect());
        ChrRule::propagation(name(format!("{}_super", decl.name)), vec![head.clone()], Vec::new(), body)
    });
    let fundeps = translate_fundep(decl)
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = fold_fundep_guard(&r);
            r.name = name(format!("{}_fd{}", decl.name, i + 1));
            r
        })
        .collect();
    let presentation = decl
        .context
        .iter()
        .enumerate()
        .map(|(i, d)| {
            ChrRule::simplification(
                name(format!("{}_pres{}", decl.name, i + 1)),
                vec![head.clone(), d.clone()],
                Vec::new(),
                Body::Items(vec![GoalItem::Class(head.clone())]),
            )
        })
        .collect();
    ClassRules { superclass, fundeps, presentation }
}

/// `C t̄ <=> d1, .., dm`, named by the label or `default_name`.
pub fn translate_instance(decl: &InstanceDecl, default_name: &str) -> ChrRule {
    let body = Body::Items(decl.context.iter().cloned().map(GoalItem::Class).collect());
    ChrRule::simplification(decl.label.clone().unwrap_or_else(|| default_name.to_string()), vec![decl.head()], Vec::new(), body)
}

fn primed(v: &Var, taken: &BTreeSet<String>) -> Var {
    let mut name = format!("{}'", v.name());
    while taken.contains(&name) {
        name.push('\'');
    }
    Var::new(name)
}

/// The general rule per dependency `x_i1 .. x_ik ~> x_i0`:
/// `C x̄, C ȳ ==> x_i1 = y_i1, .., x_ik = y_ik | x_i0 = y_i0`.
pub fn translate_fundep(decl: &ClassDecl) -> Vec<ChrRule> {
    let taken: BTreeSet<String> = decl.params.iter().map(|v| v.name().to_string()).collect();
    let copy: BTreeMap<Var, Var> = decl.params.iter().map(|v| (v.clone(), primed(v, &taken))).collect();
    let head = decl.head();
    let other = head.rename(&copy);
    decl.fundeps
        .iter()
        .enumerate()
        .map(|(i, fd)| {
            let guard = fd.from.iter().map(|x| Guard::Eq(Term::Var(x.clone()), Term::Var(copy[x].clone()))).collect();
            let body = Body::Items(vec![GoalItem::eq(Term::Var(fd.to.clone()), Term::Var(copy[&fd.to].clone()))]);
            ChrRule::propagation(format!("{}_fd{}", decl.name, i + 1), vec![head.clone(), other.clone()], guard, body)
        })
        .collect()
}

/// Fold variable-variable guard equations into the head by identifying the
/// two variables, e.g. `C e ce, C e' ce' ==> ce = ce' | e = e'` becomes
/// `C e ce, C e' ce ==> e = e'`.
pub fn fold_fundep_guard(rule: &ChrRule) -> ChrRule {
    let mut map: BTreeMap<Var, Var> = BTreeMap::new();
    let mut guard = Vec::new();
    for g in &rule.guard {
        match g {
            Guard::Eq(Term::Var(x), Term::Var(y)) => {
                let x = map.get(x).cloned().unwrap_or_else(|| x.clone());
                if &x != y {
                    map.insert(y.clone(), x);
                }
            }
            other => guard.push(other.clone()),
        }
    }
    let mut folded = rule.map_terms(&|t| t.rename(&map));
    folded.guard = guard.iter().map(|g| g.map_terms(|t| t.rename(&map))).collect();
    folded
}

/// The functional, surjective and kinding rules for `Kind1 f e fe` (`fe` is `f e`).
pub fn builtin_kind_ruleset() -> Vec<ChrRule> {
    [
        "functional @ Kind1 f e fe, Kind1 f e fe2 ==> fe = fe2",
        "surjective @ Kind1 f e fe, Kind1 f2 e2 fe ==> f = f2, e = e2",
        "kinding @ Kind1 f e fe, Kind0 f <=> False",
    ]
    .iter()
    .map(|src| parse_rule(src).expect("builtin rule parses"))
    .collect()
}

fn fresh_name(base: &str, taken: &mut BTreeSet<String>) -> Var {
    let mut name = base.to_string();
    let mut k = 1;
    while taken.contains(&name) {
        name = format!("{base}{k}");
        k += 1;
    }
    taken.insert(name.clone());
    Var::new(name)
}

/// Replace every type-variable application `f e` in `t` by a fresh variable
/// `fe` together with the constraint `Kind1 f e fe`. Fresh names avoid `avoid`.
pub fn desugar_constructor_apps(t: &Term, avoid: &BTreeSet<Var>) -> (Term, Vec<ClassConstraint>) {
    let mut taken: BTreeSet<String> = avoid.iter().map(|v| v.name().to_string()).collect();
    for v in t.vars() {
        taken.insert(v.name().to_string());
    }
    let mut out = Vec::new();
    let mut memo: BTreeMap<(Term, Term), Var> = BTreeMap::new();
    let t = desugar_term(t, &mut taken, &mut memo, &mut out);
    (t, out)
}

fn desugar_term(t: &Term, taken: &mut BTreeSet<String>, memo: &mut BTreeMap<(Term, Term), Var>, out: &mut Vec<ClassConstraint>) -> Term {
    match t {
        Term::Var(_) => t.clone(),
        Term::App(name, args) => {
            let args: Vec<Term> = args.iter().map(|a| desugar_term(a, taken, memo, out)).collect();
            if &**name != TYAPP {
                return Term::App(name.clone(), args);
            }
            let (f, e) = (args[0].clone(), args[1].clone());
            if let Some(v) = memo.get(&(f.clone(), e.clone())) {
                return Term::Var(v.clone());
            }
            let base = match (&f, &e) {
                (Term::Var(a), Term::Var(b)) => format!("{}{}", a.name(), b.name()),
                _ => "fe".to_string(),
            };
            let v = fresh_name(&base, taken);
            out.push(ClassConstraint::new("Kind1", vec![f.clone(), e.clone(), Term::Var(v.clone())]));
            memo.insert((f, e), v.clone());
            Term::Var(v)
        }
    }
}

fn desugar_scheme(s: &TypeScheme) -> TypeScheme {
    let mut avoid: BTreeSet<Var> = s.vars.iter().cloned().collect();
    avoid.extend(s.free_vars());
    let mut kinds = Vec::new();
    let (body, ks) = desugar_constructor_apps(&s.body, &avoid);
    kinds.extend(ks);
    avoid.extend(body.vars());
    let mut context = Vec::new();
    for c in &s.context {
        let mut args = Vec::new();
        for a in &c.args {
            let (a, ks) = desugar_constructor_apps(a, &avoid);
            avoid.extend(a.vars());
            kinds.extend(ks);
            args.push(a);
        }
        context.push(ClassConstraint::new(c.class.clone(), args));
    }
    // the same application in different places must denote one variable
    let mut dedup: BTreeMap<(Term, Term), Term> = BTreeMap::new();
    let mut rename: BTreeMap<Var, Var> = BTreeMap::new();
    let mut unique = Vec::new();
    for k in kinds {
        let key = (k.args[0].clone(), k.args[1].clone());
        match dedup.get(&key) {
            Some(Term::Var(v)) => {
                rename.insert(k.args[2].as_var().expect("fresh var").clone(), v.clone());
            }
            _ => {
                dedup.insert(key, k.args[2].clone());
                unique.push(k);
            }
        }
    }
    let body = body.rename(&rename);
    let context: Vec<ClassConstraint> = context.iter().map(|c| c.rename(&rename)).chain(unique).collect();
    let mut vars = s.vars.clone();
    for v in body.vars().into_iter().chain(context.iter().flat_map(ClassConstraint::vars)) {
        if !vars.contains(&v) && !s.free_vars().contains(&v) {
            vars.push(v);
        }
    }
    TypeScheme { vars, context, body }
}

fn validate_class(c: &ClassDecl) -> Result<(), DeclError> {
    let params: BTreeSet<&Var> = c.params.iter().collect();
    if params.len() != c.params.len() {
        let mut seen = BTreeSet::new();
        let var = c.params.iter().find(|v| !seen.insert(*v)).expect("duplicate").clone();
        return Err(DeclError::DuplicateParam { class: c.name.clone(), var, loc: c.loc });
    }
    for fd in &c.fundeps {
        if let Some(var) = fd.from.iter().chain([&fd.to]).find(|v| !params.contains(v)) {
            return Err(DeclError::FunDepVar { class: c.name.clone(), var: var.clone(), loc: c.loc });
        }
    }
    for d in &c.context {
        if let Some(var) = d.vars().into_iter().find(|v| !params.contains(v)) {
            return Err(DeclError::ClassContextVar { class: c.name.clone(), var, loc: c.loc });
        }
    }
    for m in &c.methods {
        if !m.ty.vars().iter().chain(m.context.iter().flat_map(ClassConstraint::vars).collect::<Vec<_>>().iter()).any(|v| params.contains(v)) {
            return Err(DeclError::MethodWithoutParam { class: c.name.clone(), method: m.name.clone(), loc: m.loc });
        }
    }
    Ok(())
}

/// Translate all declarations, append raw rules, run the termination precheck
/// and (optionally) the confluence check.
pub fn build_ruleset(program: &SurfaceProgram, opts: &DesugarOptions) -> Result<RuleSet, DeclError> {
    let mut classes: BTreeMap<String, ClassDecl> = BTreeMap::new();
    for c in program.classes() {
        validate_class(c)?;
        if classes.insert(c.name.clone(), c.clone()).is_some() {
            return Err(DeclError::DuplicateClass { name: c.name.clone(), loc: c.loc });
        }
    }

    let mut solving = Vec::new();
    let mut presentation = Vec::new();
    let mut origins = BTreeMap::new();
    let mut methods = BTreeMap::new();
    let mut instance_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &program.decls {
        match d {
            Decl::Class(c) => {
                let rules = translate_class(c);
                let origin = Origin { loc: Some(c.loc), description: format!("class {}", c.head()) };
                for r in rules.solving().chain(&rules.presentation) {
                    origins.insert(r.name.clone(), origin.clone());
                }
                solving.extend(rules.solving().cloned());
                presentation.extend(rules.presentation);
                for m in &c.methods {
                    let context = std::iter::once(c.head()).chain(m.context.iter().cloned()).collect();
                    let scheme = TypeScheme::closed(context, m.ty.clone());
                    let method = Method { class: c.name.clone(), scheme, loc: m.loc };
                    if methods.insert(m.name.clone(), method).is_some() {
                        return Err(DeclError::DuplicateMethod { name: m.name.clone(), loc: m.loc });
                    }
                }
            }
            Decl::Instance(i) => {
                let Some(class) = classes.get(&i.class) else {
                    return Err(DeclError::UnknownClass { class: i.class.clone(), loc: i.loc });
                };
                if class.params.len() != i.args.len() {
                    return Err(DeclError::InstanceArity { class: i.class.clone(), expected: class.params.len(), found: i.args.len(), loc: i.loc });
                }
                let head_vars: BTreeSet<Var> = i.head().vars().into_iter().collect();
                for d in &i.context {
                    if let Some(var) = d.vars().into_iter().find(|v| !head_vars.contains(v)) {
                        return Err(DeclError::InstanceContextVar { constraint: d.to_string(), var, loc: i.loc });
                    }
                }
                let k = instance_counts.entry(i.class.as_str()).or_insert(0);
                *k += 1;
                let rule = translate_instance(i, &format!("{}_inst{k}", i.class));
                let ctx = if i.context.is_empty() { String::new() } else { format!("{} => ", crate::pretty::comma_list(&i.context)) };
                origins.insert(rule.name.clone(), Origin { loc: Some(i.loc), description: format!("instance {ctx}{}", i.head()) });
                solving.push(rule);
            }
            Decl::Rule(r) => {
                origins.insert(r.rule.name.clone(), Origin { loc: Some(r.loc), description: format!("rule {}", r.rule.name) });
                solving.push(r.rule.clone());
            }
            Decl::Signature(_) | Decl::Binding(_) => {}
        }
    }
    if opts.kind_constraints {
        for r in builtin_kind_ruleset() {
            origins.insert(r.name.clone(), Origin { loc: None, description: "builtin kind rule".into() });
            solving.push(r);
        }
    }

    let origin_of = |err: &ProgramError| -> String {
        let name = match err {
            ProgramError::DuplicateName(n) | ProgramError::EmptyHead(n) | ProgramError::PropagatingFalse(n) => n,
            ProgramError::Arity { rule, .. } => rule,
        };
        origins.get(name).map_or_else(|| "builtin".to_string(), ToString::to_string)
    };
    let mut all = solving.clone();
    all.extend(presentation.iter().cloned());
    Program::new(all).map_err(|error| DeclError::Program { origin: origin_of(&error), error })?;
    let solving = Program::new(solving).map_err(|error| DeclError::Program { origin: origin_of(&error), error })?;
    let presentation = Program::new(presentation).map_err(|error| DeclError::Program { origin: origin_of(&error), error })?;

    let termination = check_termination_syntactic(program);
    let mut warnings = Vec::new();
    for f in &termination.failures {
        warnings.push(format!("termination precheck failed: {f}; derivations run under the fuel limit"));
    }

    let mut rules = RuleSet {
        solving,
        presentation,
        classes,
        origins,
        methods,
        termination,
        confluence: None,
        warnings,
        kind_constraints: opts.kind_constraints,
    };
    if opts.check_confluence {
        let verdict = check_confluence(&rules.solving, opts.fuel);
        match &verdict {
            ConfluenceVerdict::NonConfluent(w) => {
                let origins = (rules.origin(&w.pair.first), rules.origin(&w.pair.second));
                return Err(DeclError::NonConfluent { witness: w.clone(), origins });
            }
            ConfluenceVerdict::Inconclusive { reason } => return Err(DeclError::Inconclusive(reason.clone())),
            ConfluenceVerdict::Confluent { .. } => {}
        }
        rules.confluence = Some(verdict);
    }
    Ok(rules)
}
